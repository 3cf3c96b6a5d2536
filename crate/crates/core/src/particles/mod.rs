//! Interacting-particle approximation of distribution-dependent SDEs.

mod kde;
pub mod rng;
mod sde;

use alloc::vec::Vec;

pub use kde::{bin_linear, estimate_density, silverman_bandwidth, Bandwidth, KdeSpec, KdeWorkspace, Kernel};
pub use sde::{simulate_ddsde, simulate_linearized_sde, SchemeMetadata, SimulationConfig};

use crate::error::{invalid, Result};
use crate::grid::GridDensity;
use rng::{ParticleStream, Purpose};

/// Equally weighted particle positions at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    positions: Vec<f64>,
    time: f64,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<f64>, time: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(invalid("an ensemble needs at least one particle"));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(invalid("particle positions must be finite"));
        }
        Ok(Self { positions, time })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn into_positions(self) -> Vec<f64> {
        self.positions
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.positions.iter().sum::<f64>() / self.positions.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.positions.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / self.positions.len() as f64
    }
}

/// Initial laws the simulators can sample.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Dirac(f64),
    Uniform(f64, f64),
    Gaussian { mean: f64, variance: f64 },
    Density(GridDensity),
    Samples(Vec<f64>),
}

impl InitialLaw {
    pub fn is_dirac(&self) -> bool {
        match self {
            InitialLaw::Dirac(_) => true,
            InitialLaw::Samples(s) => s.windows(2).all(|w| w[0] == w[1]),
            _ => false,
        }
    }

    /// Interval containing (almost all of) the law.
    pub fn support(&self) -> (f64, f64) {
        match self {
            InitialLaw::Dirac(x) => (*x, *x),
            InitialLaw::Uniform(a, b) => (*a, *b),
            InitialLaw::Gaussian { mean, variance } => {
                let s = 8.0 * libm::sqrt(*variance);
                (mean - s, mean + s)
            }
            InitialLaw::Density(d) => {
                let g = d.grid();
                let first = d.values().iter().position(|v| *v > 0.0).unwrap_or(0);
                let last = d.values().iter().rposition(|v| *v > 0.0).unwrap_or(g.n_cells() - 1);
                (g.edge(first), g.edge(last + 1))
            }
            InitialLaw::Samples(s) => s
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x))),
        }
    }

    /// `n` iid draws (or the stored samples, which must number `n`).
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(invalid("at least one particle is required"));
        }
        let draw = |i: usize| ParticleStream::new(seed, Purpose::InitialLaw, i as u64);
        match self {
            InitialLaw::Dirac(x) => Ok(alloc::vec![*x; n]),
            InitialLaw::Uniform(a, b) => {
                if !(b > a) {
                    return Err(invalid("uniform law needs a < b"));
                }
                Ok((0..n).map(|i| a + (b - a) * draw(i).uniform()).collect())
            }
            InitialLaw::Gaussian { mean, variance } => {
                if !(*variance > 0.0) {
                    return Err(invalid("gaussian law needs a positive variance"));
                }
                let sd = libm::sqrt(*variance);
                Ok((0..n).map(|i| mean + sd * draw(i).normal()).collect())
            }
            InitialLaw::Density(d) => Ok(resample_from_marginal(d, n, seed)?.into_positions()),
            InitialLaw::Samples(s) => {
                if s.len() != n {
                    return Err(invalid(alloc::format!(
                        "{} stored samples but {n} particles requested",
                        s.len()
                    )));
                }
                Ok(s.clone())
            }
        }
    }
}

/// Inverse-CDF sampling from the piecewise-linear distribution function of `u`.
pub fn resample_from_marginal(u: &GridDensity, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(invalid("at least one particle is required"));
    }
    let cdf = u.edge_cdf();
    let total = cdf[cdf.len() - 1];
    let g = u.grid();
    let positions = (0..n)
        .map(|i| {
            let p = ParticleStream::new(seed, Purpose::Resample, i as u64).uniform() * total;
            // first edge with cdf > p, skipping empty cells
            let k = cdf.partition_point(|c| *c <= p).clamp(1, cdf.len() - 1);
            let cell = k - 1;
            let mass = cdf[k] - cdf[cell];
            let frac = if mass > 0.0 { (p - cdf[cell]) / mass } else { 0.5 };
            g.edge(cell) + frac.clamp(0.0, 1.0) * g.cell_width()
        })
        .collect();
    ParticleEnsemble::new(positions, u.time())
}

/// Particle trajectories sampled on an output time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStore {
    times: Vec<f64>,
    /// Particle-major: `trajectories[i * times.len() + k]`.
    trajectories: Vec<f64>,
    n_particles: usize,
    seed: u64,
    pub scheme: SchemeMetadata,
}

impl PathStore {
    pub fn from_parts(
        times: Vec<f64>,
        trajectories: Vec<f64>,
        n_particles: usize,
        seed: u64,
        scheme: SchemeMetadata,
    ) -> Result<Self> {
        if times.is_empty() || n_particles == 0 {
            return Err(invalid("a path store needs at least one time and one particle"));
        }
        if trajectories.len() != times.len() * n_particles {
            return Err(invalid("trajectory buffer does not match N x times"));
        }
        Ok(Self {
            times,
            trajectories,
            n_particles,
            seed,
            scheme,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trajectories(&self) -> &[f64] {
        &self.trajectories
    }

    pub fn into_trajectories(self) -> Vec<f64> {
        self.trajectories
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let t = self.times.len();
        &self.trajectories[i * t..(i + 1) * t]
    }

    /// Index of the stored time equal to `t`.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .position(|s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        let t = self.times.len();
        (0..self.n_particles)
            .map(|i| self.trajectories[i * t + k])
            .collect()
    }

    /// Positions at stored time `t`.
    pub fn ensemble_at(&self, t: f64) -> Result<ParticleEnsemble> {
        let k = self
            .time_index(t)
            .ok_or_else(|| invalid(alloc::format!("time {t} is not an output time")))?;
        ParticleEnsemble::new(self.column(k), self.times[k])
    }
}
