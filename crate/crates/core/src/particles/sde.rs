//! Euler-Maruyama particle systems.
//!
//! `simulate_ddsde` re-estimates the density from the live ensemble and feeds
//! it back into the coefficients; `simulate_linearized_sde` reads the
//! coefficients off a frozen marginal flow instead.

use alloc::vec;
use alloc::vec::Vec;

use super::kde::{silverman_bandwidth, Bandwidth, KdeSpec, KdeWorkspace, Kernel};
use super::rng::{ParticleStream, Purpose};
use super::{InitialLaw, PathStore};
use crate::coefficients::{CoefficientSet, MeanFieldKernel};
use crate::error::{invalid, Error, Result};
use crate::grid::{interpolate_cells, Grid, MarginalFlow};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n_particles: usize,
    pub dt: f64,
    pub kde: KdeSpec,
    pub seed: u64,
    /// Sub-steps run with bandwidth `sqrt(dt)` after a point-mass start.
    pub bootstrap_steps: usize,
    /// Density re-estimated every this many sub-steps.
    pub feedback_every: usize,
}

impl SimulationConfig {
    pub fn new(n_particles: usize, dt: f64, kde: KdeSpec, seed: u64) -> Self {
        Self {
            n_particles,
            dt,
            kde,
            seed,
            bootstrap_steps: 10,
            feedback_every: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(invalid("at least one particle is required"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt must be positive"));
        }
        if self.feedback_every == 0 {
            return Err(invalid("feedback cadence must be at least one sub-step"));
        }
        if let Bandwidth::Fixed(b) = self.kde.bandwidth {
            if !(b > 0.0) {
                return Err(invalid("fixed bandwidth must be positive"));
            }
        }
        Ok(())
    }
}

/// How a [`PathStore`] was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeMetadata {
    pub dt: f64,
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    pub density_floor: f64,
    pub feedback_every: usize,
    pub bootstrap_steps: usize,
    /// Grid the density was estimated on, after any expansion.
    pub kde_grid: Grid,
    pub expansions: u32,
    /// Range of all drift evaluations during the run.
    pub drift_min: f64,
    pub drift_max: f64,
    /// Bandwidth of the last density estimate (0 when none was needed).
    pub last_bandwidth: f64,
    /// True when the coefficients came from a frozen flow.
    pub linearized: bool,
}

/// Sub-step counts per output interval; `dt` must divide every gap.
fn step_counts(times: &[f64], dt: f64) -> Result<Vec<usize>> {
    if times.is_empty() {
        return Err(invalid("at least one output time is required"));
    }
    times
        .windows(2)
        .map(|w| {
            let gap = w[1] - w[0];
            if !(gap > 0.0) {
                return Err(invalid("output times must be strictly increasing"));
            }
            let k = libm::round(gap / dt);
            if k < 1.0 || (k * dt - gap).abs() > 1e-9 * gap.max(1.0) {
                return Err(invalid(alloc::format!("dt = {dt} does not divide the gap {gap}")));
            }
            Ok(k as usize)
        })
        .collect()
}

fn density_floor(c: &CoefficientSet) -> f64 {
    c.as_nemytskii().map_or(0.0, |n| n.density_floor)
}

/// Shared Euler-Maruyama loop. `coefficients(step, t, positions, out)` fills
/// `(drift, diffusion)` per particle for the sub-step starting at `t`.
struct Stepper {
    streams: Vec<ParticleStream>,
    positions: Vec<f64>,
    trajectories: Vec<f64>,
    n_times: usize,
}

impl Stepper {
    fn new(positions: Vec<f64>, seed: u64, n_times: usize) -> Self {
        let n = positions.len();
        let streams = (0..n as u64)
            .map(|i| ParticleStream::new(seed, Purpose::Increments, i))
            .collect();
        let mut s = Self {
            streams,
            positions,
            trajectories: vec![0.0; n * n_times],
            n_times,
        };
        s.record(0);
        s
    }

    fn record(&mut self, k: usize) {
        let t = self.n_times;
        for (i, x) in self.positions.iter().enumerate() {
            self.trajectories[i * t + k] = *x;
        }
    }

    fn advance(&mut self, coeffs: &[(f64, f64)], dt: f64, time: f64) -> Result<()> {
        let sq = libm::sqrt(dt);
        for (i, ((x, s), (b, sigma))) in self
            .positions
            .iter_mut()
            .zip(self.streams.iter_mut())
            .zip(coeffs)
            .enumerate()
        {
            // the draw is consumed even when sigma is zero to keep streams aligned
            let z = s.normal();
            *x += b * dt + sigma * sq * z;
            if !x.is_finite() {
                return Err(Error::NonFinite { index: i, time });
            }
        }
        Ok(())
    }
}

fn first_outside(positions: &[f64], grid: &Grid) -> Option<usize> {
    positions
        .iter()
        .position(|x| !(*x >= grid.x_min() && *x <= grid.x_max()))
}

/// Simulates the distribution-dependent SDE from `zeta` at `times[0]`, feeding
/// a kernel estimate of the live law back into the coefficients.
pub fn simulate_ddsde(
    c: &CoefficientSet,
    zeta: &InitialLaw,
    times: &[f64],
    cfg: &SimulationConfig,
) -> Result<PathStore> {
    cfg.validate()?;
    if c.dim() != 1 {
        return Err(invalid("particle simulation is one-dimensional"));
    }
    let counts = step_counts(times, cfg.dt)?;
    let n = cfg.n_particles;
    let initial = zeta.sample(n, cfg.seed)?;
    let dirac = zeta.is_dirac();
    let mut grid = cfg.kde.grid;
    let mut expansions = 0u32;
    let mut ws = KdeWorkspace::new(&grid);
    let mut density: Vec<f64> = Vec::new();
    let mut bandwidth = 0.0;
    let mut coeffs = vec![(0.0, 0.0); n];
    let (mut drift_min, mut drift_max) = (f64::INFINITY, f64::NEG_INFINITY);

    let mut st = Stepper::new(initial, cfg.seed, times.len());
    let mut step = 0usize;
    for (k, (w, steps)) in times.windows(2).zip(&counts).enumerate() {
        for j in 0..*steps {
            let t = w[0] + j as f64 * cfg.dt;
            match c {
                CoefficientSet::MeanField(mf) => {
                    let b = mf.h.mean_over(&st.positions);
                    coeffs.iter_mut().for_each(|p| *p = (b, mf.sigma));
                }
                CoefficientSet::Nemytskii(nm) => {
                    if let Some(index) = first_outside(&st.positions, &grid) {
                        if expansions > 0 {
                            return Err(Error::ParticleEscape {
                                index,
                                time: t,
                                x: st.positions[index],
                            });
                        }
                        grid = grid.expanded();
                        expansions += 1;
                        if let Some(index) = first_outside(&st.positions, &grid) {
                            return Err(Error::ParticleEscape {
                                index,
                                time: t,
                                x: st.positions[index],
                            });
                        }
                        density.clear();
                    }
                    if density.is_empty() || step.is_multiple_of(cfg.feedback_every) {
                        bandwidth = if dirac && step < cfg.bootstrap_steps {
                            libm::sqrt(cfg.dt)
                        } else {
                            match cfg.kde.bandwidth {
                                Bandwidth::Fixed(b) => b,
                                Bandwidth::Silverman => silverman_bandwidth(&st.positions)?,
                            }
                        };
                        density.clear();
                        density.extend_from_slice(ws.estimate(&st.positions, &grid, cfg.kde.kernel, bandwidth)?);
                    }
                    for (p, x) in coeffs.iter_mut().zip(&st.positions) {
                        let z = interpolate_cells(&grid, &density, *x);
                        *p = (nm.drift_local(z, *x), nm.diffusion_local(z));
                    }
                }
            }
            for (b, _) in &coeffs {
                drift_min = drift_min.min(*b);
                drift_max = drift_max.max(*b);
            }
            st.advance(&coeffs, cfg.dt, t + cfg.dt)?;
            step += 1;
        }
        st.record(k + 1);
    }

    let scheme = SchemeMetadata {
        dt: cfg.dt,
        kernel: cfg.kde.kernel,
        bandwidth: cfg.kde.bandwidth,
        density_floor: density_floor(c),
        feedback_every: cfg.feedback_every,
        bootstrap_steps: if dirac { cfg.bootstrap_steps } else { 0 },
        kde_grid: grid,
        expansions,
        drift_min,
        drift_max,
        last_bandwidth: bandwidth,
        linearized: false,
    };
    PathStore::from_parts(times.to_vec(), st.trajectories, n, cfg.seed, scheme)
}

/// Simulates the linear SDE whose coefficients are read off `frozen`
/// (linear interpolation in time), starting from `eta` at `times[0]`.
/// The KDE part of `cfg` is ignored.
pub fn simulate_linearized_sde(
    c: &CoefficientSet,
    frozen: &MarginalFlow,
    eta: &InitialLaw,
    times: &[f64],
    cfg: &SimulationConfig,
) -> Result<PathStore> {
    cfg.validate()?;
    if c.dim() != 1 {
        return Err(invalid("particle simulation is one-dimensional"));
    }
    let counts = step_counts(times, cfg.dt)?;
    let (first, last) = (times[0], times[times.len() - 1]);
    let slack = 1e-12 * (1.0 + last.abs());
    if frozen.start_time() > first + slack || frozen.end_time() < last - slack {
        return Err(Error::Range {
            have_from: frozen.start_time(),
            have_to: frozen.end_time(),
            need_from: first,
            need_to: last,
        });
    }
    let n = cfg.n_particles;
    let grid = *frozen.grid();
    let mut mu = vec![0.0; grid.n_cells()];
    let mut coeffs = vec![(0.0, 0.0); n];
    let (mut drift_min, mut drift_max) = (f64::INFINITY, f64::NEG_INFINITY);

    let mut st = Stepper::new(eta.sample(n, cfg.seed)?, cfg.seed, times.len());
    for (k, (w, steps)) in times.windows(2).zip(&counts).enumerate() {
        for j in 0..*steps {
            let t = w[0] + j as f64 * cfg.dt;
            frozen.interpolate_into(t.clamp(frozen.start_time(), frozen.end_time()), &mut mu)?;
            if let Some(index) = first_outside(&st.positions, &grid) {
                return Err(Error::ParticleEscape {
                    index,
                    time: t,
                    x: st.positions[index],
                });
            }
            match c {
                CoefficientSet::MeanField(mf) => {
                    let b = integrate_cells(&mf.h, &grid, &mu);
                    coeffs.iter_mut().for_each(|p| *p = (b, mf.sigma));
                }
                CoefficientSet::Nemytskii(nm) => {
                    for (p, x) in coeffs.iter_mut().zip(&st.positions) {
                        let z = interpolate_cells(&grid, &mu, *x);
                        *p = (nm.drift_local(z, *x), nm.diffusion_local(z));
                    }
                }
            }
            for (b, _) in &coeffs {
                drift_min = drift_min.min(*b);
                drift_max = drift_max.max(*b);
            }
            st.advance(&coeffs, cfg.dt, t + cfg.dt)?;
        }
        st.record(k + 1);
    }

    let scheme = SchemeMetadata {
        dt: cfg.dt,
        kernel: cfg.kde.kernel,
        bandwidth: cfg.kde.bandwidth,
        density_floor: density_floor(c),
        feedback_every: cfg.feedback_every,
        bootstrap_steps: 0,
        kde_grid: grid,
        expansions: 0,
        drift_min,
        drift_max,
        last_bandwidth: 0.0,
        linearized: true,
    };
    PathStore::from_parts(times.to_vec(), st.trajectories, n, cfg.seed, scheme)
}

fn integrate_cells(h: &MeanFieldKernel, grid: &Grid, values: &[f64]) -> f64 {
    let w = grid.cell_width();
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| v * w * h.eval(grid.center(i)))
        .sum()
}
