//! Two-run check of the nonlinear Markov property.
//!
//! Run A simulates from `(s, zeta)` to `t`; Run B restarts at `r` from the
//! marginal of Run A (or a supplied density) with an independent seed. If the
//! conditional law of `X_t` given `X_r` depends on the past only through
//! `X_r` and the current marginal, the binned conditional kernels of the two
//! runs agree. Radii come from a pooled two-sample bootstrap of the largest
//! scaled per-bin distance, so they hold simultaneously over all bins.

use alloc::vec;
use alloc::vec::Vec;

use super::distance::w1_samples_samples;
use super::kernel::{estimate_conditional_kernel, time_index, BinSpec};
use crate::coefficients::CoefficientSet;
use crate::error::{invalid, Error, Result};
use crate::grid::GridDensity;
use crate::particles::rng::{derive_seed, ParticleStream, Purpose};
use crate::particles::{resample_from_marginal, simulate_ddsde, InitialLaw, PathStore, SimulationConfig};

/// Where Run B starts.
#[derive(Debug, Clone, PartialEq)]
pub enum RestartFrom {
    /// The empirical marginal of Run A at `r`.
    RunA,
    /// A density at `r`, e.g. from the grid solver. `check` enables the
    /// setup comparison against Run A.
    Density { density: GridDensity, check: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovConfig {
    pub sim: SimulationConfig,
    /// Seed of Run B; derived from `sim.seed` when absent.
    pub seed_b: Option<u64>,
    pub min_count: usize,
    pub bootstrap: usize,
    pub confidence: f64,
    /// `y` bin width; twice the Silverman bandwidth at `r` when absent.
    pub bin_width: Option<f64>,
    /// Largest W1 between Run A at `r` and the Run B start before the test
    /// is aborted.
    pub setup_tolerance: f64,
    pub two_point: bool,
}

impl MarkovConfig {
    pub fn new(sim: SimulationConfig) -> Self {
        Self {
            sim,
            seed_b: None,
            min_count: 400,
            bootstrap: 200,
            confidence: 0.99,
            bin_width: None,
            setup_tolerance: 0.05,
            two_point: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointBin {
    pub w1: f64,
    pub radius: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovBin {
    pub y_center: f64,
    pub count_a: usize,
    pub count_b: usize,
    pub w1: f64,
    /// Total variation over the `z` bins.
    pub tv: f64,
    pub radius: f64,
    pub pass: bool,
    /// Center inside the interquartile range of the marginal at `r`.
    pub central: bool,
    pub two_point: Option<TwoPointBin>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovTestReport {
    pub s: f64,
    pub r: f64,
    pub t: f64,
    pub bins: Vec<MarkovBin>,
    /// Pass iff every retained bin passes.
    pub verdict: bool,
    /// Same for the two-point refinement, when run.
    pub two_point_verdict: Option<bool>,
    /// W1 between Run A at `r` and the Run B start.
    pub start_distance: f64,
    pub dropped_mass_a: f64,
    pub dropped_mass_b: f64,
    pub seed_a: u64,
    pub seed_b: u64,
    pub bootstrap_seed: u64,
}

impl MarkovTestReport {
    pub fn failed_fraction_central(&self) -> f64 {
        let central: Vec<&MarkovBin> = self.bins.iter().filter(|b| b.central).collect();
        if central.is_empty() {
            return 0.0;
        }
        central.iter().filter(|b| !b.pass).count() as f64 / central.len() as f64
    }
}

/// Intermediate time for the two-point refinement, on the `dt` lattice.
fn midpoint_time(s: f64, r: f64, dt: f64) -> Option<f64> {
    let k = libm::round((r - s) / (2.0 * dt));
    let rp = s + k * dt;
    (k >= 1.0 && rp < r - 0.5 * dt).then_some(rp)
}

pub fn test_nonlinear_markov(
    c: &CoefficientSet,
    s: f64,
    zeta: &InitialLaw,
    r: f64,
    t: f64,
    cfg: &MarkovConfig,
    restart: &RestartFrom,
) -> Result<MarkovTestReport> {
    if !(s <= r && r < t) {
        return Err(invalid("markov test needs s <= r < t"));
    }
    if cfg.bootstrap < 10 || !(cfg.confidence > 0.0 && cfg.confidence < 1.0) {
        return Err(invalid("need at least 10 bootstrap resamples and a confidence in (0, 1)"));
    }
    let seed_a = cfg.sim.seed;
    let seed_b = cfg.seed_b.unwrap_or_else(|| derive_seed(seed_a, 0x5255_4e42));
    let boot_seed = derive_seed(seed_a ^ seed_b, 0x424f_4f54);
    let n = cfg.sim.n_particles;

    let r_prime = if cfg.two_point { midpoint_time(s, r, cfg.sim.dt) } else { None };
    let mut times = vec![s];
    if let Some(rp) = r_prime {
        times.push(rp);
    }
    if r > s {
        times.push(r);
    }
    times.push(t);
    let run_a = simulate_ddsde(c, zeta, &times, &cfg.sim)?;
    let at_r = run_a.ensemble_at(r)?.into_positions();

    let start_b = match restart {
        RestartFrom::RunA => at_r.clone(),
        RestartFrom::Density { density, .. } => resample_from_marginal(density, n, seed_b)?.into_positions(),
    };
    let start_distance = w1_samples_samples(&at_r, &start_b);
    if let RestartFrom::Density { check: true, .. } = restart {
        if start_distance > cfg.setup_tolerance {
            return Err(Error::Setup(alloc::format!(
                "run B starts at W1 = {start_distance:.4} from the run A marginal (tolerance {})",
                cfg.setup_tolerance
            )));
        }
    }
    let mut sim_b = cfg.sim.clone();
    sim_b.seed = seed_b;
    let run_b = simulate_ddsde(c, &InitialLaw::Samples(start_b), &[r, t], &sim_b)?;

    let mut bins = BinSpec::from_paths(&run_a, r, t, cfg.min_count)?;
    if let Some(w) = cfg.bin_width {
        bins.y_grid = crate::grid::Grid::covering(bins.y_grid.x_min(), bins.y_grid.x_max(), w, 0.0)?;
    }
    // Run B may wander beyond Run A's range at t
    let (lo, hi) = run_b
        .column(1)
        .iter()
        .fold((bins.z_grid.x_min(), bins.z_grid.x_max()), |(a, b), x| (a.min(*x), b.max(*x)));
    bins.z_grid = crate::grid::Grid::covering(lo, hi, bins.z_grid.cell_width(), 0.0)?;
    let ka = estimate_conditional_kernel(&run_a, r, t, &bins)?;
    let kb = estimate_conditional_kernel(&run_b, r, t, &bins)?;

    let (q1, q3) = quartiles(&at_r);
    let mut pairs: Vec<(&[f64], &[f64])> = Vec::new();
    let mut out = Vec::new();
    for (ia, &b) in ka.retained.iter().enumerate() {
        let Ok(ib) = kb.retained.binary_search(&b) else {
            continue;
        };
        let (sa, sb) = (&ka.samples[ia], &kb.samples[ib]);
        let tv = 0.5
            * ka.rows[ia]
                .iter()
                .zip(&kb.rows[ib])
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>();
        let y_center = bins.y_grid.center(b);
        out.push(MarkovBin {
            y_center,
            count_a: sa.len(),
            count_b: sb.len(),
            w1: w1_samples_samples(sa, sb),
            tv,
            radius: 0.0,
            pass: false,
            central: y_center >= q1 && y_center <= q3,
            two_point: None,
        });
        pairs.push((sa, sb));
    }
    if out.is_empty() {
        return Err(Error::Setup("no bin is retained in both runs".into()));
    }
    let radii = simultaneous_radii(&pairs, cfg.bootstrap, cfg.confidence, boot_seed);
    for (bin, radius) in out.iter_mut().zip(&radii) {
        bin.radius = *radius;
        bin.pass = bin.w1 <= *radius;
    }

    let mut two_point_verdict = None;
    if let Some(rp) = r_prime {
        let split = two_point_split(&run_a, rp, r, t, &bins, &out)?;
        let refs: Vec<(&[f64], &[f64])> = split.iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
        let radii = simultaneous_radii(&refs, cfg.bootstrap, cfg.confidence, derive_seed(boot_seed, 2));
        for ((bin, (a, b)), radius) in out.iter_mut().zip(&split).zip(&radii) {
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let w1 = w1_samples_samples(a, b);
            bin.two_point = Some(TwoPointBin {
                w1,
                radius: *radius,
                pass: w1 <= *radius,
            });
        }
        two_point_verdict = Some(out.iter().filter_map(|b| b.two_point.as_ref()).all(|p| p.pass));
    }

    Ok(MarkovTestReport {
        s,
        r,
        t,
        verdict: out.iter().all(|b| b.pass),
        bins: out,
        two_point_verdict,
        start_distance,
        dropped_mass_a: ka.dropped_mass,
        dropped_mass_b: kb.dropped_mass,
        seed_a,
        seed_b,
        bootstrap_seed: boot_seed,
    })
}

/// Increments `X_t - X_r` of Run A per bin, split by the median of `X_{r'}`
/// within the bin.
fn two_point_split(
    paths: &PathStore,
    rp: f64,
    r: f64,
    t: f64,
    bins: &BinSpec,
    out: &[MarkovBin],
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let (kp, kr, kt) = (time_index(paths, rp)?, time_index(paths, r)?, time_index(paths, t)?);
    let mut split = Vec::with_capacity(out.len());
    for bin in out {
        let b = bins.y_grid.cell_of(bin.y_center).unwrap_or(0);
        let mut members: Vec<(f64, f64)> = (0..paths.n_particles())
            .map(|i| paths.path(i))
            .filter(|p| bins.y_grid.cell_of(p[kr]) == Some(b))
            .map(|p| (p[kp], p[kt] - p[kr]))
            .collect();
        members.sort_by(|x, y| x.0.total_cmp(&y.0));
        let half = members.len() / 2;
        let lower = members[..half].iter().map(|m| m.1).collect();
        let upper = members[half..].iter().map(|m| m.1).collect();
        split.push((lower, upper));
    }
    Ok(split)
}

fn quartiles(xs: &[f64]) -> (f64, f64) {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let at = |p: f64| v[((v.len() - 1) as f64 * p) as usize];
    (at(0.25), at(0.75))
}

/// Radii `q / scale_b` where `q` is the `confidence` quantile over resamples
/// of `max_b scale_b W1(A*_b, B*_b)`, resampling both groups from the pool.
fn simultaneous_radii(pairs: &[(&[f64], &[f64])], resamples: usize, confidence: f64, seed: u64) -> Vec<f64> {
    let scales: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| {
            let (na, nb) = (a.len() as f64, b.len() as f64);
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                libm::sqrt(na * nb / (na + nb))
            }
        })
        .collect();
    let mut maxima = Vec::with_capacity(resamples);
    let mut pool = Vec::new();
    let mut ra = Vec::new();
    let mut rb = Vec::new();
    for rep in 0..resamples {
        let mut stream = ParticleStream::new(seed, Purpose::Bootstrap, rep as u64);
        let mut worst = 0.0f64;
        for ((a, b), scale) in pairs.iter().zip(&scales) {
            if *scale == 0.0 {
                continue;
            }
            pool.clear();
            pool.extend_from_slice(a);
            pool.extend_from_slice(b);
            let mut draw = |out: &mut Vec<f64>, k: usize| {
                out.clear();
                for _ in 0..k {
                    let j = ((stream.uniform() * pool.len() as f64) as usize).min(pool.len() - 1);
                    out.push(pool[j]);
                }
            };
            draw(&mut ra, a.len());
            draw(&mut rb, b.len());
            worst = worst.max(scale * w1_samples_samples(&ra, &rb));
        }
        maxima.push(worst);
    }
    maxima.sort_by(|a, b| a.total_cmp(b));
    let k = libm::ceil(confidence * resamples as f64) as usize;
    let q = maxima[k.clamp(1, resamples) - 1];
    scales
        .iter()
        .map(|s| if *s > 0.0 { q / s } else { f64::INFINITY })
        .collect()
}
