//! Restart invariance `mu^{s,zeta}_t = mu^{r, mu^{s,zeta}_r}_t`.

use crate::coefficients::CoefficientSet;
use crate::error::{invalid, Result};
use crate::grid::GridDensity;
use crate::particles::rng::derive_seed;
use crate::particles::{simulate_ddsde, InitialLaw, SimulationConfig};
use crate::pde::{solve_nlfpke, SolverConfig};
use crate::verify::distance::w1_samples_samples;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMetric {
    L1,
    W1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    pub metric: FlowMetric,
    pub distance: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn check_order(s: f64, r: f64, t: f64, tol: f64) -> Result<()> {
    if !(s <= r && r <= t) {
        return Err(invalid("flow test needs s <= r <= t"));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    Ok(())
}

/// Grid solve: `s -> t` in one go against `s -> r -> t` restarted from the
/// stored density at `r`.
pub fn test_flow_property_pde(
    c: &CoefficientSet,
    zeta: &GridDensity,
    s: f64,
    r: f64,
    t: f64,
    tol: f64,
    cfg: &SolverConfig,
) -> Result<FlowReport> {
    check_order(s, r, t, tol)?;
    let zeta = zeta.clone().with_time(s);
    let direct = solve_to(c, &zeta, s, t, cfg)?;
    let mid = solve_to(c, &zeta, s, r, cfg)?;
    let restarted = solve_to(c, &mid, r, t, cfg)?;
    let distance = direct.l1_distance(&restarted)?;
    Ok(FlowReport {
        metric: FlowMetric::L1,
        distance,
        tolerance: tol,
        pass: distance <= tol,
    })
}

fn solve_to(c: &CoefficientSet, from: &GridDensity, a: f64, b: f64, cfg: &SolverConfig) -> Result<GridDensity> {
    if b == a {
        return Ok(from.clone());
    }
    Ok(solve_nlfpke(c, from, &[a, b], cfg)?.last().clone())
}

/// Particle version: the direct run is restarted at `r` from its own
/// empirical marginal with a derived seed.
pub fn test_flow_property_particles(
    c: &CoefficientSet,
    zeta: &InitialLaw,
    s: f64,
    r: f64,
    t: f64,
    tol: f64,
    cfg: &SimulationConfig,
) -> Result<FlowReport> {
    check_order(s, r, t, tol)?;
    let mut times = alloc::vec![s];
    for x in [r, t] {
        if x > times[times.len() - 1] {
            times.push(x);
        }
    }
    let direct = simulate_ddsde(c, zeta, &times, cfg)?;
    let at_t = direct.column(times.len() - 1);
    let at_r = direct.ensemble_at(r)?.into_positions();
    let restarted = if r < t {
        let mut cfg_b = cfg.clone();
        cfg_b.seed = derive_seed(cfg.seed, 0x5245_5354);
        simulate_ddsde(c, &InitialLaw::Samples(at_r), &[r, t], &cfg_b)?.column(1)
    } else {
        at_r
    };
    let distance = w1_samples_samples(&at_t, &restarted);
    Ok(FlowReport {
        metric: FlowMetric::W1,
        distance,
        tolerance: tol,
        pass: distance <= tol,
    })
}
