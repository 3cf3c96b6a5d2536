//! Explicit conservative finite-volume solvers for the nonlinear equation
//! `du/dt = (beta(u))'' - (D b0(u) u)'` and its linearization along a frozen
//! curve `mu`, `dv/dt = (beta(mu)/mu v)'' - (D b0(mu) v)'`.
//!
//! Diffusive fluxes use central differences, transport fluxes are upwinded on
//! the sign of `D`, and the outer faces carry no flux, so the discrete mass is
//! conserved up to rounding. Each sub-step satisfies
//!
//! ```text
//! dt * (max 2 beta'(u) / (0.4 h^2) + max |D f'(u)| / (0.9 h)) <= 1,  f(u) = b0(u) u
//! ```
//!
//! which keeps the update monotone and positivity preserving.

use alloc::vec;
use alloc::vec::Vec;

use crate::coefficients::{CoefficientSet, Nemytskii};
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridDensity, MarginalFlow};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Parabolic CFL factor on `h^2 / max(2 beta')`.
    pub diffusion_cfl: f64,
    /// Hyperbolic CFL factor on `h / max |D f'|`.
    pub transport_cfl: f64,
    /// Cap on sub-steps per output interval.
    pub max_substeps: usize,
    /// Width, in cells, of the boundary layer watched for escaping mass.
    pub escape_cells: usize,
    pub escape_mass: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            diffusion_cfl: 0.4,
            transport_cfl: 0.9,
            max_substeps: 20_000_000,
            escape_cells: 10,
            escape_mass: 1e-6,
        }
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(invalid("at least one output time is required"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("output times must be strictly increasing"));
    }
    Ok(())
}

fn nemytskii(c: &CoefficientSet) -> Result<&Nemytskii> {
    let n = c
        .as_nemytskii()
        .ok_or_else(|| invalid("grid solvers take Nemytskii coefficients"))?;
    if n.dim != 1 {
        return Err(invalid("grid solvers are one-dimensional"));
    }
    Ok(n)
}

/// Transport direction at the interior faces `1..n`; entry 0 is unused.
fn face_field(n: &Nemytskii, grid: &Grid) -> Vec<f64> {
    (0..grid.n_cells()).map(|j| n.field.eval(grid.edge(j))).collect()
}

/// Nonnegative values with exact mass bookkeeping; tiny negatives are rounding.
fn finish(grid: Grid, mut values: Vec<f64>, time: f64) -> Result<GridDensity> {
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-12 {
                return Err(Error::Invariant(alloc::format!(
                    "solver produced density {v} at t = {time}"
                )));
            }
            *v = 0.0;
        }
    }
    GridDensity::new(grid, values, time)
}

fn check_escape(d: &GridDensity, cfg: &SolverConfig) -> Result<()> {
    let mass = d.boundary_mass(cfg.escape_cells);
    if mass > cfg.escape_mass {
        return Err(Error::DomainEscape {
            time: d.time(),
            mass,
        });
    }
    Ok(())
}

/// Solves the nonlinear equation from `zeta` at `times[0]` and records the
/// density at every entry of `times`.
pub fn solve_nlfpke(
    c: &CoefficientSet,
    zeta: &GridDensity,
    times: &[f64],
    cfg: &SolverConfig,
) -> Result<MarginalFlow> {
    check_times(times)?;
    let coeffs = nemytskii(c)?;
    let grid = *zeta.grid();
    let h = grid.cell_width();
    let n = grid.n_cells();
    let field = face_field(coeffs, &grid);
    let field_max = field.iter().skip(1).fold(0.0f64, |a, d| a.max(d.abs()));

    let mut u = zeta.values().to_vec();
    let mut beta = vec![0.0; n];
    let mut flux = vec![0.0; n + 1];
    let start = zeta.clone().with_time(times[0]);
    check_escape(&start, cfg)?;
    let mut out = vec![start];
    let mut counts = vec![0usize];

    for w in times.windows(2) {
        let (mut t, t_end) = (w[0], w[1]);
        let mut steps = 0usize;
        while t < t_end {
            let mut diff = 0.0f64;
            let mut speed = 0.0f64;
            for (i, z) in u.iter().enumerate() {
                beta[i] = coeffs.beta.eval(*z);
                diff = diff.max(2.0 * coeffs.beta.derivative(*z));
                if field_max > 0.0 {
                    let fp = coeffs.b0.derivative(*z) * z + coeffs.b0.eval(*z);
                    speed = speed.max(fp.abs());
                }
            }
            speed *= field_max;
            let dt = stable_step(diff, speed, h, cfg).min(t_end - t);
            for j in 1..n {
                let d = field[j];
                let transport = if d >= 0.0 {
                    d * coeffs.b0.eval(u[j - 1]) * u[j - 1]
                } else {
                    d * coeffs.b0.eval(u[j]) * u[j]
                };
                flux[j] = -(beta[j] - beta[j - 1]) / h + transport;
            }
            let r = dt / h;
            for i in 0..n {
                u[i] -= r * (flux[i + 1] - flux[i]);
            }
            t = if t_end - t <= dt * (1.0 + 1e-12) { t_end } else { t + dt };
            steps += 1;
            if steps > cfg.max_substeps {
                return Err(Error::Stiffness {
                    from: w[0],
                    to: w[1],
                    cap: cfg.max_substeps,
                });
            }
        }
        let d = finish(grid, u.clone(), t_end)?;
        check_escape(&d, cfg)?;
        u.copy_from_slice(d.values());
        out.push(d);
        counts.push(steps);
    }
    MarginalFlow::new(out, counts)
}

fn stable_step(diffusivity: f64, speed: f64, h: f64, cfg: &SolverConfig) -> f64 {
    let rate = diffusivity / (cfg.diffusion_cfl * h * h) + speed / (cfg.transport_cfl * h);
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

/// Solves the linear equation whose coefficients are evaluated on `frozen`
/// (linear interpolation in time), starting from `eta` at `times[0]`.
pub fn solve_linearized_fpke(
    c: &CoefficientSet,
    frozen: &MarginalFlow,
    eta: &GridDensity,
    times: &[f64],
    cfg: &SolverConfig,
) -> Result<MarginalFlow> {
    check_times(times)?;
    let coeffs = nemytskii(c)?;
    let grid = *eta.grid();
    grid.check_same(frozen.grid(), "linearized solve")?;
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
    let h = grid.cell_width();
    let n = grid.n_cells();
    let field = face_field(coeffs, &grid);

    let mut v = eta.values().to_vec();
    let mut mu = vec![0.0; n];
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut flux = vec![0.0; n + 1];
    let start = eta.clone().with_time(first);
    check_escape(&start, cfg)?;
    let mut out = vec![start];
    let mut counts = vec![0usize];

    for w in times.windows(2) {
        let (mut t, t_end) = (w[0], w[1]);
        let mut steps = 0usize;
        while t < t_end {
            frozen.interpolate_into(t.clamp(frozen.start_time(), frozen.end_time()), &mut mu)?;
            let mut amax = 0.0f64;
            let mut speed = 0.0f64;
            for i in 0..n {
                a[i] = coeffs.diffusivity_ratio(mu[i]);
                b[i] = coeffs.b0.eval(mu[i]);
                amax = amax.max(a[i]);
                speed = speed.max(b[i].abs());
            }
            let fmax = field.iter().skip(1).fold(0.0f64, |acc, d| acc.max(d.abs()));
            let dt = stable_step(2.0 * amax, speed * fmax, h, cfg).min(t_end - t);
            for j in 1..n {
                let d = field[j];
                let transport = if d >= 0.0 {
                    d * b[j - 1] * v[j - 1]
                } else {
                    d * b[j] * v[j]
                };
                flux[j] = -(a[j] * v[j] - a[j - 1] * v[j - 1]) / h + transport;
            }
            let r = dt / h;
            for i in 0..n {
                v[i] -= r * (flux[i + 1] - flux[i]);
            }
            t = if t_end - t <= dt * (1.0 + 1e-12) { t_end } else { t + dt };
            steps += 1;
            if steps > cfg.max_substeps {
                return Err(Error::Stiffness {
                    from: w[0],
                    to: w[1],
                    cap: cfg.max_substeps,
                });
            }
        }
        let d = finish(grid, v.clone(), t_end)?;
        check_escape(&d, cfg)?;
        v.copy_from_slice(d.values());
        out.push(d);
        counts.push(steps);
    }
    MarginalFlow::new(out, counts)
}

/// `count + 1` equally spaced times on `[from, to]`.
pub fn uniform_times(from: f64, to: f64, count: usize) -> Vec<f64> {
    let count = count.max(1);
    (0..=count)
        .map(|k| {
            if k == count {
                to
            } else {
                from + (to - from) * k as f64 / count as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::RegistryParams;
    use crate::pde::oracles::{barenblatt, heat_kernel};

    fn pme(m: f64) -> CoefficientSet {
        CoefficientSet::from_registry("pme", &RegistryParams::pme(m)).unwrap()
    }

    #[test]
    fn heat_from_gaussian_matches_kernel() {
        let g = Grid::symmetric(0.0, 8.0, 800).unwrap();
        let zeta = GridDensity::gaussian(g, 0.0, 0.2, 0.0).unwrap();
        let flow = solve_nlfpke(&pme(1.0), &zeta, &[0.0, 0.5], &SolverConfig::default()).unwrap();
        // Gaussian with variance 0.2 after time 0.5 has variance 1.2 = 2 * 0.6
        let exact = heat_kernel(-0.1, 0.0, 0.5, g).unwrap();
        assert!(flow.last().l1_distance(&exact).unwrap() < 2e-3);
    }

    #[test]
    fn mass_is_conserved_and_values_stay_nonnegative() {
        let g = Grid::symmetric(0.0, 6.0, 300).unwrap();
        let zeta = GridDensity::uniform(g, -0.5, 0.5, 0.0).unwrap();
        let flow = solve_nlfpke(&pme(3.0), &zeta, &[0.0, 0.1, 0.3], &SolverConfig::default()).unwrap();
        for d in flow.densities() {
            assert!((d.mass() - 1.0).abs() < 1e-10);
            assert!(d.values().iter().all(|v| *v >= 0.0));
        }
        assert_eq!(flow.substeps()[0], 0);
        assert!(flow.substeps()[1] > 0);
    }

    #[test]
    fn domain_escape_is_reported() {
        let g = Grid::symmetric(0.0, 1.0, 100).unwrap();
        let zeta = GridDensity::gaussian(g, 0.0, 0.05, 0.0).unwrap();
        let err = solve_nlfpke(&pme(1.0), &zeta, &[0.0, 1.0], &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DomainEscape { .. }));
    }

    #[test]
    fn stiffness_cap() {
        let g = Grid::symmetric(0.0, 4.0, 400).unwrap();
        let zeta = GridDensity::gaussian(g, 0.0, 0.1, 0.0).unwrap();
        let cfg = SolverConfig {
            max_substeps: 10,
            ..SolverConfig::default()
        };
        assert!(matches!(
            solve_nlfpke(&pme(1.0), &zeta, &[0.0, 0.1], &cfg),
            Err(Error::Stiffness { .. })
        ));
    }

    #[test]
    fn linearized_reproduces_its_own_frozen_curve() {
        let g = Grid::symmetric(0.0, 6.0, 400).unwrap();
        let c = pme(2.0);
        let zeta = barenblatt(2.0, 1, -0.1, 0.0, 0.0, g).unwrap();
        let times = uniform_times(0.0, 0.5, 50);
        let frozen = solve_nlfpke(&c, &zeta, &times, &SolverConfig::default()).unwrap();
        let lin = solve_linearized_fpke(&c, &frozen, &zeta, &times, &SolverConfig::default()).unwrap();
        for (a, b) in lin.densities().iter().zip(frozen.densities()) {
            assert!(a.l1_distance(b).unwrap() < 1e-2);
        }
    }

    #[test]
    fn linearized_range_is_checked() {
        let g = Grid::symmetric(0.0, 6.0, 200).unwrap();
        let c = pme(2.0);
        let zeta = barenblatt(2.0, 1, -0.1, 0.0, 0.0, g).unwrap();
        let frozen = solve_nlfpke(&c, &zeta, &[0.0, 0.2], &SolverConfig::default()).unwrap();
        let err = solve_linearized_fpke(&c, &frozen, &zeta, &[0.0, 0.5], &SolverConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::Range { .. }));
    }

    #[test]
    fn heat_linearization_equals_nonlinear_solve() {
        let g = Grid::symmetric(0.0, 8.0, 400).unwrap();
        let c = pme(1.0);
        let zeta = GridDensity::gaussian(g, 0.0, 0.3, 0.0).unwrap();
        let eta = GridDensity::uniform(g, -1.0, 0.5, 0.0).unwrap();
        let times = uniform_times(0.0, 0.5, 5);
        let frozen = solve_nlfpke(&c, &zeta, &times, &SolverConfig::default()).unwrap();
        let lin = solve_linearized_fpke(&c, &frozen, &eta, &times, &SolverConfig::default()).unwrap();
        let direct = solve_nlfpke(&c, &eta, &times, &SolverConfig::default()).unwrap();
        assert!(lin.last().l1_distance(direct.last()).unwrap() < 1e-10);
    }
}
