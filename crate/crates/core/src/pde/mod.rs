//! Grid solvers for the nonlinear Fokker-Planck equation and its linearization,
//! closed-form oracles, and the domination check between two marginal curves.

mod oracles;
mod solver;

use alloc::vec::Vec;

pub use oracles::{
    barenblatt, barenblatt_normalization, cole_hopf_burgers, cole_hopf_raw, heat_kernel,
    sphere_area, Barenblatt, ColeHopfSolution,
};
pub use solver::{solve_linearized_fpke, solve_nlfpke, uniform_times, SolverConfig};

use crate::coefficients::{CoefficientSet, MeanFieldKernel, DEFAULT_DENSITY_FLOOR};
use crate::error::{invalid, Result};
use crate::grid::{Grid, GridDensity, MarginalFlow, MASS_TOLERANCE};

/// Smallest `C` with `nu_t <= C mu_t` at every checked time.
#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport {
    pub c_star: f64,
    /// `(t, max nu_t / mu_t)` per time.
    pub per_time: Vec<(f64, f64)>,
}

/// Per-time supremum of `nu / mu` over cells where `mu > floor`. If `nu`
/// carries more than [`MASS_TOLERANCE`] of mass on cells where `mu <= floor`
/// the ratio is infinite; below that the cells are rounding-level tails.
pub fn check_domination(nu: &MarginalFlow, mu: &MarginalFlow, floor: f64) -> Result<DominationReport> {
    nu.grid().check_same(mu.grid(), "domination check")?;
    if nu.len() != mu.len() || nu.times().zip(mu.times()).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs())) {
        return Err(crate::error::Error::GridMismatch("time grids differ".into()));
    }
    let h = nu.grid().cell_width();
    let per_time: Vec<(f64, f64)> = nu
        .densities()
        .iter()
        .zip(mu.densities())
        .map(|(n, m)| {
            let mut ratio = 0.0f64;
            let mut stray = 0.0;
            for (a, b) in n.values().iter().zip(m.values()) {
                if *b > floor {
                    ratio = ratio.max(a / b);
                } else {
                    stray += a * h;
                }
            }
            if stray > MASS_TOLERANCE {
                ratio = f64::INFINITY;
            }
            (n.time(), ratio)
        })
        .collect();
    let c_star = per_time.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(DominationReport { c_star, per_time })
}

/// [`check_domination`] with the default density floor.
pub fn check_domination_default(nu: &MarginalFlow, mu: &MarginalFlow) -> Result<DominationReport> {
    check_domination(nu, mu, DEFAULT_DENSITY_FLOOR)
}

/// A perturbation `eta = g zeta` of an initial datum with `lo <= g <= hi`, so
/// that `eta <= hi * zeta`.
#[derive(Debug, Clone, PartialEq)]
pub struct DominatedPerturbation {
    pub density: GridDensity,
    pub g_min: f64,
    pub g_max: f64,
    /// Location of the logistic step in `g`.
    pub step_center: f64,
}

/// Builds `g(x) = lo + (hi - lo) / (1 + exp(-(x - c) / width))` with `c`
/// chosen by bisection so that `g zeta` has unit mass.
pub fn dominated_perturbation(zeta: &GridDensity, lo: f64, hi: f64, width: f64) -> Result<DominatedPerturbation> {
    if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0 && width > 0.0) {
        return Err(invalid("need 0 < lo <= 1 <= hi and a positive step width"));
    }
    let grid = *zeta.grid();
    let h = grid.cell_width();
    let g = |x: f64, c: f64| lo + (hi - lo) / (1.0 + libm::exp(-(x - c) / width));
    let mass = |c: f64| -> f64 {
        zeta.values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * h * g(grid.center(i), c))
            .sum()
    };
    // mass(c) decreases from hi to lo as c increases
    let (mut a, mut b) = (grid.x_min() - 40.0 * width, grid.x_max() + 40.0 * width);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mass(mid) > 1.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let c = 0.5 * (a + b);
    let density = zeta.reweighted(|x| g(x, c))?;
    Ok(DominatedPerturbation {
        density,
        g_min: lo,
        g_max: hi,
        step_center: c,
    })
}

/// Domain sizing for a solve from data supported in `support` over `elapsed`
/// time: eight Barenblatt support radii for porous media (`m > 1`), twelve
/// standard deviations of the Brownian part otherwise, plus the initial extent
/// and any transport displacement.
pub fn auto_grid(c: &CoefficientSet, support: (f64, f64), elapsed: f64, n_cells: usize) -> Result<Grid> {
    if !(support.1 >= support.0) || !(elapsed > 0.0) {
        return Err(invalid("auto grid needs an ordered support and positive elapsed time"));
    }
    let center = 0.5 * (support.0 + support.1);
    let initial = 0.5 * (support.1 - support.0);
    let half = match c {
        CoefficientSet::Nemytskii(n) => {
            let transport = {
                let f = n.field.eval(center).abs();
                // b0 is evaluated at a generous density bound
                let b = n.b0.eval(1.0 / (2.0 * initial.max(1e-3))).abs();
                f * b * elapsed
            };
            match n.m {
                Some(m) if m > 1.0 => {
                    let bb = Barenblatt::new(m, 1)?;
                    initial + 8.0 * bb.support_radius(elapsed) + transport
                }
                _ => initial + 12.0 * libm::sqrt(2.0 * elapsed) + transport,
            }
        }
        CoefficientSet::MeanField(mf) => {
            let hmax = match &mf.h {
                MeanFieldKernel::Bump { height, .. } => height.abs(),
                MeanFieldKernel::Tabulated { ys, .. } => ys.iter().fold(0.0f64, |a, y| a.max(y.abs())),
            };
            initial + hmax * elapsed + 12.0 * mf.sigma * libm::sqrt(elapsed) + 1.0
        }
    };
    Grid::symmetric(center, half, n_cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::RegistryParams;

    fn flow_of(ds: Vec<GridDensity>) -> MarginalFlow {
        let n = ds.len();
        MarginalFlow::new(ds, alloc::vec![0; n]).unwrap()
    }

    #[test]
    fn domination_of_identical_flows_is_one() {
        let g = Grid::symmetric(0.0, 3.0, 60).unwrap();
        let a = GridDensity::gaussian(g, 0.0, 0.3, 0.0).unwrap();
        let f = flow_of(alloc::vec![a.clone(), a.with_time(1.0)]);
        let r = check_domination_default(&f, &f).unwrap();
        assert!((r.c_star - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_support_is_not_dominated() {
        let g = Grid::symmetric(0.0, 3.0, 60).unwrap();
        let a = flow_of(alloc::vec![GridDensity::uniform(g, -2.0, -1.0, 0.0).unwrap()]);
        let b = flow_of(alloc::vec![GridDensity::uniform(g, 1.0, 2.0, 0.0).unwrap()]);
        assert_eq!(check_domination_default(&a, &b).unwrap().c_star, f64::INFINITY);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = flow_of(alloc::vec![GridDensity::uniform(Grid::symmetric(0.0, 3.0, 60).unwrap(), -1.0, 1.0, 0.0).unwrap()]);
        let b = flow_of(alloc::vec![GridDensity::uniform(Grid::symmetric(0.0, 3.0, 61).unwrap(), -1.0, 1.0, 0.0).unwrap()]);
        assert!(check_domination_default(&a, &b).is_err());
    }

    #[test]
    fn perturbation_stays_in_band() {
        let g = Grid::symmetric(0.0, 4.0, 400).unwrap();
        let zeta = GridDensity::gaussian(g, 0.0, 0.5, 0.0).unwrap();
        let p = dominated_perturbation(&zeta, 0.5, 2.0, 0.3).unwrap();
        assert!((p.density.mass() - 1.0).abs() < 1e-12);
        for (e, z) in p.density.values().iter().zip(zeta.values()) {
            if *z > 1e-12 {
                let ratio = e / z;
                assert!((0.5 - 1e-9..=2.0 + 1e-9).contains(&ratio), "{ratio}");
            }
        }
        assert!(dominated_perturbation(&zeta, 1.5, 2.0, 0.3).is_err());
    }

    #[test]
    fn auto_grid_widths() {
        let heat = CoefficientSet::from_registry("heat", &RegistryParams::default()).unwrap();
        let g = auto_grid(&heat, (0.0, 0.0), 1.0, 100).unwrap();
        assert!((g.x_max() - 12.0 * libm::sqrt(2.0)).abs() < 1e-12);
        let pme = CoefficientSet::from_registry("pme", &RegistryParams::pme(2.0)).unwrap();
        let g = auto_grid(&pme, (0.0, 0.0), 1.0, 100).unwrap();
        let r = Barenblatt::new(2.0, 1).unwrap().support_radius(1.0);
        assert!((g.x_max() - 8.0 * r).abs() < 1e-12);
    }
}
