//! Chapman-Kolmogorov composition for porous-media flows from point masses.
//!
//! The left side solves from `delta_{x0}` at `s` to `t`. The right side
//! mixes solutions started at `r` from `delta_y` over probe points `y`,
//! weighted by the marginal at `r`. Linear flows compose; nonlinear ones do
//! not, because a point mass spreads at a rate set by its own density.

use alloc::vec;
use alloc::vec::Vec;

use crate::coefficients::{CoefficientSet, RegistryParams};
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridDensity};
use crate::pde::{solve_nlfpke, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSpec {
    /// Every `stride`-th cell is a probe; cell masses are split linearly
    /// between neighbouring probes.
    pub stride: usize,
    /// Probes with less weight are skipped (weights are renormalized).
    pub min_weight: f64,
    /// Largest accepted L1 distance between the right side at `stride` and
    /// at `2 stride`.
    pub self_tolerance: f64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            stride: 2,
            min_weight: 1e-10,
            self_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CkReport {
    pub m: f64,
    /// L1 distance between the two sides.
    pub residual: f64,
    /// L1 distance between the right sides at `stride` and `2 stride`.
    pub quadrature_estimate: f64,
    pub probes: usize,
    pub lhs: GridDensity,
    pub rhs: GridDensity,
    /// W1 distance between the two sides.
    pub w1: f64,
    /// Variances of the two sides.
    pub lhs_variance: f64,
    pub rhs_variance: f64,
}

/// Probe cells `c = anchor (mod stride)` with hat-function weights: the mass
/// of a cell between two probes is split linearly between them, which keeps
/// the mean of `mu` exact.
fn probes(mu: &GridDensity, stride: usize, anchor: usize, min_weight: f64) -> Vec<(usize, f64)> {
    let n = mu.grid().n_cells();
    let h = mu.grid().cell_width();
    let first = anchor % stride;
    let last = first + (n - 1 - first) / stride * stride;
    let mut weights = vec![0.0; n];
    for (i, v) in mu.values().iter().enumerate() {
        let m = v * h;
        if i <= first {
            weights[first] += m;
        } else if i >= last {
            weights[last] += m;
        } else {
            let k = first + (i - first) / stride * stride;
            let frac = (i - k) as f64 / stride as f64;
            weights[k] += (1.0 - frac) * m;
            if frac > 0.0 {
                weights[k + stride] += frac * m;
            }
        }
    }
    let mut out: Vec<(usize, f64)> = weights
        .into_iter()
        .enumerate()
        .filter(|(_, w)| *w > min_weight)
        .collect();
    let total: f64 = out.iter().map(|p| p.1).sum();
    out.iter_mut().for_each(|p| p.1 /= total);
    out
}

fn mix(grid: Grid, probes: &[(usize, f64)], solutions: &[(usize, Vec<f64>)], time: f64) -> Result<GridDensity> {
    let mut values = vec![0.0; grid.n_cells()];
    for (cell, w) in probes {
        let k = solutions
            .binary_search_by_key(cell, |s| s.0)
            .map_err(|_| Error::Numeric("missing probe solution".into()))?;
        for (v, u) in values.iter_mut().zip(&solutions[k].1) {
            *v += w * u;
        }
    }
    GridDensity::normalized(grid, values, time)
}

/// Composition residual for PME(`m`) on `grid` from `delta_{x0}` at `s`.
pub fn test_ck_violation(
    m: f64,
    s: f64,
    x0: f64,
    r: f64,
    t: f64,
    grid: Grid,
    probe: &ProbeSpec,
    cfg: &SolverConfig,
) -> Result<CkReport> {
    if !(m >= 1.0) {
        return Err(invalid("composition test needs m >= 1"));
    }
    if !(s <= r && r <= t) {
        return Err(invalid("composition test needs s <= r <= t"));
    }
    if probe.stride == 0 {
        return Err(invalid("probe stride must be positive"));
    }
    let c = CoefficientSet::from_registry("pme", &RegistryParams::pme(m))?;
    let solve = |from: GridDensity, a: f64, b: f64| -> Result<GridDensity> {
        if b <= a {
            return Ok(from.with_time(b));
        }
        Ok(solve_nlfpke(&c, &from, &[a, b], cfg)?.last().clone())
    };
    let start = GridDensity::dirac(grid, x0, s)?;
    let mu_r = solve(start.clone(), s, r)?;
    let lhs = solve(mu_r.clone(), r, t)?;

    let anchor = grid
        .cell_of(x0)
        .ok_or(Error::Domain { x: x0, lo: grid.x_min(), hi: grid.x_max() })?;
    let fine = probes(&mu_r, probe.stride, anchor, probe.min_weight);
    let coarse = probes(&mu_r, 2 * probe.stride, anchor, probe.min_weight);
    let mut cells: Vec<usize> = fine.iter().chain(&coarse).map(|p| p.0).collect();
    cells.sort_unstable();
    cells.dedup();
    let mut solutions = Vec::with_capacity(cells.len());
    for cell in cells {
        let y = grid.center(cell);
        let u = solve(GridDensity::dirac(grid, y, r)?, r, t)?;
        solutions.push((cell, u.into_values()));
    }
    let rhs = mix(grid, &fine, &solutions, t)?;
    let rhs_coarse = mix(grid, &coarse, &solutions, t)?;
    let quadrature_estimate = if probe.stride == 1 && r == t {
        0.0
    } else {
        rhs.l1_distance(&rhs_coarse)?
    };
    if quadrature_estimate > probe.self_tolerance {
        return Err(Error::Setup(alloc::format!(
            "probe stride {} too coarse: quadrature self-estimate {quadrature_estimate:.3e} exceeds {}",
            probe.stride, probe.self_tolerance
        )));
    }
    let residual = lhs.l1_distance(&rhs)?;
    Ok(CkReport {
        m,
        residual,
        quadrature_estimate,
        probes: fine.len(),
        w1: crate::verify::distance::w1_grid_grid(&lhs, &rhs),
        lhs_variance: lhs.variance(),
        rhs_variance: rhs.variance(),
        lhs,
        rhs,
    })
}
