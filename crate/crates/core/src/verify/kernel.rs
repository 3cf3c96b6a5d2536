//! Binned conditional kernels `p_{r,t}(y, dz)` estimated from path ensembles.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::particles::{silverman_bandwidth, PathStore};

/// Position bins at the conditioning time `r` and the target time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSpec {
    pub y_grid: Grid,
    pub z_grid: Grid,
    /// Bins at `r` with fewer samples are dropped.
    pub min_count: usize,
}

impl BinSpec {
    /// `y` bins twice the Silverman bandwidth of the marginal at `r` wide,
    /// anchored at 0, covering every particle; `z` bins a quarter as wide.
    pub fn from_paths(paths: &PathStore, r: f64, t: f64, min_count: usize) -> Result<Self> {
        let kr = time_index(paths, r)?;
        let kt = time_index(paths, t)?;
        let yr = paths.column(kr);
        let zt = paths.column(kt);
        let width = 2.0 * silverman_bandwidth(&yr)?;
        Ok(Self {
            y_grid: covering(&yr, width)?,
            z_grid: covering(&zt, width / 4.0)?,
            min_count,
        })
    }
}

fn covering(xs: &[f64], width: f64) -> Result<Grid> {
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
    Grid::covering(lo, hi, width, 0.0)
}

pub(crate) fn time_index(paths: &PathStore, t: f64) -> Result<usize> {
    paths
        .time_index(t)
        .ok_or_else(|| invalid(alloc::format!("time {t} is not stored in the path ensemble")))
}

/// Row-stochastic estimate of the conditional law at `t` given the bin at `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalKernel {
    pub r: f64,
    pub t: f64,
    pub y_grid: Grid,
    pub z_grid: Grid,
    /// Retained `y` bin indices, increasing.
    pub retained: Vec<usize>,
    /// One probability vector over `z` bins per retained bin.
    pub rows: Vec<Vec<f64>>,
    /// Sample count per retained bin.
    pub counts: Vec<usize>,
    /// Positions at `t` per retained bin, in particle order.
    pub samples: Vec<Vec<f64>>,
    /// Fraction of particles in dropped bins.
    pub dropped_mass: f64,
}

impl ConditionalKernel {
    pub fn row_of(&self, y_bin: usize) -> Option<&[f64]> {
        self.retained
            .binary_search(&y_bin)
            .ok()
            .map(|k| self.rows[k].as_slice())
    }
}

/// Bins every path by its position at `r` and tabulates positions at `t`.
pub fn estimate_conditional_kernel(paths: &PathStore, r: f64, t: f64, bins: &BinSpec) -> Result<ConditionalKernel> {
    if !(r <= t) {
        return Err(invalid("conditional kernel needs r <= t"));
    }
    let kr = time_index(paths, r)?;
    let kt = time_index(paths, t)?;
    let ny = bins.y_grid.n_cells();
    let nz = bins.z_grid.n_cells();
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); ny];
    let mut outside = 0usize;
    for i in 0..paths.n_particles() {
        let path = paths.path(i);
        match (bins.y_grid.cell_of(path[kr]), bins.z_grid.contains(path[kt])) {
            (Some(b), true) => members[b].push(path[kt]),
            _ => outside += 1,
        }
    }
    let n = paths.n_particles() as f64;
    let mut dropped = outside;
    let mut k = ConditionalKernel {
        r,
        t,
        y_grid: bins.y_grid,
        z_grid: bins.z_grid,
        retained: Vec::new(),
        rows: Vec::new(),
        counts: Vec::new(),
        samples: Vec::new(),
        dropped_mass: 0.0,
    };
    for (b, zs) in members.into_iter().enumerate() {
        if zs.is_empty() {
            continue;
        }
        if zs.len() < bins.min_count.max(1) {
            dropped += zs.len();
            continue;
        }
        let mut row = vec![0.0; nz];
        for z in &zs {
            // contains() above guarantees a cell
            row[bins.z_grid.cell_of(*z).unwrap_or(0)] += 1.0;
        }
        let c = zs.len() as f64;
        row.iter_mut().for_each(|p| *p /= c);
        k.retained.push(b);
        k.rows.push(row);
        k.counts.push(zs.len());
        k.samples.push(zs);
    }
    k.dropped_mass = dropped as f64 / n;
    if k.retained.is_empty() {
        return Err(Error::Setup("no position bin reached the minimum count".into()));
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particles::SchemeMetadata;

    fn store(paths: &[[f64; 2]]) -> PathStore {
        let flat: Vec<f64> = paths.iter().flat_map(|p| p.iter().copied()).collect();
        let g = Grid::new(-1.0, 1.0, 2).unwrap();
        let scheme = SchemeMetadata {
            dt: 0.1,
            kernel: crate::particles::Kernel::Histogram,
            bandwidth: crate::particles::Bandwidth::Fixed(0.1),
            density_floor: 0.0,
            feedback_every: 1,
            bootstrap_steps: 0,
            kde_grid: g,
            expansions: 0,
            drift_min: 0.0,
            drift_max: 0.0,
            last_bandwidth: 0.0,
            linearized: false,
        };
        PathStore::from_parts(vec![0.0, 1.0], flat, paths.len(), 0, scheme).unwrap()
    }

    #[test]
    fn deterministic_paths_give_point_mass_rows() {
        let p = store(&[[0.1, 1.1], [0.15, 1.1], [0.6, 1.7], [0.62, 1.7], [0.9, 0.3]]);
        let bins = BinSpec {
            y_grid: Grid::new(0.0, 1.0, 2).unwrap(),
            z_grid: Grid::new(0.0, 2.0, 20).unwrap(),
            min_count: 2,
        };
        let k = estimate_conditional_kernel(&p, 0.0, 1.0, &bins).unwrap();
        assert_eq!(k.retained, vec![0, 1]);
        assert_eq!(k.row_of(0).unwrap()[11], 1.0);
        assert!((k.row_of(1).unwrap()[17] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(k.dropped_mass, 0.0);
        for row in &k.rows {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_bins_are_dropped_and_reported() {
        let p = store(&[[0.1, 1.0], [0.2, 1.0], [0.7, 1.0]]);
        let bins = BinSpec {
            y_grid: Grid::new(0.0, 1.0, 2).unwrap(),
            z_grid: Grid::new(0.0, 2.0, 4).unwrap(),
            min_count: 2,
        };
        let k = estimate_conditional_kernel(&p, 0.0, 1.0, &bins).unwrap();
        assert_eq!(k.retained, vec![0]);
        assert!((k.dropped_mass - 1.0 / 3.0).abs() < 1e-15);
        let none = BinSpec { min_count: 5, ..bins };
        assert!(estimate_conditional_kernel(&p, 0.0, 1.0, &none).is_err());
    }
}
