//! Finite-dimensional distributions from chained conditional kernels:
//!
//! ```text
//! E f(X_{t0}, ..., X_{tn}) = sum_{i0} mu(i0) sum_{i1} p_{t0,t1}(i0, i1) ... f(y_{i0}, ..., y_{in})
//! ```
//!
//! evaluated at bin centers. Bins missing from the next kernel are removed
//! and the remaining weights renormalized, so `f = 1` gives one.

use alloc::vec;
use alloc::vec::Vec;

use super::kernel::{estimate_conditional_kernel, time_index, BinSpec, ConditionalKernel};
use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::particles::rng::{ParticleStream, Purpose};
use crate::particles::PathStore;

/// Nested kernel sum. `mu_t0` holds the weights of the first kernel's `y`
/// bins (any nonnegative scale).
pub fn reconstruct_fdd(
    kernels: &[ConditionalKernel],
    mu_t0: &[f64],
    f: &dyn Fn(&[f64]) -> f64,
) -> Result<f64> {
    let Some(first) = kernels.first() else {
        return Err(invalid("at least one kernel is required"));
    };
    if mu_t0.len() != first.y_grid.n_cells() {
        return Err(Error::GridMismatch("initial weights do not match the first kernel's bins".into()));
    }
    for w in kernels.windows(2) {
        if (w[0].t - w[1].r).abs() > 1e-12 * (1.0 + w[0].t.abs()) {
            return Err(Error::GridMismatch(alloc::format!(
                "kernel ending at {} is followed by one starting at {}",
                w[0].t, w[1].r
            )));
        }
        w[0].z_grid.check_same(&w[1].y_grid, "kernel chain")?;
    }
    let mut weights: Vec<(usize, f64)> = first
        .retained
        .iter()
        .map(|&b| (b, mu_t0[b]))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    normalize(&mut weights)?;
    let mut point = vec![0.0; kernels.len() + 1];
    Ok(nested(kernels, 0, &weights, &mut point, f))
}

fn normalize(w: &mut [(usize, f64)]) -> Result<()> {
    let total: f64 = w.iter().map(|p| p.1).sum();
    if !(total > 0.0) {
        return Err(Error::Setup("no mass on retained bins".into()));
    }
    w.iter_mut().for_each(|p| p.1 /= total);
    Ok(())
}

fn nested(
    kernels: &[ConditionalKernel],
    level: usize,
    weights: &[(usize, f64)],
    point: &mut [f64],
    f: &dyn Fn(&[f64]) -> f64,
) -> f64 {
    let grid = if level == 0 { kernels[0].y_grid } else { kernels[level - 1].z_grid };
    let mut total = 0.0;
    for &(bin, w) in weights {
        point[level] = grid.center(bin);
        let inner = if level == kernels.len() {
            f(point)
        } else {
            let k = &kernels[level];
            let row = k.row_of(bin).expect("weights only cover retained bins");
            let mut next: Vec<(usize, f64)> = row
                .iter()
                .enumerate()
                .filter(|(j, p)| {
                    **p > 0.0 && kernels.get(level + 1).is_none_or(|n| n.row_of(*j).is_some())
                })
                .map(|(j, p)| (j, *p))
                .collect();
            if normalize(&mut next).is_err() {
                continue;
            }
            nested(kernels, level + 1, &next, point, f)
        };
        total += w * inner;
    }
    total
}

/// Reconstruction and direct average over the same path ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct FddComparison {
    pub reconstructed: f64,
    pub reconstructed_se: f64,
    pub direct: f64,
    pub direct_se: f64,
    /// `|reconstructed - direct| / sqrt(se_r^2 + se_d^2)`.
    pub z_score: f64,
}

/// Bins for every time in `times`: width `bin_width`, anchored at 0, covering
/// all particles.
pub fn chain_bins(paths: &PathStore, times: &[f64], bin_width: f64) -> Result<Vec<Grid>> {
    times
        .iter()
        .map(|t| {
            let col = paths.column(time_index(paths, *t)?);
            let (lo, hi) = col
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
            Grid::covering(lo, hi, bin_width, 0.0)
        })
        .collect()
}

fn kernels_and_weights(paths: &PathStore, times: &[f64], grids: &[Grid], min_count: usize) -> Result<(Vec<ConditionalKernel>, Vec<f64>)> {
    let kernels = times
        .windows(2)
        .zip(grids.windows(2))
        .map(|(t, g)| {
            estimate_conditional_kernel(
                paths,
                t[0],
                t[1],
                &BinSpec {
                    y_grid: g[0],
                    z_grid: g[1],
                    min_count,
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mu = vec![0.0; grids[0].n_cells()];
    for x in paths.column(time_index(paths, times[0])?) {
        if let Some(b) = grids[0].cell_of(x) {
            mu[b] += 1.0;
        }
    }
    Ok((kernels, mu))
}

/// Compares the kernel reconstruction of `E f(X_{t0}, ..., X_{tn})` with the
/// direct path average. Standard errors: sample standard deviation for the
/// direct average, a path bootstrap with `resamples` replicates for the
/// reconstruction.
pub fn compare_fdd(
    paths: &PathStore,
    times: &[f64],
    bin_width: f64,
    min_count: usize,
    f: &dyn Fn(&[f64]) -> f64,
    resamples: usize,
    seed: u64,
) -> Result<FddComparison> {
    if times.is_empty() {
        return Err(invalid("at least one time is required"));
    }
    if resamples < 2 {
        return Err(invalid("at least two bootstrap resamples are required"));
    }
    let idx: Vec<usize> = times.iter().map(|t| time_index(paths, *t)).collect::<Result<_>>()?;
    let grids = chain_bins(paths, times, bin_width)?;
    let n = paths.n_particles();

    let mut point = vec![0.0; times.len()];
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let p = paths.path(i);
            for (x, k) in point.iter_mut().zip(&idx) {
                *x = p[*k];
            }
            f(&point)
        })
        .collect();
    let (direct, var) = mean_var(&values);
    let direct_se = libm::sqrt(var / n as f64);

    let estimate = |store: &PathStore| -> Result<f64> {
        let (kernels, mu) = kernels_and_weights(store, times, &grids, min_count)?;
        if kernels.is_empty() {
            let total: f64 = mu.iter().sum();
            return Ok(mu
                .iter()
                .enumerate()
                .map(|(b, w)| w / total * f(&[grids[0].center(b)]))
                .sum());
        }
        reconstruct_fdd(&kernels, &mu, f)
    };
    let reconstructed = estimate(paths)?;

    // path bootstrap: resample whole trajectories, keep the bins
    let t_len = paths.times().len();
    let mut reps = Vec::with_capacity(resamples);
    let mut buf = vec![0.0; n * t_len];
    for rep in 0..resamples {
        let mut stream = ParticleStream::new(seed, Purpose::Bootstrap, rep as u64);
        for i in 0..n {
            let j = ((stream.uniform() * n as f64) as usize).min(n - 1);
            buf[i * t_len..(i + 1) * t_len].copy_from_slice(paths.path(j));
        }
        let store = PathStore::from_parts(paths.times().to_vec(), core::mem::take(&mut buf), n, paths.seed(), paths.scheme.clone())?;
        // dropped bins may differ between replicates; a failed replicate is skipped
        if let Ok(v) = estimate(&store) {
            reps.push(v);
        }
        buf = store.into_trajectories();
    }
    let (_, rvar) = mean_var(&reps);
    let reconstructed_se = libm::sqrt(rvar);
    let combined = libm::sqrt(reconstructed_se * reconstructed_se + direct_se * direct_se);
    Ok(FddComparison {
        reconstructed,
        reconstructed_se,
        direct,
        direct_se,
        z_score: if combined > 0.0 { (reconstructed - direct).abs() / combined } else { 0.0 },
    })
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    if v.len() < 2 {
        return (v.first().copied().unwrap_or(0.0), 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(r: f64, t: f64, y: Grid, z: Grid, rows: Vec<(usize, Vec<f64>)>) -> ConditionalKernel {
        ConditionalKernel {
            r,
            t,
            y_grid: y,
            z_grid: z,
            retained: rows.iter().map(|p| p.0).collect(),
            counts: rows.iter().map(|_| 10).collect(),
            samples: rows.iter().map(|_| Vec::new()).collect(),
            rows: rows.into_iter().map(|p| p.1).collect(),
            dropped_mass: 0.0,
        }
    }

    #[test]
    fn base_case_and_constant_function() {
        let g = Grid::new(0.0, 3.0, 3).unwrap();
        let k1 = kernel(0.0, 1.0, g, g, vec![(0, vec![0.5, 0.5, 0.0]), (2, vec![0.0, 0.25, 0.75])]);
        let k2 = kernel(1.0, 2.0, g, g, vec![(0, vec![1.0, 0.0, 0.0]), (1, vec![0.2, 0.3, 0.5]), (2, vec![0.0, 0.0, 1.0])]);
        let mu = [1.0, 0.0, 3.0];
        let one = reconstruct_fdd(&[k1.clone(), k2.clone()], &mu, &|_| 1.0).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
        // E X0 with mu = (1/4, 0, 3/4) on centers 0.5, 1.5, 2.5
        let m = reconstruct_fdd(std::slice::from_ref(&k1), &mu, &|x| x[0]).unwrap();
        assert!((m - 2.0).abs() < 1e-12);
        // E X1 = 1/4 (0.5 * 0.5 + 0.5 * 1.5) + 3/4 (0.25 * 1.5 + 0.75 * 2.5)
        let e1 = reconstruct_fdd(std::slice::from_ref(&k1), &mu, &|x| x[1]).unwrap();
        assert!((e1 - (0.25 + 0.75 * 2.25)).abs() < 1e-12);
        assert!(reconstruct_fdd(&[k2, k1], &mu, &|_| 1.0).is_err());
    }
}
