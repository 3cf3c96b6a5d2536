//! Binned kernel density estimates on a grid.
//!
//! Particles are linearly binned onto cell centers and the bin weights are
//! convolved with a discretized kernel, which costs `O(N + cells * taps)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridDensity};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Gaussian,
    Epanechnikov,
    /// Plain linear binning without smoothing (diagnostics).
    Histogram,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `0.9 min(std, IQR / 1.34) N^(-1/5)`
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeSpec {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    pub grid: Grid,
}

impl KdeSpec {
    pub fn gaussian_silverman(grid: Grid) -> Self {
        Self {
            kernel: Kernel::Gaussian,
            bandwidth: Bandwidth::Silverman,
            grid,
        }
    }
}

/// Silverman's rule of thumb.
pub fn silverman_bandwidth(positions: &[f64]) -> Result<f64> {
    let n = positions.len();
    if n < 2 {
        return Err(invalid("silverman bandwidth needs at least two particles"));
    }
    let mean = positions.iter().sum::<f64>() / n as f64;
    let var = positions.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let std = libm::sqrt(var);
    if !(std > 0.0) {
        return Err(Error::DegenerateBandwidth);
    }
    let mut scratch = positions.to_vec();
    let q1 = quantile_in_place(&mut scratch, 0.25);
    let q3 = quantile_in_place(&mut scratch, 0.75);
    let iqr = q3 - q1;
    let spread = if iqr > 0.0 { std.min(iqr / 1.34) } else { std };
    Ok(0.9 * spread * libm::pow(n as f64, -0.2))
}

/// Linear-interpolated order statistic; reorders `v`.
fn quantile_in_place(v: &mut [f64], p: f64) -> f64 {
    let pos = p * (v.len() - 1) as f64;
    let lo = pos as usize;
    let frac = pos - lo as f64;
    let (_, a, rest) = v.select_nth_unstable_by(lo, |x, y| x.total_cmp(y));
    let a = *a;
    if frac == 0.0 || rest.is_empty() {
        return a;
    }
    let b = rest.iter().cloned().fold(f64::INFINITY, f64::min);
    a + frac * (b - a)
}

/// Discrete kernel taps `w_j`, `j = -J..=J`, summing to one.
fn taps(kernel: Kernel, bandwidth: f64, h: f64) -> Vec<f64> {
    let (reach, profile): (f64, fn(f64) -> f64) = match kernel {
        Kernel::Histogram => return vec![1.0],
        Kernel::Gaussian => (4.0, |u| libm::exp(-0.5 * u * u)),
        Kernel::Epanechnikov => (1.0, |u| (1.0 - u * u).max(0.0)),
    };
    let j = libm::ceil(reach * bandwidth / h) as usize;
    let mut w: Vec<f64> = (0..=2 * j)
        .map(|k| profile((k as f64 - j as f64) * h / bandwidth))
        .collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return vec![1.0];
    }
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Linear binning onto cell centers. Errors on the first particle outside.
pub fn bin_linear(positions: &[f64], grid: &Grid, bins: &mut [f64]) -> Result<()> {
    bins.iter_mut().for_each(|b| *b = 0.0);
    let n = grid.n_cells();
    let h = grid.cell_width();
    let (lo, hi) = (grid.x_min(), grid.x_max());
    for (index, &x) in positions.iter().enumerate() {
        if !(x >= lo && x <= hi) {
            return Err(Error::ParticleEscape { index, time: f64::NAN, x });
        }
        let s = (x - lo) / h - 0.5;
        if s <= 0.0 {
            bins[0] += 1.0;
        } else {
            let i = s as usize;
            if i + 1 >= n {
                bins[n - 1] += 1.0;
            } else {
                let w = s - i as f64;
                bins[i] += 1.0 - w;
                bins[i + 1] += w;
            }
        }
    }
    Ok(())
}

/// Reusable buffers for repeated estimates on one grid.
#[derive(Debug, Clone)]
pub struct KdeWorkspace {
    bins: Vec<f64>,
    smooth: Vec<f64>,
}

impl KdeWorkspace {
    pub fn new(grid: &Grid) -> Self {
        Self {
            bins: vec![0.0; grid.n_cells()],
            smooth: vec![0.0; grid.n_cells()],
        }
    }

    /// Estimate on `grid` with an explicit bandwidth; returns unit-mass values.
    pub fn estimate(
        &mut self,
        positions: &[f64],
        grid: &Grid,
        kernel: Kernel,
        bandwidth: f64,
    ) -> Result<&[f64]> {
        if self.bins.len() != grid.n_cells() {
            *self = Self::new(grid);
        }
        bin_linear(positions, grid, &mut self.bins)?;
        let h = grid.cell_width();
        let w = taps(kernel, bandwidth, h);
        let j = (w.len() / 2) as isize;
        let n = grid.n_cells() as isize;
        self.smooth.iter_mut().for_each(|v| *v = 0.0);
        for (i, b) in self.bins.iter().enumerate() {
            if *b == 0.0 {
                continue;
            }
            let i = i as isize;
            let from = (i - j).max(0);
            let to = (i + j).min(n - 1);
            for k in from..=to {
                self.smooth[k as usize] += b * w[(k - i + j) as usize];
            }
        }
        let total: f64 = self.smooth.iter().sum::<f64>() * h;
        if !(total > 0.0) {
            return Err(Error::Numeric("density estimate has zero mass".into()));
        }
        self.smooth.iter_mut().for_each(|v| *v /= total);
        Ok(&self.smooth)
    }
}

/// Kernel density estimate of `positions` per `spec`. Returns the density and
/// the bandwidth used.
pub fn estimate_density(positions: &[f64], spec: &KdeSpec, time: f64) -> Result<(GridDensity, f64)> {
    if positions.is_empty() {
        return Err(invalid("cannot estimate a density from zero particles"));
    }
    let bw = match spec.bandwidth {
        Bandwidth::Fixed(b) if b > 0.0 => b,
        Bandwidth::Fixed(b) => return Err(invalid(alloc::format!("bandwidth {b} must be positive"))),
        Bandwidth::Silverman => silverman_bandwidth(positions)?,
    };
    let mut ws = KdeWorkspace::new(&spec.grid);
    let values = ws.estimate(positions, &spec.grid, spec.kernel, bw)?.to_vec();
    Ok((GridDensity::normalized(spec.grid, values, time)?, bw))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kernel: Kernel, bandwidth: Bandwidth) -> KdeSpec {
        KdeSpec {
            kernel,
            bandwidth,
            grid: Grid::symmetric(0.0, 5.0, 500).unwrap(),
        }
    }

    #[test]
    fn single_point_with_fixed_bandwidth() {
        for kernel in [Kernel::Gaussian, Kernel::Epanechnikov] {
            let (d, bw) = estimate_density(&[0.3], &spec(kernel, Bandwidth::Fixed(0.2)), 0.0).unwrap();
            assert_eq!(bw, 0.2);
            assert!((d.mass() - 1.0).abs() < 1e-12);
            assert!((d.mean() - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn coincident_particles_have_no_silverman_bandwidth() {
        let err = estimate_density(&[1.0; 10], &spec(Kernel::Gaussian, Bandwidth::Silverman), 0.0);
        assert!(matches!(err, Err(Error::DegenerateBandwidth)));
        assert!(estimate_density(&[1.0], &spec(Kernel::Gaussian, Bandwidth::Silverman), 0.0).is_err());
    }

    #[test]
    fn silverman_uses_the_smaller_spread() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 / 999.0) * 2.0 - 1.0).collect();
        // uniform on [-1, 1]: std = 0.5774, IQR/1.34 = 0.7463
        let bw = silverman_bandwidth(&xs).unwrap();
        let std = libm::sqrt(xs.iter().map(|x| x * x).sum::<f64>() / 999.0);
        assert!((bw - 0.9 * std * libm::pow(1000.0, -0.2)).abs() < 1e-12);
    }

    #[test]
    fn escape_is_reported() {
        let err = estimate_density(&[0.0, 9.0], &spec(Kernel::Gaussian, Bandwidth::Fixed(0.1)), 0.0);
        assert!(matches!(err, Err(Error::ParticleEscape { index: 1, .. })));
    }

    #[test]
    fn quantiles() {
        let mut v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(quantile_in_place(&mut v, 0.5), 3.0);
        assert_eq!(quantile_in_place(&mut v, 0.25), 2.0);
        let mut w = [1.0, 2.0];
        assert_eq!(quantile_in_place(&mut w, 0.5), 1.5);
    }
}
