//! Uniform 1-D grids, cell-average densities and time-indexed marginal curves.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// Tolerance on `cell_width * sum(values) == 1`.
pub const MASS_TOLERANCE: f64 = 1e-8;

/// A uniform partition of `[x_min, x_max]` into `n_cells` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n_cells: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(invalid(format!("grid domain [{x_min}, {x_max}] is empty")));
        }
        if n_cells == 0 {
            return Err(invalid("grid needs at least one cell"));
        }
        Ok(Self {
            x_min,
            x_max,
            n_cells,
        })
    }

    /// Grid on `[center - half_width, center + half_width]`.
    pub fn symmetric(center: f64, half_width: f64, n_cells: usize) -> Result<Self> {
        Self::new(center - half_width, center + half_width, n_cells)
    }

    /// Grid with a prescribed cell width covering at least `[lo, hi]`. The
    /// point `anchor` is a cell edge.
    pub fn covering(lo: f64, hi: f64, cell_width: f64, anchor: f64) -> Result<Self> {
        if !(cell_width > 0.0) {
            return Err(invalid("cell width must be positive"));
        }
        let left = anchor + libm::floor((lo - anchor) / cell_width) * cell_width;
        let n = libm::ceil((hi - left) / cell_width).max(1.0) as usize;
        Self::new(left, left + n as f64 * cell_width, n)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn cell_width(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.cell_width()
    }

    /// Left edge of cell `i`; `edge(n_cells)` is `x_max`.
    pub fn edge(&self, i: usize) -> f64 {
        if i == self.n_cells {
            self.x_max
        } else {
            self.x_min + i as f64 * self.cell_width()
        }
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(move |i| self.center(i))
    }

    pub fn edges(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_cells).map(move |i| self.edge(i))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Index of the cell containing `x`; the right end belongs to the last cell.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let i = ((x - self.x_min) / self.cell_width()) as usize;
        Some(i.min(self.n_cells - 1))
    }

    /// Same cell width, twice the extent, same midpoint.
    pub fn expanded(&self) -> Self {
        let extra = (self.x_max - self.x_min) / 2.0;
        Self {
            x_min: self.x_min - extra,
            x_max: self.x_max + extra,
            n_cells: 2 * self.n_cells,
        }
    }

    pub(crate) fn check_same(&self, other: &Grid, what: &str) -> Result<()> {
        let tol = 1e-12 * (self.x_max - self.x_min);
        if self.n_cells != other.n_cells
            || (self.x_min - other.x_min).abs() > tol
            || (self.x_max - other.x_max).abs() > tol
        {
            return Err(Error::GridMismatch(format!(
                "{what}: [{}, {}]/{} vs [{}, {}]/{}",
                self.x_min, self.x_max, self.n_cells, other.x_min, other.x_max, other.n_cells
            )));
        }
        Ok(())
    }
}

/// Linear interpolation of cell values between centers; the edge value in the
/// outer half cells and zero outside the grid.
#[inline]
pub fn interpolate_cells(grid: &Grid, values: &[f64], x: f64) -> f64 {
    if !(x >= grid.x_min && x <= grid.x_max) {
        return 0.0;
    }
    let s = (x - grid.x_min) / grid.cell_width() - 0.5;
    if s <= 0.0 {
        return values[0];
    }
    let i = s as usize;
    if i + 1 >= values.len() {
        return values[values.len() - 1];
    }
    let w = s - i as f64;
    values[i] * (1.0 - w) + values[i + 1] * w
}

/// A probability density stored as per-cell averages on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Grid,
    values: Vec<f64>,
    time: f64,
}

impl GridDensity {
    /// Validating constructor: values must be nonnegative with unit mass.
    pub fn new(grid: Grid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(invalid(format!(
                "{} values for {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(Error::Invariant(format!("density value {v} in cell {i}")));
        }
        let d = Self { grid, values, time };
        let mass = d.mass();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Invariant(format!("density mass {mass} != 1")));
        }
        Ok(d)
    }

    /// Rescales nonnegative values to unit mass. Values above `-1e-12` are
    /// clipped to zero first.
    pub fn normalized(grid: Grid, mut values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(invalid("value count does not match the grid"));
        }
        for (i, v) in values.iter_mut().enumerate() {
            if !v.is_finite() || *v < -1e-12 {
                return Err(Error::Invariant(format!("density value {v} in cell {i}")));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mass: f64 = values.iter().sum::<f64>() * grid.cell_width();
        if !(mass > 0.0) {
            return Err(Error::Invariant("density has zero mass".into()));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Ok(Self { grid, values, time })
    }

    /// Unit mass in the single cell containing `x0`.
    pub fn dirac(grid: Grid, x0: f64, time: f64) -> Result<Self> {
        let i = grid.cell_of(x0).ok_or(Error::Domain {
            x: x0,
            lo: grid.x_min(),
            hi: grid.x_max(),
        })?;
        let mut values = alloc::vec![0.0; grid.n_cells()];
        values[i] = 1.0 / grid.cell_width();
        Ok(Self { grid, values, time })
    }

    /// Uniform law on `[a, b]`, exact cell overlaps.
    pub fn uniform(grid: Grid, a: f64, b: f64, time: f64) -> Result<Self> {
        if !(b > a) {
            return Err(invalid(format!("uniform support [{a}, {b}] is empty")));
        }
        let h = grid.cell_width();
        let values = (0..grid.n_cells())
            .map(|i| {
                let lo = grid.edge(i).max(a);
                let hi = grid.edge(i + 1).min(b);
                (hi - lo).max(0.0) / ((b - a) * h)
            })
            .collect();
        Self::normalized(grid, values, time)
    }

    /// Gaussian law from exact cell probabilities; tails beyond the grid are dropped.
    pub fn gaussian(grid: Grid, mean: f64, variance: f64, time: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(invalid("gaussian variance must be positive"));
        }
        let scale = libm::sqrt(2.0 * variance);
        let h = grid.cell_width();
        let cdf = |x: f64| 0.5 * libm::erfc(-(x - mean) / scale);
        let values = (0..grid.n_cells())
            .map(|i| (cdf(grid.edge(i + 1)) - cdf(grid.edge(i))).max(0.0) / h)
            .collect();
        Self::normalized(grid, values, time)
    }

    /// Samples `f` at cell centers and normalizes.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64, time: f64) -> Result<Self> {
        let values = grid.centers().map(f).collect();
        Self::normalized(grid, values, time)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_width()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// Pointwise value: linear interpolation between cell centers, the edge
    /// cell's value in the outer half cells, zero outside the domain.
    pub fn value_at(&self, x: f64) -> f64 {
        interpolate_cells(&self.grid, &self.values, x)
    }

    /// Distribution function of the piecewise-constant density.
    pub fn cdf_at(&self, x: f64) -> f64 {
        if x <= self.grid.x_min() {
            return 0.0;
        }
        if x >= self.grid.x_max() {
            return 1.0;
        }
        let h = self.grid.cell_width();
        let i = self.grid.cell_of(x).unwrap_or(0);
        let below: f64 = self.values[..i].iter().sum::<f64>() * h;
        (below + self.values[i] * (x - self.grid.edge(i))).min(1.0)
    }

    /// Cumulative masses at the cell edges, `n_cells + 1` entries.
    pub fn edge_cdf(&self) -> Vec<f64> {
        let h = self.grid.cell_width();
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.values.len() + 1);
        out.push(0.0);
        for v in &self.values {
            acc += v * h;
            out.push(acc);
        }
        out
    }

    /// Mass of `[a, b]` under the piecewise-constant density.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        (self.cdf_at(b) - self.cdf_at(a)).max(0.0)
    }

    pub fn mean(&self) -> f64 {
        let h = self.grid.cell_width();
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v * h * self.grid.center(i))
            .sum()
    }

    /// Variance of the piecewise-constant density (within-cell `h^2 / 12` included).
    pub fn variance(&self) -> f64 {
        let h = self.grid.cell_width();
        let mean = self.mean();
        let second: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let c = self.grid.center(i) - mean;
                v * h * c * c
            })
            .sum();
        second + h * h / 12.0
    }

    /// Mass in the `cells` outermost cells on either side.
    pub fn boundary_mass(&self, cells: usize) -> f64 {
        let n = self.values.len();
        let k = cells.min(n / 2);
        let h = self.grid.cell_width();
        (self.values[..k].iter().sum::<f64>() + self.values[n - k..].iter().sum::<f64>()) * h
    }

    /// `L1` distance of the cell averages; grids must agree.
    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        self.grid.check_same(&other.grid, "l1 distance")?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.cell_width())
    }

    /// Multiplies by `g` evaluated at cell centers and renormalizes.
    pub fn reweighted(&self, g: impl Fn(f64) -> f64) -> Result<Self> {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v * g(self.grid.center(i)))
            .collect();
        Self::normalized(self.grid, values, self.time)
    }

    /// Resamples onto another grid by exact CDF differences.
    pub fn regrid(&self, target: Grid) -> Result<Self> {
        let h = target.cell_width();
        let values = (0..target.n_cells())
            .map(|i| self.mass_between(target.edge(i), target.edge(i + 1)) / h)
            .collect();
        Self::normalized(target, values, self.time)
    }
}

/// A curve of densities on a common grid at strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalFlow {
    densities: Vec<GridDensity>,
    substeps: Vec<usize>,
}

impl MarginalFlow {
    /// `substeps[k]` is the number of solver steps taken on `(t_{k-1}, t_k]`,
    /// with `substeps[0] = 0`.
    pub fn new(densities: Vec<GridDensity>, substeps: Vec<usize>) -> Result<Self> {
        if densities.is_empty() {
            return Err(invalid("marginal flow needs at least one density"));
        }
        if substeps.len() != densities.len() {
            return Err(invalid("one sub-step count per output time is required"));
        }
        for pair in densities.windows(2) {
            pair[0].grid.check_same(&pair[1].grid, "marginal flow")?;
            if !(pair[1].time > pair[0].time) {
                return Err(invalid(format!(
                    "flow times not increasing: {} then {}",
                    pair[0].time, pair[1].time
                )));
            }
        }
        Ok(Self {
            densities,
            substeps,
        })
    }

    pub fn start_time(&self) -> f64 {
        self.densities[0].time
    }

    pub fn end_time(&self) -> f64 {
        self.densities[self.densities.len() - 1].time
    }

    pub fn grid(&self) -> &Grid {
        &self.densities[0].grid
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.densities.iter().map(|d| d.time)
    }

    pub fn densities(&self) -> &[GridDensity] {
        &self.densities
    }

    pub fn substeps(&self) -> &[usize] {
        &self.substeps
    }

    pub fn last(&self) -> &GridDensity {
        &self.densities[self.densities.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    /// Density stored at time `t` (within `1e-12` relative).
    pub fn density_at(&self, t: f64) -> Option<&GridDensity> {
        self.densities
            .iter()
            .find(|d| (d.time - t).abs() <= 1e-12 * (1.0 + t.abs()))
    }

    /// Writes the linear-in-time interpolant at `t` into `out`.
    pub fn interpolate_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if t < self.start_time() - 1e-12 || t > self.end_time() + 1e-12 {
            return Err(Error::Range {
                have_from: self.start_time(),
                have_to: self.end_time(),
                need_from: t,
                need_to: t,
            });
        }
        let k = self
            .densities
            .partition_point(|d| d.time <= t)
            .clamp(1, self.densities.len().max(2) - 1);
        if self.densities.len() == 1 {
            out.copy_from_slice(&self.densities[0].values);
            return Ok(());
        }
        let (a, b) = (&self.densities[k - 1], &self.densities[k]);
        let w = ((t - a.time) / (b.time - a.time)).clamp(0.0, 1.0);
        for ((o, x), y) in out.iter_mut().zip(&a.values).zip(&b.values) {
            *o = x * (1.0 - w) + y * w;
        }
        Ok(())
    }

    /// Interpolated density at `t`.
    pub fn at(&self, t: f64) -> Result<GridDensity> {
        let mut values = alloc::vec![0.0; self.grid().n_cells()];
        self.interpolate_into(t, &mut values)?;
        GridDensity::normalized(*self.grid(), values, t)
    }

    /// Largest `W1(mu_{k}, mu_{k+1}) / (t_{k+1} - t_k)` along the curve.
    pub fn continuity_constant(&self) -> f64 {
        self.densities
            .windows(2)
            .map(|p| {
                crate::verify::distance::w1_grid_grid(&p[0], &p[1]) / (p[1].time - p[0].time)
            })
            .fold(0.0, f64::max)
    }

    /// Largest cell value over all stored times.
    pub fn sup_norm(&self) -> f64 {
        self.densities.iter().map(GridDensity::sup).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(-2.0, 2.0, 40).unwrap()
    }

    #[test]
    fn rejects_bad_mass_and_negative_values() {
        let g = grid();
        assert!(GridDensity::new(g, alloc::vec![1.0; 40], 0.0).is_err());
        let mut v = alloc::vec![0.25; 40];
        v[3] = -0.1;
        v[4] = 0.35;
        assert!(matches!(
            GridDensity::new(g, v, 0.0),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn dirac_is_a_single_cell() {
        let d = GridDensity::dirac(grid(), 0.05, 0.0).unwrap();
        assert_eq!(d.values().iter().filter(|v| **v > 0.0).count(), 1);
        assert!((d.mass() - 1.0).abs() < 1e-15);
        assert!(GridDensity::dirac(grid(), 5.0, 0.0).is_err());
    }

    #[test]
    fn uniform_cells_are_exact() {
        let d = GridDensity::uniform(grid(), -0.5, 0.5, 0.0).unwrap();
        assert!((d.value_at(0.0) - 1.0).abs() < 1e-12);
        assert!((d.cdf_at(0.0) - 0.5).abs() < 1e-12);
        assert!((d.mean()).abs() < 1e-12);
    }

    #[test]
    fn interpolation_rule() {
        let g = Grid::new(0.0, 4.0, 4).unwrap();
        let d = GridDensity::new(g, alloc::vec![0.1, 0.3, 0.4, 0.2], 0.0).unwrap();
        assert_eq!(d.value_at(0.2), 0.1);
        assert!((d.value_at(1.0) - 0.2).abs() < 1e-15);
        assert!((d.value_at(2.5) - 0.4).abs() < 1e-15);
        assert_eq!(d.value_at(3.9), 0.2);
        assert_eq!(d.value_at(-0.1), 0.0);
        assert_eq!(d.value_at(4.1), 0.0);
    }

    #[test]
    fn gaussian_moments() {
        let g = Grid::new(-10.0, 10.0, 2000).unwrap();
        let d = GridDensity::gaussian(g, 0.5, 2.0, 0.0).unwrap();
        assert!((d.mean() - 0.5).abs() < 1e-10);
        // cell averages carry a grouping error of order h^2
        assert!((d.variance() - 2.0).abs() < 2e-5);
    }

    #[test]
    fn flow_interpolates_linearly_in_time() {
        let g = grid();
        let a = GridDensity::uniform(g, -1.0, 0.0, 0.0).unwrap();
        let b = GridDensity::uniform(g, 0.0, 1.0, 1.0).unwrap();
        let flow = MarginalFlow::new(alloc::vec![a.clone(), b.clone()], alloc::vec![0, 1]).unwrap();
        let mid = flow.at(0.25).unwrap();
        assert!((mid.value_at(-0.5) - 0.75).abs() < 1e-12);
        assert!((mid.value_at(0.5) - 0.25).abs() < 1e-12);
        assert!(flow.at(1.5).is_err());
        assert!(MarginalFlow::new(alloc::vec![b, a], alloc::vec![0, 1]).is_err());
    }

    #[test]
    fn covering_grid_anchors_an_edge() {
        let g = Grid::covering(-1.03, 2.2, 0.1, 0.0).unwrap();
        assert!(g.x_min() <= -1.03 && g.x_max() >= 2.2);
        assert!((g.cell_width() - 0.1).abs() < 1e-12);
        let k = g.x_min() / 0.1;
        assert!((k - libm::round(k)).abs() < 1e-9);
    }
}
