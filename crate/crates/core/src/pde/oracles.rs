//! Closed-form solutions used as oracles: Barenblatt profiles of the porous
//! media equation, the Gaussian heat kernel, and the Cole-Hopf representation
//! of viscous Burgers.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridDensity};
use crate::quad::{gauss_legendre, gauss_legendre_converged};

/// Self-similar source solution of `du/dt = Lap(|u|^(m-1) u)` in `d` dimensions,
/// started from a unit point mass:
///
/// ```text
/// u(tau, x) = tau^(-alpha) [ (C - k |x|^2 tau^(-2 beta))^+ ]^(1/(m-1))
/// alpha = d / (d(m-1) + 2),  beta = alpha / d,  k = alpha (m-1) / (2 m d)
/// ```
///
/// with `C` fixed by unit mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barenblatt {
    m: f64,
    d: usize,
    alpha: f64,
    beta: f64,
    k: f64,
    c: f64,
}

impl Barenblatt {
    pub fn new(m: f64, d: usize) -> Result<Self> {
        if !(m > 1.0) || !m.is_finite() {
            return Err(invalid(format!(
                "Barenblatt profiles need m > 1 (got {m}); use the heat kernel for m = 1"
            )));
        }
        if d == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        let df = d as f64;
        let alpha = df / (df * (m - 1.0) + 2.0);
        Ok(Self {
            m,
            d,
            alpha,
            beta: alpha / df,
            k: alpha * (m - 1.0) / (2.0 * m * df),
            c: barenblatt_normalization(m, d)?,
        })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Amplitude decay exponent `alpha`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Spatial spreading exponent `beta = alpha / d`.
    pub fn spread_exponent(&self) -> f64 {
        self.beta
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// The unit-mass constant `C(m, d)`.
    pub fn normalization(&self) -> f64 {
        self.c
    }

    /// Density at distance `r` from the source after elapsed time `tau > 0`.
    pub fn value(&self, r: f64, tau: f64) -> f64 {
        let inner = self.c - self.k * r * r * libm::pow(tau, -2.0 * self.beta);
        if inner <= 0.0 {
            return 0.0;
        }
        libm::pow(tau, -self.alpha) * libm::pow(inner, 1.0 / (self.m - 1.0))
    }

    /// Free-boundary radius `sqrt(C / k) tau^beta`.
    pub fn support_radius(&self, tau: f64) -> f64 {
        libm::sqrt(self.c / self.k) * libm::pow(tau, self.beta)
    }

    /// Peak value `C^(1/(m-1)) tau^(-alpha)`.
    pub fn peak(&self, tau: f64) -> f64 {
        self.value(0.0, tau)
    }

    pub fn radial_profile(&self, radii: &[f64], tau: f64) -> Vec<f64> {
        radii.iter().map(|r| self.value(*r, tau)).collect()
    }

    /// Cell averages of the 1-D profile centred at `x0` after `tau`.
    pub fn cell_averages(&self, grid: &Grid, x0: f64, tau: f64) -> Result<Vec<f64>> {
        if self.d != 1 {
            return Err(invalid("grid densities are one-dimensional; use radial_profile"));
        }
        if !(tau > 0.0) {
            return Err(invalid("Barenblatt profile needs t > s"));
        }
        let radius = self.support_radius(tau);
        let (front_l, front_r) = (x0 - radius, x0 + radius);
        let h = grid.cell_width();
        Ok((0..grid.n_cells())
            .map(|i| {
                let lo = grid.edge(i).max(front_l);
                let hi = grid.edge(i + 1).min(front_r);
                if hi <= lo {
                    return 0.0;
                }
                gauss_legendre(|x| self.value(x - x0, tau), lo, hi, 4) / h
            })
            .collect())
    }
}

/// Unit-mass constant `C(m, d)` from a radial integral over `d`-spheres.
///
/// With `r = R sin(theta)`, `R = sqrt(C/k)` and `p = 1/(m-1)` the mass is
/// `omega_d (C/k)^(d/2) C^p I`, where
/// `I = int_0^{pi/2} cos^(2p+1)(theta) sin^(d-1)(theta) dtheta`.
pub fn barenblatt_normalization(m: f64, d: usize) -> Result<f64> {
    if !(m > 1.0) {
        return Err(invalid("normalization needs m > 1"));
    }
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    let df = d as f64;
    let p = 1.0 / (m - 1.0);
    let alpha = df / (df * (m - 1.0) + 2.0);
    let k = alpha * (m - 1.0) / (2.0 * m * df);
    // theta = pi/2 (1 - s^4) flattens the cos^(2p+1) endpoint so the rule
    // converges quickly for fractional p
    let integral = gauss_legendre_converged(
        |s| {
            let s3 = s * s * s;
            let phi = PI / 2.0 * s3 * s;
            libm::pow(libm::sin(phi), 2.0 * p + 1.0)
                * libm::pow(libm::cos(phi), df - 1.0)
                * 2.0 * PI * s3
        },
        0.0,
        1.0,
        1e-15,
        16,
    )
    .ok_or_else(|| Error::Numeric(format!("radial quadrature did not converge for m = {m}")))?;
    let omega = sphere_area(d);
    // C^(d/2 + p) = k^(d/2) / (omega I)
    let rhs = libm::pow(k, df / 2.0) / (omega * integral);
    Ok(libm::pow(rhs, 1.0 / (df / 2.0 + p)))
}

/// Surface area of the unit sphere in `R^d` (`2` for `d = 1`).
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * libm::pow(PI, h) / libm::tgamma(h)
}

/// Barenblatt density from `(s, delta_{x0})` evaluated at time `t` on `grid`.
pub fn barenblatt(m: f64, d: usize, s: f64, x0: f64, t: f64, grid: Grid) -> Result<GridDensity> {
    if !(t > s) {
        return Err(invalid(format!("Barenblatt profile needs t > s (t = {t}, s = {s})")));
    }
    let b = Barenblatt::new(m, d)?;
    let values = b.cell_averages(&grid, x0, t - s)?;
    GridDensity::normalized(grid, values, t)
}

/// Gaussian transition density of `dX = sqrt(2) dB`: variance `2 (t - s)`.
pub fn heat_kernel(s: f64, x0: f64, t: f64, grid: Grid) -> Result<GridDensity> {
    if !(t > s) {
        return Err(invalid(format!("heat kernel needs t > s (t = {t}, s = {s})")));
    }
    GridDensity::gaussian(grid, x0, 2.0 * (t - s), t)
}

/// Cell averages from the Cole-Hopf formula before renormalization.
#[derive(Debug, Clone)]
pub struct ColeHopfSolution {
    pub values: Vec<f64>,
    /// `cell_width * sum(values)`; equals the mass of the exact solution on the grid.
    pub mass: f64,
}

/// Exact solution of `u_t = u_xx - (u^2 / 2)_x` from `(s, zeta)`, sampled as
/// cell averages on `grid` at time `t`.
///
/// With `Z(y) = zeta((-inf, y])` and `tau = t - s`,
/// `phi(x) = int exp(-(x-y)^2 / (4 tau) - Z(y) / 2) dy` solves the heat
/// equation and `u = -2 (ln phi)_x`, so cell averages are exact differences
/// of `ln phi` at the cell edges. Exponents are shifted by their maximum before
/// exponentiation.
pub fn cole_hopf_raw(zeta: &GridDensity, s: f64, t: f64, grid: &Grid) -> Result<ColeHopfSolution> {
    if !(t > s) {
        return Err(invalid(format!("Cole-Hopf solution needs t > s (t = {t}, s = {s})")));
    }
    let tau = t - s;
    let sq = libm::sqrt(tau);
    let zg = zeta.grid();
    let (a, b) = (zg.x_min(), zg.x_max());
    let zcdf = zeta.edge_cdf();
    let zh = zg.cell_width();
    let panels_per_cell = libm::ceil(zh / (0.25 * sq)).max(1.0) as usize;
    let window = 40.0 * sq;
    let half_log_pi_tau = 0.5 * libm::log(PI * tau);

    let log_phi = |x: f64| -> f64 {
        // tails where Z is 0 (left of a) and 1 (right of b)
        let left = half_log_pi_tau + libm::log(libm::erfc((x - a) / (2.0 * sq)));
        let right =
            -0.5 + half_log_pi_tau + libm::log(libm::erfc((b - x) / (2.0 * sq)));
        let lo = (x - window).max(a);
        let hi = (x + window).min(b);
        let mut middle = f64::NEG_INFINITY;
        if hi > lo {
            let first = ((lo - a) / zh) as usize;
            let last = (libm::ceil((hi - a) / zh) as usize).min(zg.n_cells());
            let exponent = |y: f64, cell: usize| {
                let z = zcdf[cell] + (zcdf[cell + 1] - zcdf[cell]) * ((y - zg.edge(cell)) / zh);
                -(x - y) * (x - y) / (4.0 * tau) - 0.5 * z
            };
            // the largest exponent is attained near y = x; its value bounds the shift
            let peak = {
                let y = x.clamp(a, b);
                let cell = zg.cell_of(y).unwrap_or(0);
                exponent(y, cell)
            };
            let mut acc = 0.0;
            for cell in first..last {
                let (c_lo, c_hi) = (zg.edge(cell), zg.edge(cell + 1));
                acc += gauss_legendre(
                    |y| libm::exp(exponent(y, cell) - peak),
                    c_lo,
                    c_hi,
                    panels_per_cell,
                );
            }
            if acc > 0.0 {
                middle = peak + libm::log(acc);
            }
        }
        log_sum_exp(&[left, middle, right])
    };

    let logs: Vec<f64> = grid.edges().map(log_phi).collect();
    if logs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("Cole-Hopf quadrature overflowed".into()));
    }
    let h = grid.cell_width();
    let values: Vec<f64> = logs.windows(2).map(|w| -2.0 * (w[1] - w[0]) / h).collect();
    let mass = -2.0 * (logs[logs.len() - 1] - logs[0]);
    Ok(ColeHopfSolution { values, mass })
}

/// [`cole_hopf_raw`] renormalized into a [`GridDensity`].
pub fn cole_hopf_burgers(zeta: &GridDensity, s: f64, t: f64, grid: Grid) -> Result<GridDensity> {
    let raw = cole_hopf_raw(zeta, s, t, &grid)?;
    if (raw.mass - 1.0).abs() > 1e-6 {
        return Err(Error::Numeric(format!(
            "Cole-Hopf mass {} on the target grid; widen the domain",
            raw.mass
        )));
    }
    GridDensity::normalized(grid, raw.values, t)
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + libm::log(terms.iter().map(|v| libm::exp(v - max)).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beta_fn(a: f64, b: f64) -> f64 {
        libm::tgamma(a) * libm::tgamma(b) / libm::tgamma(a + b)
    }

    #[test]
    fn exponents_for_m2_d1() {
        let b = Barenblatt::new(2.0, 1).unwrap();
        assert!((b.alpha() - 1.0 / 3.0).abs() < 1e-15);
        assert!((b.spread_exponent() - 1.0 / 3.0).abs() < 1e-15);
        assert!((b.k() - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn normalization_matches_truncated_parabola() {
        // int (C - x^2/12)^+ dx = (4 sqrt(12) / 3) C^(3/2) = 1
        let exact = libm::pow(3.0 / (4.0 * libm::sqrt(12.0)), 2.0 / 3.0);
        let c = barenblatt_normalization(2.0, 1).unwrap();
        assert!((c - exact).abs() < 1e-13, "{c} vs {exact}");
        assert!((c - 0.360_562).abs() < 1e-6);
    }

    #[test]
    fn normalization_matches_beta_function_route() {
        for m in [1.5, 2.0, 3.0, 4.5] {
            for d in 1..=3 {
                let df = d as f64;
                let p = 1.0 / (m - 1.0);
                let alpha = df / (df * (m - 1.0) + 2.0);
                let k = alpha * (m - 1.0) / (2.0 * m * df);
                let i = 0.5 * beta_fn(df / 2.0, p + 1.0);
                let expected =
                    libm::pow(libm::pow(k, df / 2.0) / (sphere_area(d) * i), 1.0 / (df / 2.0 + p));
                let c = barenblatt_normalization(m, d).unwrap();
                assert!((c - expected).abs() < 1e-12 * expected, "m={m} d={d}");
            }
        }
    }

    #[test]
    fn rejects_linear_and_backward_time() {
        assert!(Barenblatt::new(1.0, 1).is_err());
        let g = Grid::new(-1.0, 1.0, 10).unwrap();
        assert!(barenblatt(2.0, 1, 1.0, 0.0, 1.0, g).is_err());
        assert!(heat_kernel(0.5, 0.0, 0.5, g).is_err());
    }

    #[test]
    fn peak_and_support() {
        let b = Barenblatt::new(2.0, 1).unwrap();
        assert!((b.value(0.0, 1.0) - b.normalization()).abs() < 1e-15);
        let r = b.support_radius(2.0);
        assert!((r - libm::sqrt(b.normalization() / b.k()) * libm::pow(2.0, 1.0 / 3.0)).abs() < 1e-14);
        assert!(b.value(r * (1.0 + 1e-9), 2.0) == 0.0);
        assert!(b.value(r * (1.0 - 1e-3), 2.0) > 0.0);
    }

    #[test]
    fn heat_kernel_peak_and_variance() {
        let g = Grid::new(-10.0, 10.0, 4000).unwrap();
        let k = heat_kernel(0.0, 0.0, 0.5, g).unwrap();
        // grouping error of cell averages is h^2/6 at most
        assert!((k.variance() - 1.0).abs() < 1e-5);
        let peak = 1.0 / libm::sqrt(4.0 * PI * 0.5);
        assert!((k.sup() - peak).abs() < 1e-5);
    }

    #[test]
    fn cole_hopf_keeps_mass_and_bounds() {
        let g = Grid::new(-12.0, 13.0, 2000).unwrap();
        let zeta = GridDensity::uniform(g, -0.5, 0.5, 0.0).unwrap();
        let raw = cole_hopf_raw(&zeta, 0.0, 0.5, &g).unwrap();
        assert!((raw.mass - 1.0).abs() < 1e-6, "mass {}", raw.mass);
        let max = raw.values.iter().cloned().fold(0.0, f64::max);
        assert!(max <= 1.0 + 1e-9);
        assert!(raw.values.iter().all(|v| *v >= -1e-12));
    }

    #[test]
    fn cole_hopf_small_data_is_nearly_heat() {
        // for tiny mass the nonlinearity vanishes; compare a scaled-down problem
        // via the linear heat kernel applied to a narrow start
        let g = Grid::new(-12.0, 12.0, 2400).unwrap();
        let zeta = GridDensity::gaussian(g, 0.0, 0.01, 0.0).unwrap();
        let u = cole_hopf_burgers(&zeta, 0.0, 1.0, g).unwrap();
        // drift of the mean is int u^2/2 dx over time > 0
        assert!(u.mean() > 0.0);
        let heat = GridDensity::gaussian(g, 0.0, 2.01, 1.0).unwrap();
        assert!(u.l1_distance(&heat).unwrap() < 0.2);
    }
}
