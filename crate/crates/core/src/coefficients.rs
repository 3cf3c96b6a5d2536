//! Coefficients of the nonlinear Kolmogorov operator.
//!
//! Two families are supported. Nemytskii coefficients depend on the law only
//! through its density at the current point:
//!
//! ```text
//! drift(u, x)     = b0(u(x)) * D(x)
//! diffusion(u, x) = sqrt(2 * beta(u(x)) / u(x))
//! ```
//!
//! which is the particle picture of `du/dt = (beta(u))'' - (D b0(u) u)'`.
//! Mean-field coefficients have a drift `int h dmu` that is constant in space
//! and a constant diffusion `sigma`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::grid::GridDensity;

/// Default lower bound on densities inside `beta(u) / u`.
pub const DEFAULT_DENSITY_FLOOR: f64 = 1e-12;

/// A scalar function from a fixed menu of closed forms, or a table.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarFn {
    Zero,
    Constant(f64),
    /// `a * z`
    Linear(f64),
    /// `|z|^(m-1) z`
    SignedPower { m: f64 },
    /// Piecewise linear through `(xs, ys)`; flat beyond the ends.
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

impl ScalarFn {
    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(invalid("a table needs at least two (x, y) pairs of equal length"));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("table abscissae must be strictly increasing"));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(invalid("table entries must be finite"));
        }
        Ok(ScalarFn::Tabulated { xs, ys })
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Constant(c) => *c,
            ScalarFn::Linear(a) => a * z,
            ScalarFn::SignedPower { m } => {
                if z == 0.0 {
                    0.0
                } else {
                    libm::pow(z.abs(), m - 1.0) * z
                }
            }
            ScalarFn::Tabulated { xs, ys } => interpolate(xs, ys, z),
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            ScalarFn::Zero | ScalarFn::Constant(_) => 0.0,
            ScalarFn::Linear(a) => *a,
            ScalarFn::SignedPower { m } => {
                if *m == 1.0 {
                    1.0
                } else if z == 0.0 {
                    if *m > 1.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    m * libm::pow(z.abs(), m - 1.0)
                }
            }
            ScalarFn::Tabulated { xs, ys } => match locate(xs, z) {
                Located::Below | Located::Above => 0.0,
                Located::Inside(i, _) => (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]),
            },
        }
    }

    /// Largest `|derivative|` on `[0, z_max]`.
    pub fn max_abs_derivative(&self, z_max: f64) -> f64 {
        match self {
            ScalarFn::Zero | ScalarFn::Constant(_) => 0.0,
            ScalarFn::Linear(a) => a.abs(),
            ScalarFn::SignedPower { m } => {
                if *m >= 1.0 {
                    self.derivative(z_max).abs()
                } else {
                    f64::INFINITY
                }
            }
            ScalarFn::Tabulated { xs, ys } => {
                let mut best = 0.0f64;
                for i in 0..xs.len() - 1 {
                    if xs[i] > z_max {
                        break;
                    }
                    best = best.max(((ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).abs());
                }
                best
            }
        }
    }
}

fn interpolate(xs: &[f64], ys: &[f64], z: f64) -> f64 {
    match locate(xs, z) {
        Located::Below => ys[0],
        Located::Above => ys[ys.len() - 1],
        Located::Inside(i, w) => ys[i] * (1.0 - w) + ys[i + 1] * w,
    }
}

enum Located {
    Below,
    Above,
    Inside(usize, f64),
}

fn locate(xs: &[f64], z: f64) -> Located {
    if z <= xs[0] {
        return Located::Below;
    }
    if z >= xs[xs.len() - 1] {
        return Located::Above;
    }
    let i = xs.partition_point(|x| *x <= z) - 1;
    Located::Inside(i, (z - xs[i]) / (xs[i + 1] - xs[i]))
}

/// Compactly supported mean-field kernel `h`.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanFieldKernel {
    /// `height * (1 - ((y - center) / half_width)^2)^+`
    Bump {
        center: f64,
        half_width: f64,
        height: f64,
    },
    /// Piecewise linear, zero outside the table range.
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

impl MeanFieldKernel {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            MeanFieldKernel::Bump {
                center,
                half_width,
                height,
            } => {
                let r = (y - center) / half_width;
                height * (1.0 - r * r).max(0.0)
            }
            MeanFieldKernel::Tabulated { xs, ys } => {
                if y < xs[0] || y > xs[xs.len() - 1] {
                    0.0
                } else {
                    interpolate(xs, ys, y)
                }
            }
        }
    }

    /// `int h dmu` against cell averages (midpoint rule per cell).
    pub fn integrate(&self, mu: &GridDensity) -> f64 {
        let g = mu.grid();
        let h = g.cell_width();
        mu.values()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| v * h * self.eval(g.center(i)))
            .sum()
    }

    /// Empirical mean of `h` over sample positions.
    pub fn mean_over(&self, positions: &[f64]) -> f64 {
        positions.iter().map(|y| self.eval(*y)).sum::<f64>() / positions.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientKind {
    Nemytskii,
    MeanField,
}

/// Nemytskii coefficients `beta`, `b0` and the transport direction `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Nemytskii {
    pub beta: ScalarFn,
    pub b0: ScalarFn,
    pub field: ScalarFn,
    /// Porous-media exponent when `beta` is the PME diffusivity.
    pub m: Option<f64>,
    pub dim: usize,
    pub density_floor: f64,
}

impl Nemytskii {
    /// `beta(z) / z` with `z` replaced by `max(z, floor)`.
    #[inline]
    pub fn diffusivity_ratio(&self, z: f64) -> f64 {
        let z = z.max(self.density_floor);
        self.beta.eval(z) / z
    }

    #[inline]
    pub fn drift_local(&self, z: f64, x: f64) -> f64 {
        self.b0.eval(z) * self.field.eval(x)
    }

    #[inline]
    pub fn diffusion_local(&self, z: f64) -> f64 {
        libm::sqrt(2.0 * self.diffusivity_ratio(z).max(0.0))
    }
}

/// Mean-field coefficients `b = int h dmu`, constant diffusion `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanField {
    pub h: MeanFieldKernel,
    pub sigma: f64,
    pub dim: usize,
}

/// The operator `L_{t, mu}` as an immutable set of coefficient functions.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientSet {
    Nemytskii(Nemytskii),
    MeanField(MeanField),
}

/// Parameters accepted by [`CoefficientSet::from_registry`]. Unused fields are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistryParams {
    pub m: Option<f64>,
    pub dim: usize,
    /// Constant drift amplitude for `gpme`.
    pub b0: Option<f64>,
    /// Constant transport direction for `gpme`.
    pub field: Option<f64>,
    pub sigma: f64,
    pub bump_center: f64,
    pub bump_half_width: f64,
    pub bump_height: f64,
    pub density_floor: f64,
}

impl Default for RegistryParams {
    fn default() -> Self {
        Self {
            m: None,
            dim: 1,
            b0: None,
            field: None,
            sigma: 0.0,
            bump_center: 0.0,
            bump_half_width: 1.0,
            bump_height: 1.0,
            density_floor: DEFAULT_DENSITY_FLOOR,
        }
    }
}

impl RegistryParams {
    pub fn pme(m: f64) -> Self {
        Self {
            m: Some(m),
            ..Self::default()
        }
    }
}

pub const REGISTRY_NAMES: [&str; 5] = ["pme", "burgers", "gpme", "meanfield", "heat"];

impl CoefficientSet {
    /// Named coefficient sets: `pme`, `heat` (`pme` with `m = 1`), `burgers`,
    /// `gpme` and `meanfield`.
    pub fn from_registry(name: &str, params: &RegistryParams) -> Result<Self> {
        if params.dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if !(params.density_floor > 0.0) {
            return Err(invalid("density floor must be positive"));
        }
        let nemytskii = |beta, b0, field, m| {
            CoefficientSet::Nemytskii(Nemytskii {
                beta,
                b0,
                field,
                m,
                dim: params.dim,
                density_floor: params.density_floor,
            })
        };
        match name {
            "pme" | "heat" => {
                let m = if name == "heat" {
                    1.0
                } else {
                    params
                        .m
                        .ok_or_else(|| invalid("pme requires the exponent m"))?
                };
                Ok(nemytskii(pme_beta(m)?, ScalarFn::Zero, ScalarFn::Constant(1.0), Some(m)))
            }
            "burgers" => {
                if params.dim != 1 {
                    return Err(invalid("burgers is one-dimensional"));
                }
                Ok(nemytskii(
                    ScalarFn::Linear(1.0),
                    ScalarFn::Linear(0.5),
                    ScalarFn::Constant(1.0),
                    None,
                ))
            }
            "gpme" => {
                let m = params.m.unwrap_or(2.0);
                let b0 = params.b0.unwrap_or(0.5);
                if b0 < 0.0 {
                    return Err(invalid("gpme drift amplitude must be nonnegative"));
                }
                Ok(nemytskii(
                    pme_beta(m)?,
                    ScalarFn::Constant(b0),
                    ScalarFn::Constant(params.field.unwrap_or(1.0)),
                    Some(m),
                ))
            }
            "meanfield" => {
                if !(params.bump_half_width > 0.0) || params.sigma < 0.0 {
                    return Err(invalid("meanfield needs a positive bump width and sigma >= 0"));
                }
                Ok(CoefficientSet::MeanField(MeanField {
                    h: MeanFieldKernel::Bump {
                        center: params.bump_center,
                        half_width: params.bump_half_width,
                        height: params.bump_height,
                    },
                    sigma: params.sigma,
                    dim: params.dim,
                }))
            }
            other => Err(Error::UnknownCoefficients(other.to_string())),
        }
    }

    pub fn kind(&self) -> CoefficientKind {
        match self {
            CoefficientSet::Nemytskii(_) => CoefficientKind::Nemytskii,
            CoefficientSet::MeanField(_) => CoefficientKind::MeanField,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CoefficientSet::Nemytskii(n) => n.dim,
            CoefficientSet::MeanField(mf) => mf.dim,
        }
    }

    pub fn as_nemytskii(&self) -> Option<&Nemytskii> {
        match self {
            CoefficientSet::Nemytskii(n) => Some(n),
            CoefficientSet::MeanField(_) => None,
        }
    }

    /// Porous-media exponent, if the set is a PME.
    pub fn pme_exponent(&self) -> Option<f64> {
        self.as_nemytskii().and_then(|n| n.m)
    }

    /// Whether the operator does not depend on the law at all.
    pub fn is_linear(&self) -> bool {
        match self {
            CoefficientSet::Nemytskii(n) => {
                matches!(n.beta, ScalarFn::Linear(_))
                    && matches!(n.b0, ScalarFn::Zero | ScalarFn::Constant(_))
            }
            CoefficientSet::MeanField(_) => false,
        }
    }

    /// Drift at `x` given the current law `u`.
    pub fn drift_at(&self, u: &GridDensity, x: f64) -> Result<f64> {
        check_domain(u, x)?;
        match self {
            CoefficientSet::Nemytskii(n) => Ok(n.drift_local(u.value_at(x), x)),
            CoefficientSet::MeanField(mf) => Ok(mf.h.integrate(u)),
        }
    }

    /// Diffusion coefficient at `x` given the current law `u`.
    pub fn diffusion_at(&self, u: &GridDensity, x: f64) -> Result<f64> {
        check_domain(u, x)?;
        match self {
            CoefficientSet::Nemytskii(n) => {
                let z = u.value_at(x);
                if z < 0.0 {
                    return Err(Error::Invariant(format!("negative density {z} at {x}")));
                }
                Ok(n.diffusion_local(z))
            }
            CoefficientSet::MeanField(mf) => Ok(mf.sigma),
        }
    }

    /// Diagnostic check of monotonicity of `beta`, `beta(0) = 0` and
    /// nonnegative bounded `b0` on `[0, u_max]`. Returns the list of violations.
    pub fn assumption_violations(&self, u_max: f64) -> Vec<String> {
        let mut out = Vec::new();
        let CoefficientSet::Nemytskii(n) = self else {
            return out;
        };
        if n.beta.eval(0.0) != 0.0 {
            out.push(format!("beta(0) = {} != 0", n.beta.eval(0.0)));
        }
        let samples = 256;
        let mut prev = n.beta.eval(0.0);
        for k in 1..=samples {
            let z = u_max * k as f64 / samples as f64;
            let b = n.beta.eval(z);
            if b < prev {
                out.push(format!("beta decreases near z = {z}"));
                break;
            }
            prev = b;
            let d = n.b0.eval(z);
            if !d.is_finite() || d < 0.0 {
                out.push(format!("b0({z}) = {d} is not a finite nonnegative value"));
                break;
            }
        }
        out
    }
}

fn pme_beta(m: f64) -> Result<ScalarFn> {
    if !(m >= 1.0) || !m.is_finite() {
        return Err(invalid(format!("porous-media exponent m = {m} must be >= 1")));
    }
    Ok(if m == 1.0 {
        ScalarFn::Linear(1.0)
    } else {
        ScalarFn::SignedPower { m }
    })
}

fn check_domain(u: &GridDensity, x: f64) -> Result<()> {
    let g = u.grid();
    if !g.contains(x) {
        return Err(Error::Domain {
            x,
            lo: g.x_min(),
            hi: g.x_max(),
        });
    }
    Ok(())
}
