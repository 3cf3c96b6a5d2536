//! Distances between one-dimensional laws.
//!
//! `W1(F, G) = int |F(x) - G(x)| dx`. Grid densities have piecewise-linear
//! distribution functions and empirical laws piecewise-constant ones, so on
//! every interval between merged breakpoints the integrand is `|linear|` and
//! the integral is evaluated exactly.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::GridDensity;

/// Either a grid density or an empirical sample.
#[derive(Debug, Clone, Copy)]
pub enum Marginal<'a> {
    Grid(&'a GridDensity),
    Samples(&'a [f64]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalDistance {
    pub w1: f64,
    /// Only defined between densities on the same grid.
    pub l1: Option<f64>,
}

pub fn marginal_distance(a: Marginal<'_>, b: &GridDensity) -> Result<MarginalDistance> {
    match a {
        Marginal::Grid(g) => {
            let l1 = if g.grid() == b.grid() {
                Some(g.l1_distance(b)?)
            } else {
                None
            };
            Ok(MarginalDistance {
                w1: w1_grid_grid(g, b),
                l1,
            })
        }
        Marginal::Samples(s) => {
            if s.is_empty() {
                return Err(Error::InvalidArgument("empty sample".into()));
            }
            Ok(MarginalDistance {
                w1: w1_samples_grid(s, b),
                l1: None,
            })
        }
    }
}

trait Cdf {
    fn eval(&self, x: f64) -> f64;
    fn push_breakpoints(&self, out: &mut Vec<f64>);
}

struct GridCdf<'a> {
    density: &'a GridDensity,
    edges: Vec<f64>,
}

impl<'a> GridCdf<'a> {
    fn new(density: &'a GridDensity) -> Self {
        Self {
            density,
            edges: density.edge_cdf(),
        }
    }
}

impl Cdf for GridCdf<'_> {
    fn eval(&self, x: f64) -> f64 {
        let g = self.density.grid();
        match g.cell_of(x) {
            None if x < g.x_min() => 0.0,
            None => 1.0,
            Some(i) => self.edges[i] + self.density.values()[i] * (x - g.edge(i)),
        }
    }

    fn push_breakpoints(&self, out: &mut Vec<f64>) {
        out.extend(self.density.grid().edges());
    }
}

struct EmpiricalCdf<'a> {
    sorted: &'a [f64],
    weights: Option<&'a [f64]>,
    cumulative: Vec<f64>,
}

impl<'a> EmpiricalCdf<'a> {
    fn new(sorted: &'a [f64], weights: Option<&'a [f64]>) -> Self {
        let cumulative = match weights {
            Some(w) => {
                let total: f64 = w.iter().sum();
                let mut acc = 0.0;
                w.iter()
                    .map(|v| {
                        acc += v;
                        acc / total
                    })
                    .collect()
            }
            None => Vec::new(),
        };
        Self {
            sorted,
            weights,
            cumulative,
        }
    }
}

impl Cdf for EmpiricalCdf<'_> {
    fn eval(&self, x: f64) -> f64 {
        let k = self.sorted.partition_point(|v| *v <= x);
        match self.weights {
            None => k as f64 / self.sorted.len() as f64,
            Some(_) if k == 0 => 0.0,
            Some(_) => self.cumulative[k - 1],
        }
    }

    fn push_breakpoints(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.sorted);
    }
}

fn w1_between(a: &dyn Cdf, b: &dyn Cdf) -> f64 {
    let mut pts = Vec::new();
    a.push_breakpoints(&mut pts);
    b.push_breakpoints(&mut pts);
    pts.sort_by(|x, y| x.total_cmp(y));
    pts.dedup();
    let mut total = 0.0;
    for w in pts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        // both CDFs are affine on the open interval
        let d1 = a.eval(w[0] + len / 3.0) - b.eval(w[0] + len / 3.0);
        let d2 = a.eval(w[0] + 2.0 * len / 3.0) - b.eval(w[0] + 2.0 * len / 3.0);
        let left = 2.0 * d1 - d2;
        let right = 2.0 * d2 - d1;
        total += abs_linear_integral(left, right, len);
    }
    total
}

/// `int_0^len |l + (r - l) s / len| ds`.
fn abs_linear_integral(l: f64, r: f64, len: f64) -> f64 {
    if l * r >= 0.0 {
        0.5 * (l.abs() + r.abs()) * len
    } else {
        0.5 * (l * l + r * r) / (l.abs() + r.abs()) * len
    }
}

/// Exact `W1` between two grid densities (grids may differ).
pub fn w1_grid_grid(a: &GridDensity, b: &GridDensity) -> f64 {
    w1_between(&GridCdf::new(a), &GridCdf::new(b))
}

/// Exact `W1` between an empirical law and a grid density.
pub fn w1_samples_grid(samples: &[f64], b: &GridDensity) -> f64 {
    let sorted = sorted_copy(samples);
    w1_between(&EmpiricalCdf::new(&sorted, None), &GridCdf::new(b))
}

/// Exact `W1` between two empirical laws.
pub fn w1_samples_samples(a: &[f64], b: &[f64]) -> f64 {
    let (sa, sb) = (sorted_copy(a), sorted_copy(b));
    w1_between(&EmpiricalCdf::new(&sa, None), &EmpiricalCdf::new(&sb, None))
}

/// `W1` between two discrete laws on common sorted support points.
pub fn w1_histograms(points: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    let mut cp = 0.0;
    let mut cq = 0.0;
    let mut total = 0.0;
    for i in 0..points.len().saturating_sub(1) {
        cp += p[i] / sp;
        cq += q[i] / sq;
        total += (cp - cq).abs() * (points[i + 1] - points[i]);
    }
    total
}

/// `W1` between weighted empirical laws.
pub fn w1_weighted(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> f64 {
    let (sa, swa) = sort_with_weights(a, wa);
    let (sb, swb) = sort_with_weights(b, wb);
    w1_between(
        &EmpiricalCdf::new(&sa, Some(&swa)),
        &EmpiricalCdf::new(&sb, Some(&swb)),
    )
}

/// Kolmogorov-Smirnov statistic between a sample and a grid density.
pub fn ks_statistic(samples: &[f64], b: &GridDensity) -> f64 {
    let sorted = sorted_copy(samples);
    let cdf = GridCdf::new(b);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf.eval(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn sorted_copy(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    s
}

fn sort_with_weights(x: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|i, j| x[*i].total_cmp(&x[*j]));
    // merge ties so the CDF lookup sees one point per location
    let mut xs: Vec<f64> = Vec::with_capacity(x.len());
    let mut ws: Vec<f64> = Vec::with_capacity(x.len());
    for i in idx {
        if xs.last() == Some(&x[i]) {
            *ws.last_mut().unwrap() += w[i];
        } else {
            xs.push(x[i]);
            ws.push(w[i]);
        }
    }
    (xs, ws)
}
