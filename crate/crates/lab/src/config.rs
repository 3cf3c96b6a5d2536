//! Experiment files.
//!
//! An experiment is a TOML document with one table per concern. Numbers are
//! parsed with correctly rounded decimal conversion, so a tolerance or seed
//! written in the file is the exact value the run sees. Validation errors
//! point at the line holding the offending key.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub coefficients: CoefficientSection,
    #[serde(default)]
    pub initial: InitialSpec,
    pub time: TimeSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub particles: ParticleSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
    #[serde(default)]
    pub markov: MarkovSection,
    #[serde(default)]
    pub fdd: FddSection,
    #[serde(default)]
    pub ck: CkSection,
    #[serde(default)]
    pub domination: DominationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    /// Required: every random draw of the run derives from it.
    pub seed: u64,
    #[serde(default)]
    pub tests: Vec<TestKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    Solve,
    Oracle,
    Simulate,
    Flow,
    FlowParticles,
    Markov,
    MarkovControl,
    Fdd,
    Ck,
    Domination,
}

impl TestKind {
    pub const ALL: [TestKind; 10] = [
        TestKind::Solve,
        TestKind::Oracle,
        TestKind::Simulate,
        TestKind::Flow,
        TestKind::FlowParticles,
        TestKind::Markov,
        TestKind::MarkovControl,
        TestKind::Fdd,
        TestKind::Ck,
        TestKind::Domination,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Solve => "solve",
            TestKind::Oracle => "oracle",
            TestKind::Simulate => "simulate",
            TestKind::Flow => "flow",
            TestKind::FlowParticles => "flow-particles",
            TestKind::Markov => "markov",
            TestKind::MarkovControl => "markov-control",
            TestKind::Fdd => "fdd",
            TestKind::Ck => "ck",
            TestKind::Domination => "domination",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    /// Registry name: pme, heat, burgers, gpme or meanfield.
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump_center: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump_half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump_height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_floor: Option<f64>,
}

impl Default for CoefficientSection {
    fn default() -> Self {
        Self {
            name: "pme".into(),
            m: Some(2.0),
            b0: None,
            field: None,
            sigma: None,
            bump_center: None,
            bump_half_width: None,
            bump_height: None,
            density_floor: None,
        }
    }
}

/// Initial datum at time `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    Dirac {
        #[serde(default)]
        x0: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    Gaussian {
        mean: f64,
        variance: f64,
    },
    /// Source-type solution from `delta_{x0}`, already `tau` old at `s`.
    Barenblatt {
        #[serde(default)]
        x0: f64,
        tau: f64,
    },
    /// CSV with header `time,x,u` on a uniform grid; the last time is used.
    File {
        path: String,
    },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Dirac { x0: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default)]
    pub s: f64,
    /// Restart times, paired with `t`.
    pub r: Vec<f64>,
    pub t: Vec<f64>,
    /// Extra equally spaced output times of `solve` on `[s, max t]`.
    #[serde(default = "default_outputs")]
    pub outputs: usize,
}

fn default_outputs() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub cells: usize,
    /// Explicit domain; sized from the coefficients when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            cells: 1024,
            x_min: None,
            x_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelName {
    Gaussian,
    Epanechnikov,
    Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticleSection {
    pub n: usize,
    pub dt: f64,
    pub kernel: KernelName,
    /// Fixed bandwidth; Silverman's rule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    pub kde_cells: usize,
    pub kde_half_width: f64,
    #[serde(default)]
    pub kde_center: f64,
    pub feedback_every: usize,
    pub bootstrap_steps: usize,
}

impl Default for ParticleSection {
    fn default() -> Self {
        Self {
            n: 100_000,
            dt: 1e-3,
            kernel: KernelName::Gaussian,
            bandwidth: None,
            kde_cells: 1024,
            kde_half_width: 8.0,
            kde_center: 0.0,
            feedback_every: 1,
            bootstrap_steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSection {
    /// Grid solution against the closed form.
    pub oracle_l1: f64,
    /// Particle marginal against the closed form.
    pub oracle_w1: f64,
    pub flow_l1: f64,
    pub flow_w1: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        Self {
            oracle_l1: 1e-2,
            oracle_w1: 0.05,
            flow_l1: 1e-3,
            flow_w1: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkovSection {
    pub confidence: f64,
    pub bootstrap: usize,
    pub min_count: usize,
    /// Largest W1 between Run A at `r` and the Run B start.
    pub setup_tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_b: Option<u64>,
    pub two_point: bool,
    /// Smallest failed fraction of central bins for the wrong-marginal
    /// control to count as detected.
    pub control_fraction: f64,
}

impl Default for MarkovSection {
    fn default() -> Self {
        Self {
            confidence: 0.99,
            bootstrap: 200,
            min_count: 400,
            setup_tolerance: 0.05,
            bin_width: None,
            seed_b: None,
            two_point: true,
            control_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FddSection {
    /// Bin width at every chain time; twice the Silverman bandwidth at the
    /// first time when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    pub min_count: usize,
    pub resamples: usize,
    /// Largest accepted number of combined standard errors.
    pub max_z: f64,
}

impl Default for FddSection {
    fn default() -> Self {
        Self {
            bin_width: None,
            min_count: 20,
            resamples: 50,
            max_z: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CkSection {
    pub cells: usize,
    pub half_width: f64,
    pub stride: usize,
    pub self_tolerance: f64,
    /// Residuals at or below this count as small.
    pub residual: f64,
}

impl Default for CkSection {
    fn default() -> Self {
        Self {
            cells: 320,
            half_width: 16.0,
            stride: 2,
            self_tolerance: 0.05,
            residual: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DominationSection {
    pub g_min: f64,
    pub g_max: f64,
    /// Width of the logistic step between `g_min` and `g_max`.
    pub width: f64,
    /// Output times of the frozen flow on `[s, max t]`.
    pub outputs: usize,
    pub bound: f64,
}

impl Default for DominationSection {
    fn default() -> Self {
        Self {
            g_min: 0.5,
            g_max: 2.0,
            width: 0.2,
            outputs: 2000,
            bound: 2.1,
        }
    }
}

/// Parse or validation failure, with the 1-based line it refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

/// Line of `key` inside `[section]`, or of the section header, or `None`.
pub fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

impl ExperimentConfig {
    /// Parses and validates.
    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(src).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of_offset(src, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate().map_err(|(section, key, message)| ConfigError {
            line: locate(src, section, key),
            message: format!("{section}.{key}: {message}"),
        })?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_toml(&src)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment configs always serialize")
    }

    /// All referenced times after `s`, sorted and deduplicated.
    pub fn checkpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = std::iter::once(self.time.s)
            .chain(self.time.r.iter().copied())
            .chain(self.time.t.iter().copied())
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn end_time(&self) -> f64 {
        self.time.t.iter().copied().fold(self.time.s, f64::max)
    }

    /// Checks the invariants; on failure returns `(section, key, message)`.
    pub fn validate(&self) -> Result<(), (&'static str, &'static str, String)> {
        fn positive(section: &'static str, key: &'static str, v: f64) -> Result<(), (&'static str, &'static str, String)> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err((section, key, format!("must be positive and finite (got {v})")))
            }
        }
        fn at_least(section: &'static str, key: &'static str, v: usize, min: usize) -> Result<(), (&'static str, &'static str, String)> {
            if v >= min {
                Ok(())
            } else {
                Err((section, key, format!("must be at least {min} (got {v})")))
            }
        }
        let e = &self.experiment;
        if e.name.is_empty() || e.name.contains(['/', '\\']) {
            return Err(("experiment", "name", "must be a non-empty file name".into()));
        }
        let tm = &self.time;
        if !tm.s.is_finite() {
            return Err(("time", "s", "must be finite".into()));
        }
        if tm.t.is_empty() {
            return Err(("time", "t", "needs at least one time".into()));
        }
        if tm.r.len() != tm.t.len() {
            return Err(("time", "r", format!("has {} entries but t has {}", tm.r.len(), tm.t.len())));
        }
        if tm.t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(("time", "t", "times must be strictly increasing".into()));
        }
        if tm.r.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(("time", "r", "times must be nondecreasing".into()));
        }
        for (r, t) in tm.r.iter().zip(&tm.t) {
            if !(tm.s <= *r && r <= t && t.is_finite()) {
                return Err(("time", "r", format!("need s <= r <= t (s = {}, r = {r}, t = {t})", tm.s)));
            }
        }
        if !(self.end_time() > tm.s) {
            return Err(("time", "t", "the last time must exceed s".into()));
        }
        at_least("time", "outputs", tm.outputs, 1)?;

        let c = &self.coefficients;
        if !nlmarkov::coefficients::REGISTRY_NAMES.contains(&c.name.as_str()) {
            return Err((
                "coefficients",
                "name",
                format!("unknown set `{}`; expected one of {:?}", c.name, nlmarkov::coefficients::REGISTRY_NAMES),
            ));
        }
        if c.name == "pme" && c.m.is_none() {
            return Err(("coefficients", "m", "pme requires the exponent m".into()));
        }
        if let Some(m) = c.m {
            if !(m >= 1.0 && m.is_finite()) {
                return Err(("coefficients", "m", format!("must be at least 1 (got {m})")));
            }
        }
        if let Some(f) = c.density_floor {
            positive("coefficients", "density_floor", f)?;
        }

        match &self.initial {
            InitialSpec::Uniform { a, b } if !(b > a) => {
                return Err(("initial", "b", "uniform law needs a < b".into()))
            }
            InitialSpec::Gaussian { variance, .. } => positive("initial", "variance", *variance)?,
            InitialSpec::Barenblatt { tau, .. } => positive("initial", "tau", *tau)?,
            InitialSpec::File { path } if path.is_empty() => {
                return Err(("initial", "path", "must not be empty".into()))
            }
            _ => {}
        }

        let g = &self.grid;
        at_least("grid", "cells", g.cells, 2)?;
        match (g.x_min, g.x_max) {
            (None, None) => {}
            (Some(a), Some(b)) if a < b && a.is_finite() && b.is_finite() => {}
            (Some(_), Some(_)) => return Err(("grid", "x_max", "need x_min < x_max".into())),
            (None, Some(_)) => return Err(("grid", "x_max", "x_min and x_max go together".into())),
            (Some(_), None) => return Err(("grid", "x_min", "x_min and x_max go together".into())),
        }

        let p = &self.particles;
        at_least("particles", "n", p.n, 2)?;
        positive("particles", "dt", p.dt)?;
        if let Some(b) = p.bandwidth {
            positive("particles", "bandwidth", b)?;
        }
        at_least("particles", "kde_cells", p.kde_cells, 2)?;
        positive("particles", "kde_half_width", p.kde_half_width)?;
        at_least("particles", "feedback_every", p.feedback_every, 1)?;

        let t = &self.tolerances;
        positive("tolerances", "oracle_l1", t.oracle_l1)?;
        positive("tolerances", "oracle_w1", t.oracle_w1)?;
        positive("tolerances", "flow_l1", t.flow_l1)?;
        positive("tolerances", "flow_w1", t.flow_w1)?;

        let mk = &self.markov;
        if !(mk.confidence > 0.0 && mk.confidence < 1.0) {
            return Err(("markov", "confidence", "must lie in (0, 1)".into()));
        }
        at_least("markov", "bootstrap", mk.bootstrap, 10)?;
        at_least("markov", "min_count", mk.min_count, 1)?;
        positive("markov", "setup_tolerance", mk.setup_tolerance)?;
        if let Some(w) = mk.bin_width {
            positive("markov", "bin_width", w)?;
        }
        if !(mk.control_fraction > 0.0 && mk.control_fraction <= 1.0) {
            return Err(("markov", "control_fraction", "must lie in (0, 1]".into()));
        }

        let f = &self.fdd;
        if let Some(w) = f.bin_width {
            positive("fdd", "bin_width", w)?;
        }
        at_least("fdd", "min_count", f.min_count, 1)?;
        at_least("fdd", "resamples", f.resamples, 2)?;
        positive("fdd", "max_z", f.max_z)?;

        let k = &self.ck;
        at_least("ck", "cells", k.cells, 2)?;
        positive("ck", "half_width", k.half_width)?;
        at_least("ck", "stride", k.stride, 1)?;
        positive("ck", "self_tolerance", k.self_tolerance)?;
        positive("ck", "residual", k.residual)?;

        let d = &self.domination;
        positive("domination", "g_min", d.g_min)?;
        if !(d.g_max >= d.g_min && d.g_max.is_finite()) {
            return Err(("domination", "g_max", "need g_min <= g_max".into()));
        }
        positive("domination", "width", d.width)?;
        at_least("domination", "outputs", d.outputs, 1)?;
        positive("domination", "bound", d.bound)?;
        Ok(())
    }

    /// Defaults for a one-off run from the command line.
    pub fn quick(name: &str, seed: u64, tests: Vec<TestKind>) -> Self {
        Self {
            experiment: ExperimentSection {
                name: name.into(),
                seed,
                tests,
            },
            coefficients: CoefficientSection::default(),
            initial: InitialSpec::default(),
            time: TimeSection {
                s: 0.0,
                r: vec![0.5],
                t: vec![1.0],
                outputs: default_outputs(),
            },
            grid: GridSection::default(),
            particles: ParticleSection::default(),
            tolerances: ToleranceSection::default(),
            markov: MarkovSection::default(),
            fdd: FddSection::default(),
            ck: CkSection::default(),
            domination: DominationSection::default(),
        }
    }
}
