//! Executes the tests selected in an experiment and writes the run directory.
//!
//! Layout of `<out>/<name>/`: `config.toml` (the effective configuration),
//! `report.txt`, CSV tables and archives per test, and `manifest.txt` with
//! hashes and every seed used. Nothing time- or host-dependent is written, so
//! reruns reproduce every file byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use nlmarkov::coefficients::RegistryParams;
use nlmarkov::particles::rng::derive_seed;
use nlmarkov::particles::{silverman_bandwidth, simulate_ddsde, Bandwidth, InitialLaw, KdeSpec, Kernel, SimulationConfig};
use nlmarkov::pde::{
    auto_grid, barenblatt, check_domination_default, cole_hopf_burgers, dominated_perturbation, heat_kernel,
    solve_linearized_fpke, solve_nlfpke, uniform_times, Barenblatt, SolverConfig,
};
use nlmarkov::verify::distance::w1_samples_grid;
use nlmarkov::verify::{
    compare_fdd, test_ck_violation, test_flow_property_particles, test_flow_property_pde, test_nonlinear_markov,
    MarkovConfig, MarkovTestReport, ProbeSpec, RestartFrom,
};
use nlmarkov::{CoefficientSet, Error as CoreError, Grid, GridDensity, MarginalFlow, PathStore};

use crate::config::{ExperimentConfig, InitialSpec, KernelName, TestKind};
use crate::error::{io_err, Error, Result};
use crate::formats::{density_csv, num, flow_csv, paths_csv, read_density_csv, write_flow_archive, write_path_archive, Metadata};
use crate::report::Report;

/// Seed tag of the particle restart in the flow test.
const FLOW_RESTART_TAG: u64 = 0x5245_5354;
const FDD_TAG: u64 = 0x46_4444;
/// Path archives above this many particles are not also written as CSV.
const PATH_CSV_LIMIT: usize = 10_000;

/// Process exit codes.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_SETUP: i32 = 2;

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: Report,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.passed() {
            EXIT_PASS
        } else {
            EXIT_FAIL
        }
    }
}

/// Everything a test needs, built once from the configuration.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub coefficients: CoefficientSet,
    pub grid: Grid,
    pub zeta: GridDensity,
    pub solver: SolverConfig,
    file_density: Option<GridDensity>,
}

fn setup(msg: impl Into<String>) -> Error {
    Error::Core(CoreError::Setup(msg.into()))
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate().map_err(|(section, key, message)| {
            Error::Config(crate::config::ConfigError {
                line: None,
                message: format!("{section}.{key}: {message}"),
            })
        })?;
        let cc = &cfg.coefficients;
        let defaults = RegistryParams::default();
        let params = RegistryParams {
            m: cc.m,
            dim: 1,
            b0: cc.b0,
            field: cc.field,
            sigma: cc.sigma.unwrap_or(defaults.sigma),
            bump_center: cc.bump_center.unwrap_or(defaults.bump_center),
            bump_half_width: cc.bump_half_width.unwrap_or(defaults.bump_half_width),
            bump_height: cc.bump_height.unwrap_or(defaults.bump_height),
            density_floor: cc.density_floor.unwrap_or(defaults.density_floor),
        };
        let coefficients = CoefficientSet::from_registry(&cc.name, &params)?;
        let file_density = match &cfg.initial {
            InitialSpec::File { path } => {
                let src = std::fs::read_to_string(path).map_err(io_err(Path::new(path)))?;
                let last = read_density_csv(&src)?.pop().expect("reader returns at least one density");
                Some(last.with_time(cfg.time.s))
            }
            _ => None,
        };
        let mut e = Self {
            grid: Grid::new(0.0, 1.0, 2)?,
            zeta: GridDensity::uniform(Grid::new(0.0, 1.0, 2)?, 0.0, 1.0, 0.0)?,
            solver: SolverConfig::default(),
            cfg,
            coefficients,
            file_density,
        };
        let g = &e.cfg.grid;
        e.grid = match (g.x_min, g.x_max) {
            (Some(a), Some(b)) => Grid::new(a, b, g.cells)?,
            _ => auto_grid(&e.coefficients, e.support(), e.cfg.end_time() - e.cfg.time.s, g.cells)?,
        };
        e.zeta = e.initial_density(e.grid)?;
        Ok(e)
    }

    fn exponent(&self) -> Option<f64> {
        self.coefficients.pme_exponent()
    }

    fn is_heat(&self) -> bool {
        matches!(self.cfg.coefficients.name.as_str(), "heat" | "pme") && self.exponent() == Some(1.0)
    }

    fn center(&self) -> f64 {
        match &self.cfg.initial {
            InitialSpec::Dirac { x0 } | InitialSpec::Barenblatt { x0, .. } => *x0,
            InitialSpec::Uniform { a, b } => 0.5 * (a + b),
            InitialSpec::Gaussian { mean, .. } => *mean,
            InitialSpec::File { .. } => self.file_density.as_ref().map_or(0.0, |d| d.mean()),
        }
    }

    fn support(&self) -> (f64, f64) {
        match &self.cfg.initial {
            InitialSpec::Barenblatt { x0, tau } => {
                let r = match self.exponent() {
                    Some(m) if m > 1.0 => Barenblatt::new(m, 1).map(|b| b.support_radius(*tau)).unwrap_or(1.0),
                    _ => 8.0 * (2.0 * tau).sqrt(),
                };
                (x0 - r, x0 + r)
            }
            InitialSpec::File { .. } => match &self.file_density {
                Some(d) => InitialLaw::Density(d.clone()).support(),
                None => (0.0, 0.0),
            },
            _ => self.law_spec().support(),
        }
    }

    /// Law for the particle systems, without grid-dependent cases resolved.
    fn law_spec(&self) -> InitialLaw {
        match &self.cfg.initial {
            InitialSpec::Dirac { x0 } => InitialLaw::Dirac(*x0),
            InitialSpec::Uniform { a, b } => InitialLaw::Uniform(*a, *b),
            InitialSpec::Gaussian { mean, variance } => InitialLaw::Gaussian {
                mean: *mean,
                variance: *variance,
            },
            InitialSpec::Barenblatt { x0, .. } => InitialLaw::Dirac(*x0),
            InitialSpec::File { .. } => InitialLaw::Dirac(self.center()),
        }
    }

    pub fn initial_law(&self) -> Result<InitialLaw> {
        Ok(match &self.cfg.initial {
            InitialSpec::Barenblatt { .. } | InitialSpec::File { .. } => {
                InitialLaw::Density(self.initial_density(self.kde_grid()?)?)
            }
            _ => self.law_spec(),
        })
    }

    /// Initial datum at `s` on `grid`.
    pub fn initial_density(&self, grid: Grid) -> Result<GridDensity> {
        let s = self.cfg.time.s;
        Ok(match &self.cfg.initial {
            InitialSpec::Dirac { x0 } => GridDensity::dirac(grid, *x0, s)?,
            InitialSpec::Uniform { a, b } => GridDensity::uniform(grid, *a, *b, s)?,
            InitialSpec::Gaussian { mean, variance } => GridDensity::gaussian(grid, *mean, *variance, s)?,
            InitialSpec::Barenblatt { x0, tau } => match self.exponent() {
                Some(m) if m > 1.0 => barenblatt(m, 1, s - tau, *x0, s, grid)?,
                Some(_) => heat_kernel(s - tau, *x0, s, grid)?,
                None => return Err(setup("barenblatt data need porous-media coefficients")),
            },
            InitialSpec::File { .. } => {
                let d = self.file_density.as_ref().expect("loaded in new()");
                if d.grid() == &grid {
                    d.clone()
                } else {
                    d.regrid(grid)?
                }
            }
        })
    }

    /// Closed-form solution at `t` on `grid`, when one is known.
    pub fn oracle(&self, t: f64, grid: Grid) -> Result<Option<GridDensity>> {
        let s = self.cfg.time.s;
        if self.cfg.coefficients.name == "burgers" {
            let zeta = self.initial_density(grid)?;
            return Ok(Some(cole_hopf_burgers(&zeta, s, t, grid)?));
        }
        if !matches!(self.cfg.coefficients.name.as_str(), "pme" | "heat") {
            return Ok(None);
        }
        let m = self.exponent().unwrap_or(1.0);
        Ok(match (&self.cfg.initial, m > 1.0) {
            (InitialSpec::Dirac { x0 }, true) => Some(barenblatt(m, 1, s, *x0, t, grid)?),
            (InitialSpec::Barenblatt { x0, tau }, true) => Some(barenblatt(m, 1, s - tau, *x0, t, grid)?),
            (InitialSpec::Dirac { x0 }, false) => Some(heat_kernel(s, *x0, t, grid)?),
            (InitialSpec::Barenblatt { x0, tau }, false) => Some(heat_kernel(s - tau, *x0, t, grid)?),
            (InitialSpec::Gaussian { mean, variance }, false) => {
                Some(GridDensity::gaussian(grid, *mean, variance + 2.0 * (t - s), t)?)
            }
            _ => None,
        })
    }

    fn kde_grid(&self) -> Result<Grid> {
        let p = &self.cfg.particles;
        Ok(Grid::symmetric(p.kde_center, p.kde_half_width, p.kde_cells)?)
    }

    pub fn simulation(&self) -> Result<SimulationConfig> {
        let p = &self.cfg.particles;
        let kde = KdeSpec {
            kernel: match p.kernel {
                KernelName::Gaussian => Kernel::Gaussian,
                KernelName::Epanechnikov => Kernel::Epanechnikov,
                KernelName::Histogram => Kernel::Histogram,
            },
            bandwidth: p.bandwidth.map_or(Bandwidth::Silverman, Bandwidth::Fixed),
            grid: self.kde_grid()?,
        };
        let mut sim = SimulationConfig::new(p.n, p.dt, kde, self.cfg.experiment.seed);
        sim.bootstrap_steps = p.bootstrap_steps;
        sim.feedback_every = p.feedback_every;
        Ok(sim)
    }

    fn markov_config(&self) -> Result<MarkovConfig> {
        let mk = &self.cfg.markov;
        let mut m = MarkovConfig::new(self.simulation()?);
        m.seed_b = mk.seed_b;
        m.min_count = mk.min_count;
        m.bootstrap = mk.bootstrap;
        m.confidence = mk.confidence;
        m.bin_width = mk.bin_width;
        m.setup_tolerance = mk.setup_tolerance;
        m.two_point = mk.two_point;
        Ok(m)
    }

    /// Pairs `(r, t)` in configuration order.
    fn pairs(&self) -> Vec<(f64, f64)> {
        self.cfg.time.r.iter().copied().zip(self.cfg.time.t.iter().copied()).collect()
    }

    fn solve_times(&self) -> Vec<f64> {
        let mut v = uniform_times(self.cfg.time.s, self.cfg.end_time(), self.cfg.time.outputs);
        v.extend(self.cfg.checkpoints());
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        v
    }
}

/// Files of one run, written together at the end.
#[derive(Default)]
struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    seeds: Vec<(String, u64)>,
}

impl Artifacts {
    fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    fn seed(&mut self, label: impl Into<String>, seed: u64) {
        self.seeds.push((label.into(), seed));
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

/// The run itself, without touching the file system.
struct Session<'a> {
    e: &'a Experiment,
    report: Report,
    art: Artifacts,
    flow: Option<MarginalFlow>,
    paths: Option<PathStore>,
}

impl<'a> Session<'a> {
    fn solve(&mut self) -> Result<&MarginalFlow> {
        if self.flow.is_none() {
            let e = self.e;
            let flow = solve_nlfpke(&e.coefficients, &e.zeta, &e.solve_times(), &e.solver)?;
            let g = flow.grid();
            let masses: Vec<f64> = flow.densities().iter().map(|d| d.mass()).collect();
            let r = &mut self.report;
            r.push("solve.grid", format!("[{}, {}] / {}", num(g.x_min()), num(g.x_max()), g.n_cells()));
            r.push("solve.outputs", flow.len());
            r.push("solve.substeps", flow.substeps().iter().sum::<usize>());
            r.push("solve.mass_min", masses.iter().copied().fold(f64::INFINITY, f64::min));
            r.push("solve.mass_max", masses.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            r.push("solve.sup_norm", flow.sup_norm());
            r.push("solve.continuity_constant", flow.continuity_constant());
            let meta: Metadata = vec![
                ("coefficients".into(), e.cfg.coefficients.name.clone()),
                ("m".into(), e.exponent().map_or("none".into(), num)),
                ("scheme".into(), "finite-volume explicit".into()),
                ("diffusion_cfl".into(), num(e.solver.diffusion_cfl)),
                ("transport_cfl".into(), num(e.solver.transport_cfl)),
            ];
            self.art.add("marginals.csv", flow_csv(&flow));
            self.art.add("flow.nlmflow", write_flow_archive(&flow, &meta));
            self.flow = Some(flow);
        }
        Ok(self.flow.as_ref().unwrap())
    }

    fn oracle(&mut self) -> Result<()> {
        let e = self.e;
        self.solve()?;
        let mut exact = Vec::new();
        for (k, t) in e.cfg.time.t.iter().enumerate() {
            let Some(o) = e.oracle(*t, e.grid)? else {
                return Err(setup(format!(
                    "no closed form for `{}` from this initial datum",
                    e.cfg.coefficients.name
                )));
            };
            let flow = self.flow.as_ref().unwrap();
            let u = flow.density_at(*t).expect("checkpoints are solver outputs");
            let l1 = u.l1_distance(&o)?;
            let min = u.values().iter().copied().fold(f64::INFINITY, f64::min);
            let key = format!("oracle.{k}");
            let r = &mut self.report;
            r.push(format!("{key}.t"), t);
            r.push(format!("{key}.l1"), l1);
            r.push(format!("{key}.tolerance"), e.cfg.tolerances.oracle_l1);
            r.push(format!("{key}.min"), min);
            r.push(format!("{key}.sup"), u.sup());
            r.push(format!("{key}.mass_error"), (u.mass() - e.zeta.mass()).abs());
            r.verdict(&key, l1 <= e.cfg.tolerances.oracle_l1);
            exact.push(o);
        }
        self.art.add("oracle.csv", density_csv(&exact));
        Ok(())
    }

    fn simulate(&mut self) -> Result<&PathStore> {
        if self.paths.is_none() {
            let e = self.e;
            let paths = simulate_ddsde(&e.coefficients, &e.initial_law()?, &e.cfg.checkpoints(), &e.simulation()?)?;
            let r = &mut self.report;
            r.push("simulate.particles", paths.n_particles());
            r.push("simulate.dt", paths.scheme.dt);
            r.push("simulate.kde_expansions", paths.scheme.expansions);
            r.push("simulate.drift_range", format!("[{}, {}]", num(paths.scheme.drift_min), num(paths.scheme.drift_max)));
            self.art.add("paths.nlmpath", write_path_archive(&paths));
            if paths.n_particles() <= PATH_CSV_LIMIT {
                self.art.add("paths.csv", paths_csv(&paths));
            }
            self.paths = Some(paths);
        }
        Ok(self.paths.as_ref().unwrap())
    }

    fn simulate_test(&mut self) -> Result<()> {
        let e = self.e;
        self.simulate()?;
        let mut table = String::from("time,mean,variance,w1_oracle\n");
        for (k, t) in e.cfg.time.t.iter().enumerate() {
            let ens = self.paths.as_ref().unwrap().ensemble_at(*t)?;
            let oracle = e.oracle(*t, e.grid)?;
            let w1 = oracle.as_ref().map(|o| w1_samples_grid(ens.positions(), o));
            let key = format!("simulate.{k}");
            let r = &mut self.report;
            r.push(format!("{key}.t"), t);
            r.push(format!("{key}.mean"), ens.mean());
            r.push(format!("{key}.variance"), ens.variance());
            let w = w1.map_or(String::new(), num);
            writeln!(table, "{},{},{},{w}", num(*t), num(ens.mean()), num(ens.variance())).unwrap();
            if let Some(w1) = w1 {
                r.push(format!("{key}.w1"), w1);
                r.push(format!("{key}.tolerance"), e.cfg.tolerances.oracle_w1);
                r.verdict(&key, w1 <= e.cfg.tolerances.oracle_w1);
            }
        }
        self.art.add("particle_marginals.csv", table);
        Ok(())
    }

    fn flow_test(&mut self, particles: bool) -> Result<()> {
        let e = self.e;
        let name = if particles { "flow-particles" } else { "flow" };
        let sim = e.simulation()?;
        if particles {
            self.art.seed("flow-particles.restart", derive_seed(sim.seed, FLOW_RESTART_TAG));
        }
        for (k, (r_, t)) in e.pairs().into_iter().enumerate() {
            let rep = if particles {
                test_flow_property_particles(&e.coefficients, &e.initial_law()?, e.cfg.time.s, r_, t, e.cfg.tolerances.flow_w1, &sim)?
            } else {
                test_flow_property_pde(&e.coefficients, &e.zeta, e.cfg.time.s, r_, t, e.cfg.tolerances.flow_l1, &e.solver)?
            };
            let key = format!("{name}.{k}");
            let r = &mut self.report;
            r.push(format!("{key}.r"), r_);
            r.push(format!("{key}.t"), t);
            r.push(format!("{key}.metric"), format!("{:?}", rep.metric));
            r.push(format!("{key}.distance"), rep.distance);
            r.push(format!("{key}.tolerance"), rep.tolerance);
            r.verdict(&key, rep.pass);
        }
        Ok(())
    }

    /// Wrong marginal for the negative control: the flow of the other
    /// member of the heat / porous-media pair, from the same datum.
    fn control_density(&self, r: f64) -> Result<GridDensity> {
        let e = self.e;
        let other = if e.coefficients.is_linear() {
            CoefficientSet::from_registry("pme", &RegistryParams::pme(2.0))?
        } else {
            CoefficientSet::from_registry("heat", &RegistryParams::default())?
        };
        let grid = e.kde_grid()?;
        let zeta = e.initial_density(grid)?;
        if r <= e.cfg.time.s {
            return Err(setup("the negative control needs r > s"));
        }
        Ok(solve_nlfpke(&other, &zeta, &[e.cfg.time.s, r], &e.solver)?.last().clone())
    }

    fn markov(&mut self, control: bool) -> Result<()> {
        let e = self.e;
        let name = if control { "markov-control" } else { "markov" };
        let mcfg = e.markov_config()?;
        let law = e.initial_law()?;
        for (k, (r_, t)) in e.pairs().into_iter().enumerate() {
            if !(r_ < t) {
                continue;
            }
            let restart = if control {
                RestartFrom::Density {
                    density: self.control_density(r_)?,
                    check: false,
                }
            } else {
                RestartFrom::RunA
            };
            let rep = test_nonlinear_markov(&e.coefficients, e.cfg.time.s, &law, r_, t, &mcfg, &restart)?;
            let key = format!("{name}.{k}");
            self.art.seed(format!("{key}.run_a"), rep.seed_a);
            self.art.seed(format!("{key}.run_b"), rep.seed_b);
            self.art.seed(format!("{key}.bootstrap"), rep.bootstrap_seed);
            self.art.add(format!("{name}_{k}.csv"), markov_csv(&rep));
            let worst = rep
                .bins
                .iter()
                .map(|b| if b.radius > 0.0 { b.w1 / b.radius } else { 0.0 })
                .fold(0.0, f64::max);
            let failed_central = rep.failed_fraction_central();
            let r = &mut self.report;
            r.push(format!("{key}.r"), r_);
            r.push(format!("{key}.t"), t);
            r.push(format!("{key}.bins"), rep.bins.len());
            r.push(format!("{key}.failed_bins"), rep.bins.iter().filter(|b| !b.pass).count());
            r.push(format!("{key}.failed_fraction_central"), failed_central);
            r.push(format!("{key}.worst_ratio"), worst);
            r.push(format!("{key}.start_distance"), rep.start_distance);
            r.push(format!("{key}.dropped_mass_a"), rep.dropped_mass_a);
            r.push(format!("{key}.dropped_mass_b"), rep.dropped_mass_b);
            r.push(format!("{key}.markov_verdict"), if rep.verdict { "pass" } else { "fail" });
            if let Some(tp) = rep.two_point_verdict {
                r.push(format!("{key}.two_point_verdict"), if tp { "pass" } else { "fail" });
            }
            if control {
                r.push(format!("{key}.required_fraction"), e.cfg.markov.control_fraction);
                r.verdict(&key, failed_central >= e.cfg.markov.control_fraction);
            } else {
                r.verdict(&key, rep.verdict);
            }
        }
        Ok(())
    }

    fn fdd(&mut self) -> Result<()> {
        let e = self.e;
        let center = e.center();
        self.simulate()?;
        let paths = self.paths.as_ref().unwrap();
        let heat_second_moment = match (&e.cfg.initial, e.is_heat()) {
            (InitialSpec::Dirac { x0 }, true) => Some((*x0, 0.0)),
            (InitialSpec::Gaussian { mean, variance }, true) => Some((*mean, *variance)),
            (InitialSpec::Barenblatt { x0, tau }, true) => Some((*x0, 2.0 * tau)),
            _ => None,
        };
        let mut lines = Vec::new();
        for (k, (r_, t)) in e.pairs().into_iter().enumerate() {
            if !(r_ < t) {
                continue;
            }
            let times = [r_, t];
            let width = match e.cfg.fdd.bin_width {
                Some(w) => w,
                None => {
                    let idx = paths.time_index(r_).expect("checkpoints are stored");
                    2.0 * silverman_bandwidth(&paths.column(idx))?
                }
            };
            let seed = derive_seed(e.cfg.experiment.seed, FDD_TAG + k as u64);
            self.art.seed(format!("fdd.{k}.bootstrap"), seed);
            let product = |x: &[f64]| x[0] * x[1];
            let indicator = |x: &[f64]| ((x[0] <= center) && (x[1] <= center)) as u8 as f64;
            let fs: [(&str, &dyn Fn(&[f64]) -> f64); 2] = [("product", &product), ("indicator", &indicator)];
            for (label, f) in fs {
                let cmp = compare_fdd(paths, &times, width, e.cfg.fdd.min_count, f, e.cfg.fdd.resamples, seed)?;
                let key = format!("fdd.{k}.{label}");
                let mut pass = cmp.z_score <= e.cfg.fdd.max_z;
                lines.push((key.clone(), cmp.clone()));
                let r = &mut self.report;
                r.push(format!("{key}.times"), format!("{} {}", num(r_), num(t)));
                r.push(format!("{key}.bin_width"), width);
                r.push(format!("{key}.reconstructed"), cmp.reconstructed);
                r.push(format!("{key}.reconstructed_se"), cmp.reconstructed_se);
                r.push(format!("{key}.direct"), cmp.direct);
                r.push(format!("{key}.direct_se"), cmp.direct_se);
                r.push(format!("{key}.z_score"), cmp.z_score);
                if let (Some((mu, var0)), "product") = (heat_second_moment, label) {
                    let exact = mu * mu + var0 + 2.0 * (r_ - e.cfg.time.s);
                    let z = (cmp.reconstructed - exact).abs() / cmp.reconstructed_se.max(f64::MIN_POSITIVE);
                    r.push(format!("{key}.analytic"), exact);
                    r.push(format!("{key}.analytic_z"), z);
                    pass &= z <= e.cfg.fdd.max_z;
                }
                r.verdict(&key, pass);
            }
        }
        let mut csv = String::from("key,reconstructed,reconstructed_se,direct,direct_se,z_score\n");
        for (key, c) in lines {
            writeln!(csv, "{key},{},{},{},{},{}", num(c.reconstructed), num(c.reconstructed_se), num(c.direct), num(c.direct_se), num(c.z_score)).unwrap();
        }
        self.art.add("fdd.csv", csv);
        Ok(())
    }

    fn ck(&mut self) -> Result<()> {
        let e = self.e;
        let (Some(m), "pme" | "heat") = (e.exponent(), e.cfg.coefficients.name.as_str()) else {
            return Err(setup("the composition test needs pme or heat coefficients"));
        };
        let InitialSpec::Dirac { x0 } = e.cfg.initial else {
            return Err(setup("the composition test starts from a point mass"));
        };
        let ck = &e.cfg.ck;
        let grid = Grid::symmetric(x0, ck.half_width, ck.cells)?;
        let probe = ProbeSpec {
            stride: ck.stride,
            self_tolerance: ck.self_tolerance,
            ..ProbeSpec::default()
        };
        let linear = m == 1.0;
        for (k, (r_, t)) in e.pairs().into_iter().enumerate() {
            let rep = test_ck_violation(m, e.cfg.time.s, x0, r_, t, grid, &probe, &e.solver)?;
            let small = rep.residual <= ck.residual;
            let verdict = match (small, linear) {
                (true, true) => "holds (linear)",
                (false, false) => "violated (nonlinear)",
                (true, false) => "holds (nonlinear, unexpected)",
                (false, true) => "violated (linear, unexpected)",
            };
            let key = format!("ck.{k}");
            let r = &mut self.report;
            r.push(format!("{key}.m"), m);
            r.push(format!("{key}.r"), r_);
            r.push(format!("{key}.t"), t);
            r.push(format!("{key}.residual"), rep.residual);
            r.push(format!("{key}.threshold"), ck.residual);
            r.push(format!("{key}.quadrature_estimate"), rep.quadrature_estimate);
            r.push(format!("{key}.probes"), rep.probes);
            r.push(format!("{key}.w1"), rep.w1);
            r.push(format!("{key}.lhs_variance"), rep.lhs_variance);
            r.push(format!("{key}.rhs_variance"), rep.rhs_variance);
            r.push(format!("{key}.summary"), format!("CK-residual: {}; verdict: {verdict}", if small { "small" } else { "large" }));
            r.verdict(&key, small == linear);
            let mut csv = String::from("x,lhs,rhs\n");
            for ((x, a), b) in grid.centers().zip(rep.lhs.values()).zip(rep.rhs.values()) {
                writeln!(csv, "{},{},{}", num(x), num(*a), num(*b)).unwrap();
            }
            self.art.add(format!("ck_{k}.csv"), csv);
        }
        Ok(())
    }

    fn domination(&mut self) -> Result<()> {
        let e = self.e;
        let d = &e.cfg.domination;
        let times = uniform_times(e.cfg.time.s, e.cfg.end_time(), d.outputs);
        let mu = solve_nlfpke(&e.coefficients, &e.zeta, &times, &e.solver)?;
        let pert = dominated_perturbation(&e.zeta, d.g_min, d.g_max, d.width)?;
        let nu = solve_linearized_fpke(&e.coefficients, &mu, &pert.density, &times, &e.solver)?;
        let rep = check_domination_default(&nu, &mu)?;
        let r = &mut self.report;
        r.push("domination.g_range", format!("[{}, {}]", num(pert.g_min), num(pert.g_max)));
        r.push("domination.c_star", rep.c_star);
        r.push("domination.bound", d.bound);
        r.verdict("domination", rep.c_star <= d.bound);
        let mut csv = String::from("time,ratio\n");
        for (t, q) in &rep.per_time {
            writeln!(csv, "{},{}", num(*t), num(*q)).unwrap();
        }
        self.art.add("domination.csv", csv);
        Ok(())
    }
}

/// Per-bin table of a Markov test.
pub fn markov_csv(rep: &MarkovTestReport) -> String {
    let mut out = String::from("y_center,count_a,count_b,w1,tv,radius,pass,central,two_point_w1,two_point_radius,two_point_pass\n");
    for b in &rep.bins {
        let (w, rad, p) = match &b.two_point {
            Some(tp) => (num(tp.w1), num(tp.radius), tp.pass.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{w},{rad},{p}",
            num(b.y_center), b.count_a, b.count_b, num(b.w1), num(b.tv), num(b.radius), b.pass, b.central
        )
        .unwrap();
    }
    out
}

/// Runs every selected test (all of them when none is selected) and writes
/// the run directory under `out_root`.
pub fn run_experiment(cfg: ExperimentConfig, out_root: &Path) -> Result<RunOutcome> {
    let e = Experiment::new(cfg)?;
    let tests = if e.cfg.experiment.tests.is_empty() {
        TestKind::ALL.to_vec()
    } else {
        e.cfg.experiment.tests.clone()
    };
    let mut s = Session {
        e: &e,
        report: Report::new(),
        art: Artifacts::default(),
        flow: None,
        paths: None,
    };
    s.report.push("experiment", &e.cfg.experiment.name);
    s.report.push("coefficients", &e.cfg.coefficients.name);
    s.report.push("seed", e.cfg.experiment.seed);
    s.art.seed("seed", e.cfg.experiment.seed);
    for t in &tests {
        match t {
            TestKind::Solve => s.solve().map(|_| ())?,
            TestKind::Oracle => s.oracle()?,
            TestKind::Simulate => s.simulate_test()?,
            TestKind::Flow => s.flow_test(false)?,
            TestKind::FlowParticles => s.flow_test(true)?,
            TestKind::Markov => s.markov(false)?,
            TestKind::MarkovControl => s.markov(true)?,
            TestKind::Fdd => s.fdd()?,
            TestKind::Ck => s.ck()?,
            TestKind::Domination => s.domination()?,
        }
    }
    let passed = s.report.passed();
    s.report.push("verdict", if passed { "pass" } else { "fail" });
    let Session { mut report, mut art, .. } = s;
    if !passed {
        report.push("failed", report.failures().join(" "));
    }

    let config_text = e.cfg.to_toml();
    art.files.insert(0, ("config.toml".into(), config_text.clone().into_bytes()));
    art.add("report.txt", report.render());
    let mut manifest = String::new();
    writeln!(manifest, "experiment = {}", e.cfg.experiment.name).unwrap();
    writeln!(manifest, "runner = nlmarkov-lab {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(manifest, "core = nlmarkov {}", nlmarkov::VERSION).unwrap();
    writeln!(manifest, "config_sha256 = {}", sha256_hex(config_text.as_bytes())).unwrap();
    writeln!(manifest, "tests = {}", tests.iter().map(|t| t.name()).collect::<Vec<_>>().join(" ")).unwrap();
    for (label, seed) in &art.seeds {
        writeln!(manifest, "seed.{label} = {seed}").unwrap();
    }
    for (name, bytes) in &art.files {
        writeln!(manifest, "file.{name} = {}", sha256_hex(bytes)).unwrap();
    }

    let dir = out_root.join(&e.cfg.experiment.name);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (name, bytes) in art.files.iter().chain(std::iter::once(&("manifest.txt".to_string(), manifest.into_bytes()))) {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(io_err(&p))?;
    }
    Ok(RunOutcome { dir, report })
}
