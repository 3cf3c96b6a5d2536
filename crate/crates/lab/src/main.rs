use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use nlmarkov_lab::config::{ExperimentConfig, InitialSpec, TestKind};
use nlmarkov_lab::formats::{num, read_flow_archive, read_path_archive, FLOW_MAGIC, PATH_MAGIC};
use nlmarkov_lab::{run_experiment, Report, EXIT_FAIL, EXIT_SETUP};

#[derive(Parser)]
#[command(name = "nlmarkov", version, about = "Nonlinear Fokker-Planck flows and their Markov structure")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every test selected in an experiment file.
    Run(RunArgs),
    /// Grid solve of the nonlinear equation.
    Solve(OpArgs),
    /// Particle simulation of the distribution-dependent SDE.
    Simulate(OpArgs),
    /// Two-run test of the nonlinear Markov property.
    VerifyMarkov {
        #[command(flatten)]
        op: OpArgs,
        /// Restart Run B from a wrong marginal instead (negative control).
        #[arg(long)]
        control: bool,
    },
    /// Restart invariance of the marginal flow.
    VerifyFlow {
        #[command(flatten)]
        op: OpArgs,
        /// Use the particle system instead of the grid solver.
        #[arg(long)]
        particles: bool,
    },
    /// Chapman-Kolmogorov composition from a point mass.
    VerifyCk(OpArgs),
    /// Finite-dimensional distributions from chained conditional kernels.
    ReconstructFdd(OpArgs),
    /// Summarize a flow or path archive.
    Report {
        archive: PathBuf,
    },
    /// Run the experiment files listed in a batch file concurrently.
    Batch {
        /// One experiment path per line; `#` starts a comment.
        file: PathBuf,
        #[arg(long, env = "NLMARKOV_OUT_DIR", default_value = "runs")]
        out: PathBuf,
        #[arg(long, env = "NLMARKOV_WORKERS", default_value_t = 1)]
        workers: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct OpArgs {
    /// Experiment file to start from; built-in defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Flags mirror experiment keys and override the file.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long, env = "NLMARKOV_OUT_DIR", default_value = "runs")]
    out: PathBuf,
    /// experiment.name
    #[arg(long)]
    name: Option<String>,
    /// experiment.seed
    #[arg(long)]
    seed: Option<u64>,
    /// coefficients.name
    #[arg(long)]
    coefficients: Option<String>,
    /// coefficients.m
    #[arg(long)]
    m: Option<f64>,
    /// initial point mass at x0
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    /// time.s
    #[arg(long, allow_hyphen_values = true)]
    s: Option<f64>,
    /// time.r
    #[arg(long, value_delimiter = ',')]
    r: Option<Vec<f64>>,
    /// time.t
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
    /// grid.cells
    #[arg(long)]
    cells: Option<usize>,
    /// particles.n
    #[arg(long)]
    n: Option<usize>,
    /// particles.dt
    #[arg(long)]
    dt: Option<f64>,
    /// particles.bandwidth
    #[arg(long)]
    bandwidth: Option<f64>,
    /// markov.seed_b
    #[arg(long)]
    seed_b: Option<u64>,
    /// markov.confidence
    #[arg(long)]
    confidence: Option<f64>,
    /// markov.min_count
    #[arg(long)]
    min_count: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = &self.name {
            cfg.experiment.name = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.experiment.seed = v;
        }
        if let Some(v) = &self.coefficients {
            cfg.coefficients.name = v.clone();
        }
        if let Some(v) = self.m {
            cfg.coefficients.m = Some(v);
        }
        if let Some(v) = self.x0 {
            cfg.initial = InitialSpec::Dirac { x0: v };
        }
        if let Some(v) = self.s {
            cfg.time.s = v;
        }
        if let Some(v) = &self.r {
            cfg.time.r = v.clone();
        }
        if let Some(v) = &self.t {
            cfg.time.t = v.clone();
        }
        if let Some(v) = self.cells {
            cfg.grid.cells = v;
        }
        if let Some(v) = self.n {
            cfg.particles.n = v;
        }
        if let Some(v) = self.dt {
            cfg.particles.dt = v;
        }
        if let Some(v) = self.bandwidth {
            cfg.particles.bandwidth = Some(v);
        }
        if let Some(v) = self.seed_b {
            cfg.markov.seed_b = Some(v);
        }
        if let Some(v) = self.confidence {
            cfg.markov.confidence = v;
        }
        if let Some(v) = self.min_count {
            cfg.markov.min_count = v;
        }
    }
}

fn load(path: Option<&Path>, name: &str, tests: Vec<TestKind>) -> Result<ExperimentConfig, String> {
    match path {
        Some(p) => {
            let mut cfg = ExperimentConfig::from_path(p).map_err(|e| format!("{}: {e}", p.display()))?;
            cfg.experiment.tests = tests;
            Ok(cfg)
        }
        None => Ok(ExperimentConfig::quick(name, 1, tests)),
    }
}

/// Runs and prints the report; returns the exit code and the report.
fn execute(cfg: Result<ExperimentConfig, String>, overrides: &Overrides) -> (u8, Option<Report>) {
    let mut cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return (EXIT_SETUP as u8, None);
        }
    };
    overrides.apply(&mut cfg);
    match run_experiment(cfg, &overrides.out) {
        Ok(outcome) => {
            print!("{}", outcome.report.render());
            println!("output = {}", outcome.dir.display());
            (outcome.exit_code() as u8, Some(outcome.report))
        }
        Err(e) => {
            eprintln!("error: {e}");
            (EXIT_SETUP as u8, None)
        }
    }
}

fn op(args: &OpArgs, name: &str, tests: Vec<TestKind>) -> (u8, Option<Report>) {
    execute(load(args.config.as_deref(), name, tests), &args.overrides)
}

fn archive_report(path: &Path) -> Result<Report, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut r = Report::new();
    r.push("archive", path.display());
    if bytes.starts_with(FLOW_MAGIC) || bytes.is_empty() {
        let (flow, meta) = read_flow_archive(&bytes).map_err(|e| e.to_string())?;
        let g = flow.grid();
        r.push("kind", "flow");
        for (k, v) in meta {
            r.push(format!("meta.{k}"), v);
        }
        r.push("grid", format!("[{}, {}] / {}", num(g.x_min()), num(g.x_max()), g.n_cells()));
        r.push("times", flow.len());
        r.push("start_time", flow.start_time());
        r.push("end_time", flow.end_time());
        r.push("substeps", flow.substeps().iter().sum::<usize>());
        r.push("sup_norm", flow.sup_norm());
        r.push("continuity_constant", flow.continuity_constant());
        for (k, d) in flow.densities().iter().enumerate() {
            r.push(format!("density.{k}"), format!("t={} mass={} mean={} variance={}", num(d.time()), num(d.mass()), num(d.mean()), num(d.variance())));
        }
    } else if bytes.starts_with(PATH_MAGIC) {
        let p = read_path_archive(&bytes).map_err(|e| e.to_string())?;
        r.push("kind", "paths");
        r.push("seed", p.seed());
        r.push("particles", p.n_particles());
        for (k, v) in nlmarkov_lab::formats::scheme_metadata(&p.scheme) {
            r.push(format!("scheme.{k}"), v);
        }
        for (k, t) in p.times().iter().enumerate() {
            let e = p.ensemble_at(*t).map_err(|e| e.to_string())?;
            r.push(format!("ensemble.{k}"), format!("t={} mean={} variance={}", num(*t), num(e.mean()), num(e.variance())));
        }
    } else {
        return Err(format!("{}: not a flow or path archive", path.display()));
    }
    Ok(r)
}

fn batch(file: &Path, out: &Path, workers: usize) -> u8 {
    let src = match std::fs::read_to_string(file) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", file.display());
            return EXIT_SETUP as u8;
        }
    };
    let base = file.parent().unwrap_or(Path::new("."));
    let jobs: Vec<PathBuf> = src
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| base.join(l))
        .collect();
    let next = AtomicUsize::new(0);
    let results = Mutex::new(vec![(EXIT_SETUP, String::new()); jobs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(jobs.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(k) else { break };
                let res = ExperimentConfig::from_path(job)
                    .map_err(|e| e.to_string())
                    .and_then(|c| run_experiment(c, out).map_err(|e| e.to_string()));
                let line = match res {
                    Ok(o) => (o.exit_code(), format!("{} -> {}", job.display(), o.dir.display())),
                    Err(e) => (EXIT_SETUP, format!("{}: {e}", job.display())),
                };
                results.lock().unwrap()[k] = line;
            });
        }
    });
    let results = results.into_inner().unwrap();
    let mut code = 0;
    for (c, line) in &results {
        let status = match *c {
            0 => "pass",
            1 => "fail",
            _ => "error",
        };
        println!("{status} {line}");
        code = code.max(*c);
    }
    code.max(if results.is_empty() { EXIT_FAIL } else { 0 }) as u8
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Run(a) => {
            execute(
                ExperimentConfig::from_path(&a.config).map_err(|e| format!("{}: {e}", a.config.display())),
                &a.overrides,
            )
            .0
        }
        Command::Solve(a) => op(a, "solve", vec![TestKind::Solve]).0,
        Command::Simulate(a) => op(a, "simulate", vec![TestKind::Simulate]).0,
        Command::VerifyMarkov { op: a, control } => {
            let t = if *control { TestKind::MarkovControl } else { TestKind::Markov };
            op(a, "verify-markov", vec![t]).0
        }
        Command::VerifyFlow { op: a, particles } => {
            let t = if *particles { TestKind::FlowParticles } else { TestKind::Flow };
            op(a, "verify-flow", vec![t]).0
        }
        Command::VerifyCk(a) => {
            let (code, report) = op(a, "verify-ck", vec![TestKind::Ck]);
            for (k, v) in report.iter().flat_map(|r| r.entries()) {
                if k.ends_with(".summary") {
                    println!("{v}");
                }
            }
            code
        }
        Command::ReconstructFdd(a) => op(a, "reconstruct-fdd", vec![TestKind::Fdd]).0,
        Command::Report { archive } => match archive_report(archive) {
            Ok(r) => {
                print!("{}", r.render());
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_SETUP as u8
            }
        },
        Command::Batch { file, out, workers } => batch(file, out, *workers),
    };
    ExitCode::from(code)
}
