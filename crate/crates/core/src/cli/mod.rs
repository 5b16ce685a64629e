//! Command-line front end: `simulate`, `sweep`, `project`, `transport`, `check`.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure, 4 property-suite failure.

pub mod config;
pub mod csv;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::constraint::{project, ConstraintSet, ConvexRegion, InteractionSpec, PotentialSpec};
use crate::diagnostics::{
    check_generalized_geodesic, check_hilbertian_identity, check_mixture_convexity, check_monotone_field,
    check_subdifferential_constant, check_variational_inequality, CloudShape, PropertyReport,
};
use crate::dynamics::{epsilon_sweep, simulate};
use crate::error::Error;
use crate::measure::RandomSource;
use crate::transport::{exact_plan, sinkhorn, transport_map, SinkhornOptions};

pub use config::{RunConfig, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(name = "constrained-law", version, about = "Penalized particle dynamics with a W2 constraint")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads (advisory; runs are single-threaded and deterministic).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the scheme and write trajectory and diagnostics CSVs.
    Simulate(RunArgs),
    /// Run the scheme over several epsilons with common random numbers.
    Sweep(SweepArgs),
    /// Project a point cloud onto the configured constraint set.
    Project(ProjectArgs),
    /// Exact (or entropic) transport between two point clouds.
    Transport(TransportArgs),
    /// Run a named property suite; exits 4 if any report fails.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated, strictly decreasing; overrides `[sweep] eps`.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Point cloud CSV, one particle per row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransportArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Entropic regularization; exact assignment when absent.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Monotone,
    Variational,
    Subdifferential,
    Identities,
    All,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub suite: Suite,
    /// Takes the constraint from this config instead of the default families.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub instances: usize,
    #[arg(long, default_value_t = 16)]
    pub particles: usize,
    /// Writes `check_<suite>.json` here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum Failure {
    Input(Error),
    Numerical(Error),
    Property(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Property(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(e) | Failure::Numerical(e) => write!(f, "{e}"),
            Failure::Property(msg) => write!(f, "property suite failed: {msg}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e)
        } else {
            Failure::Input(e)
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(dir.join(name), contents))
        .map_err(|e| Failure::Input(Error::config("--out", format!("cannot write {}: {e}", dir.join(name).display()))))
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn cmd_simulate(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load(&args.config, args.seed)?;
    let setup = cfg.simulation()?;
    let rec = simulate(&setup.initial, &setup.coefficients, &setup.constraint, &setup.scheme)?;
    for e in &rec.events {
        eprintln!("note: {e}");
    }
    let events: Vec<String> = rec.events.iter().map(|e| format!("event: {e}")).collect();
    let head = csv::header(Some(cfg.seed), Some(&cfg.to_toml()), &events);
    write_file(&args.out, &cfg.output.trajectory, &csv::trajectory(&head, &rec))?;
    write_file(&args.out, &cfg.output.diagnostics, &csv::diagnostics(&head, &rec))?;
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let mut cfg = load(&args.run.config, args.run.seed)?;
    if let Some(eps) = &args.eps {
        cfg.sweep = Some(config::SweepSection { eps: eps.clone() });
    }
    let eps = cfg
        .sweep
        .as_ref()
        .map(|s| s.eps.clone())
        .ok_or_else(|| Failure::Input(Error::config("sweep.eps", "give --eps or a [sweep] section")))?;
    let setup = cfg.simulation()?;
    let rep = epsilon_sweep(&setup.initial, &setup.coefficients, &setup.constraint, &setup.scheme, &eps)?;
    let echo = cfg.to_toml();
    let out = &args.run.out;
    for (i, rec) in rep.records.iter().enumerate() {
        let events: Vec<String> = std::iter::once(format!("eps: {}", csv::num(eps[i])))
            .chain(rec.events.iter().map(|e| format!("event: {e}")))
            .collect();
        let head = csv::header(Some(cfg.seed), Some(&echo), &events);
        write_file(out, &indexed(&cfg.output.trajectory, i), &csv::trajectory(&head, rec))?;
        write_file(out, &indexed(&cfg.output.diagnostics, i), &csv::diagnostics(&head, rec))?;
    }
    let head = csv::header(Some(cfg.seed), Some(&echo), &[]);
    write_file(out, &cfg.output.sweep_summary, &csv::sweep_summary(&head, &rep))?;
    Ok(())
}

/// `diagnostics.csv` -> `diagnostics_eps2.csv`.
fn indexed(name: &str, i: usize) -> String {
    match name.rsplit_once('.') {
        Some((stem, ext)) => format!("{stem}_eps{i}.{ext}"),
        None => format!("{name}_eps{i}"),
    }
}

pub fn cmd_project(args: &ProjectArgs) -> Result<(), Failure> {
    let cfg = load(&args.config, None)?;
    let k = cfg.constraint()?;
    let mu = csv::read_cloud(&args.input)?;
    k.validate(mu.dim())?;
    let p = project(k, &mu)?;
    let extra = vec![
        format!("input: {}", args.input.display()),
        format!("distance_sq: {}", csv::num(p.distance_sq)),
        format!("multiplier: {}", csv::num(p.multiplier)),
    ];
    let echo = toml::to_string(&ProjectEcho { constraint: k }).unwrap_or_default();
    let head = csv::header(None, Some(&echo), &extra);
    write_file(&args.out, "projected.csv", &csv::cloud(&head, &p.projected))?;
    println!("distance_sq {}", csv::num(p.distance_sq));
    println!("multiplier {}", csv::num(p.multiplier));
    Ok(())
}

#[derive(serde::Serialize)]
struct ProjectEcho<'a> {
    constraint: &'a ConstraintSet,
}

pub fn cmd_transport(args: &TransportArgs) -> Result<(), Failure> {
    let mu = csv::read_cloud(&args.input)?;
    let nu = csv::read_cloud(&args.target)?;
    mu.check_same_shape(&nu)?;
    let (plan, cost) = match args.eta {
        None => exact_plan(&mu, &nu)?,
        Some(eta) => {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Failure::Input(Error::config("--eta", "must be finite and > 0")));
            }
            let plan = sinkhorn(&mu, &nu, SinkhornOptions::new(eta))?;
            (plan, crate::transport::cost_matrix(&mu, &nu)?)
        }
    };
    let w2sq = plan.transport_cost(&cost);
    let targets = crate::measure::EmpiricalMeasure::new(transport_map(&plan, &mu, &nu)?, mu.n_particles(), mu.dim())?;
    let mut extra = vec![
        format!("input: {}", args.input.display()),
        format!("target: {}", args.target.display()),
        format!("w2_squared: {}", csv::num(w2sq)),
    ];
    if let Some(eta) = args.eta {
        extra.push(format!("eta: {}", csv::num(eta)));
    }
    if let Some(perm) = &plan.permutation {
        extra.push(format!(
            "permutation: {}",
            perm.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(" ")
        ));
    }
    let head = csv::header(None, None, &extra);
    write_file(&args.out, "transport.csv", &csv::cloud(&head, &targets))?;
    println!("w2_squared {}", csv::num(w2sq));
    println!("w2_distance {}", csv::num(w2sq.max(0.0).sqrt()));
    Ok(())
}

fn default_families() -> Vec<(&'static str, ConstraintSet)> {
    vec![
        ("support", ConstraintSet::support(ConvexRegion::Ball { center: vec![0.0, 0.0], radius: 1.0 })),
        ("potential", ConstraintSet::potential(PotentialSpec::Quadratic, 0.5)),
        ("interaction", ConstraintSet::interaction(InteractionSpec::Huber { delta: 0.5 }, 0.3)),
    ]
}

fn constraint_dim(k: &ConstraintSet) -> usize {
    use crate::constraint::ConstraintKind;
    match &k.kind {
        ConstraintKind::ConvexSupport { region } => region.dim(),
        ConstraintKind::PotentialCap {
            potential: PotentialSpec::ShiftedQuadratic { center },
            ..
        } => center.len(),
        _ => 2,
    }
}

pub fn cmd_check(args: &CheckArgs) -> Result<(), Failure> {
    let families = match &args.config {
        Some(path) => vec![("configured", load(path, None)?.constraint()?.clone())],
        None => default_families(),
    };
    let n = args.instances;
    let mut reports: Vec<PropertyReport> = Vec::new();
    let mut resolutions = Vec::new();
    let wants = |s: Suite| args.suite == s || args.suite == Suite::All;
    for (fi, (name, k)) in families.iter().enumerate() {
        let shape = CloudShape { n_particles: args.particles, dim: constraint_dim(k) };
        let mut rng = RandomSource::with_stream(args.seed, fi as u64);
        let tag = |mut r: PropertyReport| {
            r.name = format!("{name}/{}", r.name);
            r
        };
        if wants(Suite::Monotone) {
            reports.push(tag(check_monotone_field(k, shape, n, &mut rng)?));
        }
        if wants(Suite::Variational) {
            reports.push(tag(check_variational_inequality(k, shape, n, &mut rng)?));
        }
        if wants(Suite::Subdifferential) {
            let s = check_subdifferential_constant(k, shape, n, &mut rng)?;
            let surviving = s.surviving();
            eprintln!("{name}: lower-bound constants surviving all instances: {surviving:?}");
            resolutions.push((name.to_string(), !surviving.is_empty(), s));
        }
    }
    if wants(Suite::Identities) {
        let shape = CloudShape { n_particles: args.particles - args.particles % 4, dim: 2 };
        if shape.n_particles == 0 {
            return Err(Failure::Input(Error::config("--particles", "identities need at least 4 particles")));
        }
        let mut rng = RandomSource::with_stream(args.seed, families.len() as u64);
        reports.push(check_hilbertian_identity(shape, n, &mut rng)?);
        reports.push(check_generalized_geodesic(shape, n, &mut rng)?);
        reports.push(check_mixture_convexity(shape, n, &mut rng)?);
    }

    let body = serde_json::json!({
        "schema": SCHEMA_VERSION,
        "seed": args.seed,
        "reports": reports,
        "subdifferential": resolutions.iter().map(|(name, ok, s)| serde_json::json!({
            "family": name, "resolved": ok, "report": s,
        })).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&body).unwrap_or_default();
    println!("{text}");
    if let Some(dir) = &args.out {
        let suite = format!("{:?}", args.suite).to_lowercase();
        write_file(dir, &format!("check_{suite}.json"), &text)?;
    }
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name.clone())
        .chain(resolutions.iter().filter(|r| !r.1).map(|r| format!("{}/subdifferential", r.0)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Property(failed.join(", ")))
    }
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(t) = cli.threads {
        eprintln!("note: --threads {t} is advisory; running single-threaded");
    }
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Project(a) => cmd_project(a),
        Command::Transport(a) => cmd_transport(a),
        Command::Check(a) => cmd_check(a),
    }
}

/// Parses arguments, runs, and maps the outcome to an exit code.
pub fn main_entry() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
