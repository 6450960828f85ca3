//! Command-line front end: argument parsing, config merging, dispatch and
//! exit codes.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, EnergyKind, FieldKind, RunConfig};
use crate::output::{digest_file, write_outputs, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<apfb_core::Error> for CliError {
    fn from(e: apfb_core::Error) -> Self {
        use apfb_core::Error as E;
        match e {
            E::Domain(_) | E::Support(_) | E::Parse(_) | E::Invertibility(_) => CliError::Validation(e.to_string()),
            E::Solver { .. }
            | E::Bracket(_)
            | E::Degenerate(_)
            | E::StepUnderflow(_)
            | E::Divergence(_)
            | E::Evaluation(_)
            | E::Extrapolation(_)
            | E::Fit(_) => CliError::Solver(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "apfb", version, about = "Numerical laboratory for Alt-Phillips free boundaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Flags {
    /// Equation exponent, in [0, 2).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Weight exponent; alternative to --gamma.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Ambient dimension.
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid spacing.
    #[arg(long)]
    pub h: Option<f64>,
    /// Solver tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    /// JSON run config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Length of the one-dimensional profile table.
    #[arg(long)]
    pub length: Option<f64>,
    /// Field under test.
    #[arg(long, value_enum)]
    pub field: Option<FieldKind>,
    /// Energy functional.
    #[arg(long, value_enum)]
    pub energy: Option<EnergyKind>,
    /// Radius of the ball bounding the radial profile.
    #[arg(long)]
    pub r0: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the one-dimensional profile.
    #[command(name = "profile-1d")]
    Profile1d(Flags),
    /// Integrate the radial profile outside a ball.
    #[command(name = "profile-radial")]
    ProfileRadial(Flags),
    /// Scan and solve for homogeneous cones.
    #[command(name = "cone-search")]
    ConeSearch(Flags),
    /// Both energies of a field and their correspondence.
    #[command(name = "energy")]
    Energy(Flags),
    /// Fit the inner-variation expansion and compare with closed forms.
    #[command(name = "verify-expansion")]
    VerifyExpansion(Flags),
    /// Truncation orders of the determinant and norm expansions.
    #[command(name = "lemma-a-tests")]
    LemmaATests(Flags),
    /// Stability quadratic form of one test function.
    #[command(name = "quadform")]
    Quadform(Flags),
    /// Smallest eigenvalue of the discrete stability form.
    #[command(name = "spectrum")]
    Spectrum(Flags),
    /// Axisymmetric stability inequality on theta probes.
    #[command(name = "axisym-check")]
    AxisymCheck(Flags),
    /// Window of destabilizing exponents.
    #[command(name = "theta-window")]
    ThetaWindow(Flags),
    /// Feasible region in the (alpha, n) plane.
    #[command(name = "figure1")]
    Figure1(Flags),
    /// Free-boundary curvature identities of radial profiles.
    #[command(name = "curvature-check")]
    CurvatureCheck(Flags),
    /// Small-alpha limit of the potential term.
    #[command(name = "alpha-limit")]
    AlphaLimit(Flags),
}

impl Command {
    fn split(self) -> (&'static str, Flags) {
        match self {
            Command::Profile1d(f) => ("profile-1d", f),
            Command::ProfileRadial(f) => ("profile-radial", f),
            Command::ConeSearch(f) => ("cone-search", f),
            Command::Energy(f) => ("energy", f),
            Command::VerifyExpansion(f) => ("verify-expansion", f),
            Command::LemmaATests(f) => ("lemma-a-tests", f),
            Command::Quadform(f) => ("quadform", f),
            Command::Spectrum(f) => ("spectrum", f),
            Command::AxisymCheck(f) => ("axisym-check", f),
            Command::ThetaWindow(f) => ("theta-window", f),
            Command::Figure1(f) => ("figure1", f),
            Command::CurvatureCheck(f) => ("curvature-check", f),
            Command::AlphaLimit(f) => ("alpha-limit", f),
        }
    }
}

/// Config file first, then command-line flags on top.
pub fn merge_config(command: &str, flags: &Flags) -> Result<RunConfig, CliError> {
    let mut cfg = match &flags.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(c) = &cfg.command {
        if c != command {
            return Err(CliError::Validation(format!("config is for command {c:?}, not {command:?}")));
        }
    }
    cfg.command = Some(command.to_string());
    if flags.gamma.is_some() && flags.alpha.is_some() {
        return Err(CliError::Validation("--gamma and --alpha are mutually exclusive".into()));
    }
    if let Some(g) = flags.gamma {
        cfg.gamma = Some(g);
        cfg.alpha = None;
    }
    if let Some(a) = flags.alpha {
        cfg.alpha = Some(a);
        cfg.gamma = None;
    }
    if let Some(n) = flags.n {
        cfg.n = n;
    }
    if let Some(h) = flags.h {
        cfg.grid.h = h;
    }
    if let Some(t) = flags.tol {
        cfg.tol = t;
    }
    if let Some(o) = &flags.out {
        cfg.out = o.clone();
    }
    if let Some(l) = flags.length {
        cfg.length = l;
    }
    if let Some(f) = flags.field {
        cfg.field = f;
    }
    if let Some(e) = flags.energy {
        cfg.energy = e;
    }
    if let Some(r) = flags.r0 {
        cfg.r0 = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Seed for randomized sampling from `APFB_SEED`, 0 when unset.
pub fn seed_from_env() -> Result<u64, CliError> {
    match std::env::var("APFB_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| CliError::Validation(format!("APFB_SEED = {s:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn execute(command: &'static str, flags: Flags) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = merge_config(command, &flags)?;
    let seed = seed_from_env()?;
    let threads = match flags.threads {
        Some(0) => return Err(CliError::Validation("--threads must be positive".into())),
        Some(t) => t,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?;
    let artifacts = pool.install(|| commands::dispatch(command, &cfg, seed))?;
    let inputs = match &flags.config {
        Some(p) => vec![digest_file(p, &p.display().to_string())?],
        None => Vec::new(),
    };
    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config: cfg.clone(),
        threads,
        seed,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        inputs,
        outputs: Vec::new(),
    };
    let manifest = write_outputs(&cfg.out, &artifacts, manifest)?;
    for o in &manifest.outputs {
        println!("{}", cfg.out.join(&o.file).display());
    }
    Ok(())
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let (name, flags) = cli.command.split();
    match execute(name, flags) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("apfb {name}: {e}");
            e.exit_code()
        }
    }
}
