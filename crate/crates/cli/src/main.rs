//! `softmax-newton`: generate instances, solve them, run the verification
//! suites and benchmark the Newton variants.
//!
//! Exit codes: 0 success, 2 validation failure, 3 numerical failure, 4 I/O.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use softmax_newton::{Error, ErrorKind};

#[derive(Parser, Debug)]
#[command(name = "softmax-newton", version, about = "Regularized softmax regression with approximate Newton")]
#[command(args_override_self = true)]
struct Cli {
    /// key=value file supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic instance bundle with a known optimum.
    Generate(GenerateArgs),
    /// Run a Newton variant on an instance bundle.
    Solve(SolveArgs),
    /// Run property suites on random cases or on a bundle.
    Verify(VerifyArgs),
    /// Compare solver modes across problem sizes; writes CSV.
    Bench(BenchArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum GenMode {
    Trivial,
    Oracle,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, value_enum, default_value = "trivial")]
    mode: GenMode,
    #[arg(long, env = "SOFTMAX_NEWTON_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "R", default_value_t = 10.0)]
    radius: f64,
    #[arg(long, default_value_t = 1.0)]
    l: f64,
    /// Norm of the reference point whose softmax becomes `b` (oracle mode).
    #[arg(long, default_value_t = 1.0)]
    target_radius: f64,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "sketched_diag")]
    mode: String,
    #[arg(long, default_value = "grad_norm")]
    stop: String,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Defaults to `1e-10 (1 + |loss|)`.
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.1)]
    eps0: f64,
    #[arg(long, default_value_t = 8.0)]
    oversample: f64,
    /// Use `D` itself instead of a sample.
    #[arg(long)]
    no_sampling: bool,
    #[arg(long, env = "SOFTMAX_NEWTON_SEED", default_value_t = 0)]
    seed: u64,
    /// Starting point file; defaults to the origin.
    #[arg(long, conflicts_with = "init_radius")]
    x0: Option<PathBuf>,
    /// Start at a seeded random point this far from `x*` (or the origin).
    #[arg(long)]
    init_radius: Option<f64>,
    /// Override `l` from the bundle.
    #[arg(long)]
    l: Option<f64>,
    /// Override `R` from the bundle.
    #[arg(long = "R")]
    radius: Option<f64>,
    /// Assumption set to enforce: `convexity` or `sketch`. Defaults to
    /// `sketch` for sketched_diag, `convexity` otherwise.
    #[arg(long)]
    validation: Option<String>,
    /// Solve even when the instance fails validation.
    #[arg(long = "unsafe")]
    allow_unsafe: bool,
    /// Trace CSV path; `-` for stdout.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Solution vector path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Suites to run (comma separated); all when omitted.
    #[arg(long, value_delimiter = ',')]
    check: Vec<String>,
    /// Random cases: `n d seeds`.
    #[arg(long, num_args = 3, value_names = ["N", "D", "SEEDS"], conflicts_with = "instance")]
    random: Option<Vec<usize>>,
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Random points per bundle for point-wise suites.
    #[arg(long, default_value_t = 10)]
    points: usize,
    #[arg(long, default_value_t = 0.1)]
    eps0: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 8.0)]
    oversample: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Probe points or pairs per case.
    #[arg(long, default_value_t = 20)]
    probes: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Radius for random cases and probes; a bundle's own `R` by default.
    #[arg(long = "R")]
    radius: Option<f64>,
    #[arg(long)]
    l: Option<f64>,
    #[arg(long, env = "SOFTMAX_NEWTON_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "2000,8000")]
    n_grid: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, value_delimiter = ',', default_value = "exact_full,exact_diag,sketched_diag")]
    modes: Vec<String>,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value_t = 0.1)]
    eps0: f64,
    #[arg(long, default_value_t = 8.0)]
    oversample: f64,
    #[arg(long = "R", default_value_t = 10.0)]
    radius: f64,
    #[arg(long, default_value_t = 1.0)]
    l: f64,
    #[arg(long, default_value_t = 1.0)]
    target_radius: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, env = "SOFTMAX_NEWTON_SEED", default_value_t = 0)]
    seed: u64,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failed run: exit code and message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Self { code: 3, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Validation => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Io => 4,
        };
        Self { code, msg: e.to_string() }
    }
}

fn run(args: Vec<OsString>) -> Result<(), Failure> {
    let args = match config::config_path(&args) {
        Some(path) => config::merge(args, &path)?,
        None => args,
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return if code == 0 { Ok(()) } else { Err(Failure { code, msg: String::new() }) };
        }
    };
    match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Solve(a) => commands::solve(a),
        Command::Verify(a) => commands::verify(a),
        Command::Bench(a) => commands::bench(a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.msg.is_empty() {
                eprintln!("error: {}", f.msg);
            }
            ExitCode::from(f.code)
        }
    }
}
