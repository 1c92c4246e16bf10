//! `seqmon`: fit, monitor, critical values and simulation tables from the command line.

mod commands;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Default critical-value cache location when `--critval-cache` is absent.
pub const CACHE_ENV: &str = "SEQMON_CRITVAL_CACHE";
pub const DEFAULT_CACHE: &str = "critval-cache.json";

pub const EXIT_REJECT: u8 = 3;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 4;
pub const EXIT_NUMERIC: u8 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "seqmon",
    version,
    about = "Sequential monitoring for structural breaks in linear regressions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the training model and write it as JSON.
    Fit(FitArgs),
    /// Stream observations through a monitor, emitting NDJSON events.
    Monitor(MonitorArgs),
    /// Simulate the critical value of a single-weight monitor.
    Critval(CritvalArgs),
    /// Simulate member critical values and the veto constant C_alpha.
    VetoCritval(VetoCritvalArgs),
    /// Run a size or delay experiment from a JSON configuration.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training CSV: header, then y followed by regressors.
    pub train_csv: PathBuf,
    /// Number of lagged responses added as regressors; the first p rows seed the lags.
    #[arg(long, default_value_t = 0)]
    pub lag_p: usize,
    /// Output model path (stdout if omitted).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// The CSV already contains the intercept column of ones.
    #[arg(long)]
    pub intercept_in_data: bool,
    /// Bartlett bandwidth; defaults to floor(m^0.4).
    #[arg(long)]
    pub bandwidth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Seed for critical-value simulation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid points per simulated path.
    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,
    /// Simulated paths.
    #[arg(long, default_value_t = 20_000)]
    pub reps: usize,
    /// Critical-value cache (JSON); defaults to $SEQMON_CRITVAL_CACHE or ./critval-cache.json.
    #[arg(long)]
    pub critval_cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    /// Model JSON written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Monitoring CSV; stdin when omitted or `-`.
    pub data: Option<PathBuf>,
    /// Single-weight monitor exponent.
    #[arg(long, conflicts_with_all = ["veto", "etas"])]
    pub eta: Option<f64>,
    /// Standard veto set (V2, V3, V5).
    #[arg(long, conflicts_with = "etas")]
    pub veto: Option<String>,
    /// Explicit veto exponents, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub etas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Trimming rule: loglog, log, logsquared, fixed_<n>, <n> or none.
    #[arg(long, default_value = "loglog")]
    pub trim: String,
    /// Monitoring horizon T_m (defaults to m).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Explicit critical value for a single-weight monitor.
    #[arg(long)]
    pub critical_value: Option<f64>,
    /// Explicit C_alpha for a veto monitor.
    #[arg(long)]
    pub c_alpha: Option<f64>,
    /// NDJSON events file (stdout if omitted).
    #[arg(long)]
    pub events_out: Option<PathBuf>,
    /// The CSV already contains the intercept column of ones.
    #[arg(long)]
    pub intercept_in_data: bool,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Args)]
pub struct CritvalArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Also re-estimate on a grid twice as fine and report the relative change.
    #[arg(long)]
    pub check_convergence: bool,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Args)]
pub struct VetoCritvalArgs {
    /// Standard veto set (V2, V3, V5).
    #[arg(long, conflicts_with = "etas", required_unless_present = "etas")]
    pub veto: Option<String>,
    /// Veto exponents, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub etas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment configuration JSON.
    pub config: PathBuf,
    /// Directory receiving the CSV tables and manifest.json.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Overrides the experiment seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Critical-value cache (JSON); defaults to $SEQMON_CRITVAL_CACHE or ./critval-cache.json.
    #[arg(long)]
    pub critval_cache: Option<PathBuf>,
}

/// Argument or input-path problems detected before any work starts.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<seqmon_core::Error>() {
        Some(e) if e.is_usage() => EXIT_USAGE,
        Some(e) if e.is_numeric() => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Monitor(a) => commands::monitor(&a),
        Command::Critval(a) => commands::critval(&a),
        Command::VetoCritval(a) => commands::veto_critval(&a),
        Command::Simulate(a) => commands::simulate(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
