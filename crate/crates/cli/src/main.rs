//! `seqmon`: data generation, critical values, offline monitoring, the
//! retraining experiment, covariance thresholding and portfolios.
//!
//! Exit codes: 0 success (a signal is a result, not an error), 1 I/O
//! failure, 2 invalid input or computation error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "seqmon", version, about = "Sequential monitoring of projected second moments")]
pub struct Cli {
    /// Root seed; every random draw of the invocation derives from it.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output file (datagen, critval, covest, portfolio) or directory
    /// (monitor, experiment63).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Format of trajectory and matrix outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Plain-text `key = value` file; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic stream as CSV.
    Datagen(DatagenArgs),
    /// Simulate (or look up) a critical value, or build the default table.
    Critval(CritvalArgs),
    /// Monitor a CSV stream.
    Monitor(MonitorArgs),
    /// Run the retraining experiment on the three-regime regression data.
    Experiment63(ExperimentArgs),
    /// Thresholded covariance estimate of a CSV sample.
    Covest(CovestArgs),
    /// Plug-in portfolio weights from a CSV of returns.
    Portfolio(PortfolioArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    VectorMa,
    LocallyStationary,
    CovarianceBreak,
    Regression63,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct DatagenArgs {
    #[arg(long, value_enum)]
    pub kind: GenKind,
    #[arg(long, default_value_t = 5)]
    pub d: usize,
    /// Defaults to 50000 for regression63 and 1000 otherwise.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 3.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 10)]
    pub l_max: usize,
    /// Student t innovations with this many degrees of freedom.
    #[arg(long)]
    pub df: Option<f64>,
    /// Last pre-break observation; defaults to n/2.
    #[arg(long)]
    pub k_star: Option<usize>,
    /// Post-break covariance is `factor * I` (pre-break `I`).
    #[arg(long, default_value_t = 2.0)]
    pub factor: f64,
    #[arg(long)]
    pub noise_as_sd: bool,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct CritvalArgs {
    #[arg(long, default_value_t = 0.25)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// `open` or the closed-end horizon `T`.
    #[arg(long, alias = "T", default_value = "open")]
    pub horizon: String,
    #[arg(long)]
    pub flat: bool,
    #[arg(long, default_value_t = seqmon::critval::DEFAULT_REPS)]
    pub reps: usize,
    #[arg(long, default_value_t = seqmon::critval::DEFAULT_GRID)]
    pub grid: usize,
    /// Simulate even if the shipped table has the value.
    #[arg(long)]
    pub fresh: bool,
    /// Build the default table instead of a single value.
    #[arg(long)]
    pub table: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorArg {
    Projection,
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThresholdArg {
    None,
    Hard,
    Lasso,
    Scad,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
#[command(group(clap::ArgGroup::new("vsrc").required(true).args(["v", "v_file", "v_estimator"])))]
pub struct MonitorArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0.25)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// `open` or the closed-end horizon `T`.
    #[arg(long, default_value = "open")]
    pub horizon: String,
    /// Critical value; looked up or simulated when absent.
    #[arg(long)]
    pub c: Option<f64>,
    /// Inline projection vector, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<String>,
    /// Projection vector file: JSON or whitespace/comma separated numbers.
    #[arg(long)]
    pub v_file: Option<PathBuf>,
    /// Estimate v on the training block: `minvar`, `tangency` or
    /// `target:<mu0>`.
    #[arg(long)]
    pub v_estimator: Option<String>,
    #[arg(long, value_enum, default_value_t = ThresholdArg::Hard)]
    pub threshold: ThresholdArg,
    #[arg(long, default_value_t = 1e-4)]
    pub eps0: f64,
    #[arg(long, value_enum, default_value_t = DetectorArg::Projection)]
    pub detector: DetectorArg,
    #[arg(long, default_value_t = 0.4)]
    pub rho: f64,
    /// Simulation size used when c must be simulated.
    #[arg(long, default_value_t = seqmon::critval::DEFAULT_REPS)]
    pub reps: usize,
    #[arg(long, default_value_t = seqmon::critval::DEFAULT_GRID)]
    pub grid: usize,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ExperimentArgs {
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    #[arg(long, default_value_t = seqmon::datagen::REG63_LEN)]
    pub n: usize,
    #[arg(long, default_value_t = 0.25)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub no_retrain: bool,
    #[arg(long)]
    pub noise_as_sd: bool,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Run seeds `seed, seed+1, ...` and report a signal-time table.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct CovestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ThresholdArg::Hard)]
    pub threshold: ThresholdArg,
    /// Fixed threshold; otherwise `c_th d^{4/q} / sqrt(m)`.
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long, alias = "Cth", default_value_t = 1.0)]
    pub c_th: f64,
    #[arg(long, default_value_t = 8.0)]
    pub q: f64,
    /// Pick c_th by 20 random 2-fold splits.
    #[arg(long)]
    pub select: bool,
    /// Use only the first m rows.
    #[arg(long)]
    pub m: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PortfolioArg {
    Minvar,
    Target,
    Tangency,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct PortfolioArgs {
    #[arg(long, value_enum)]
    pub kind: PortfolioArg,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ThresholdArg::Hard)]
    pub threshold: ThresholdArg,
    #[arg(long)]
    pub mu0: Option<f64>,
    #[arg(long)]
    pub cap: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    pub eps0: f64,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Invalid(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Invalid(_) => 2,
        }
    }
}

impl From<seqmon::Error> for CliError {
    fn from(e: seqmon::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let argv = match config::merge(std::env::args().collect()) {
        Ok(a) => a,
        Err(config::ConfigError::Io(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
        Err(config::ConfigError::Invalid(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Io(msg) | CliError::Invalid(msg)) = &e;
            eprintln!("error: {msg}");
            ExitCode::from(e.code())
        }
    }
}
