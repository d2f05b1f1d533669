mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use loe_core::trainer::Strategy;
use loe_core::ErrorKind;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  I/O or internal error
  2  configuration error (bad flags, unknown config keys, invalid values)
  3  data error (missing or malformed input, shape mismatch)
  4  training divergence, or a grid with failed cells
  5  metric undefined (labels missing or single-class)";

#[derive(Parser)]
#[command(name = "loe", version, about = "Train anomaly detectors on contaminated data", after_help = EXIT_CODES)]
struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or contaminate a dataset and write CSV plus manifest.
    Gen(GenArgs),
    /// Train one model and write checkpoint, history and config echo.
    Train(TrainArgs),
    /// Score a test set with a checkpoint and write the metric report.
    Eval(EvalArgs),
    /// Evaluate the test score on a 2-D lattice.
    Contour(ContourArgs),
    /// Run the assumed-vs-true contamination sensitivity grid.
    Grid(GridArgs),
    /// Print the default experiment config.
    Config,
}

#[derive(Args, Clone, Default)]
pub struct Overrides {
    /// Experiment config (JSON). Flags override its keys.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Experiment seeds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Write wall-clock seconds into history.csv.
    #[arg(long)]
    pub timing: bool,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: loe_core::Error| e.to_string())
}

#[derive(Args)]
pub struct GenArgs {
    /// The 2-D toy mixture.
    #[arg(long, conflicts_with_all = ["tabular", "csv"])]
    pub toy: bool,
    /// The synthetic tabular benchmark with default settings.
    #[arg(long, conflicts_with = "csv")]
    pub tabular: bool,
    /// Input CSV whose normals are contaminated.
    #[arg(long, requires = "contaminate")]
    pub csv: Option<PathBuf>,
    /// Label column of the input CSV; its anomalies form the pool.
    #[arg(long)]
    pub label_column: Option<String>,
    /// Separate CSV of anomalies to draw from.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Target anomaly fraction after contamination.
    #[arg(long)]
    pub contaminate: Option<f64>,
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Train on this CSV instead of the configured dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Score this CSV instead of the configured test set.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
}

#[derive(Args)]
pub struct ContourArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `lo,hi` of the first coordinate.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-2.0, 3.0])]
    pub x_range: Vec<f64>,
    /// `lo,hi` of the second coordinate.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-1.0, 4.0])]
    pub y_range: Vec<f64>,
    /// Lattice points per axis.
    #[arg(long, default_value_t = 50)]
    pub resolution: usize,
    /// Training data for the boundary level.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
    /// Quantile of training scores reported as the boundary level.
    #[arg(long, default_value_t = 0.9)]
    pub quantile: f64,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub alpha0s: Option<Vec<f64>>,
    /// Worker threads for grid cells.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.is::<commands::GridFailed>() {
        return 4;
    }
    match err.downcast_ref::<loe_core::Error>().map(loe_core::Error::kind) {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Data) => 3,
        Some(ErrorKind::Divergence) => 4,
        Some(ErrorKind::UndefinedMetric) => 5,
        Some(ErrorKind::Io) | Some(ErrorKind::State) | None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Contour(a) => commands::contour(a),
        Command::Grid(a) => commands::grid(a),
        Command::Config => commands::print_config(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
