//! `gcm` — synthetic-data experiments for correlation estimation, eigenvalue
//! cleaning and Markowitz backtesting.
//!
//! Every command is deterministic given its configuration and seed; reruns
//! produce byte-identical outputs. Matrices and curves are written as CSV,
//! reports and provenance as JSON with a `schema` tag.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{CliError, FileConfig};

#[derive(Parser)]
#[command(
    name = "gcm",
    version,
    about = "Generalized correlation matrices, eigenvalue cleaning and portfolio backtests"
)]
struct Cli {
    /// TOML configuration file; command-line flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for the experiment grid (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Student-t return panel from a ground truth.
    Simulate(commands::simulate::Args),
    /// Estimate correlation matrices from a panel CSV, one file per method.
    Estimate(commands::estimate::Args),
    /// True-versus-estimated eigenvalue tables over a q sweep.
    Eigs(commands::eigs::Args),
    /// Duplicate-pair detection sweep over q.
    Duplicate(commands::duplicate::Args),
    /// Fraction-of-common-modes sweeps over (nu, q).
    Fcm(commands::fcm::Args),
    /// Rolling out-of-sample Markowitz backtest.
    Backtest(commands::backtest::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let out_dir = cli
        .out
        .or_else(|| file.out.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("gcm-out"));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create output directory: {e}")))?;
    let seed = cli.seed.or(file.seed).unwrap_or(0);

    let workers = cli.workers.or(file.workers).unwrap_or(0);
    // an already-initialized global pool (e.g. in tests) is fine
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global();

    match cli.command {
        Command::Simulate(args) => commands::simulate::run(args, &file, seed, &out_dir),
        Command::Estimate(args) => commands::estimate::run(args, &file, seed, &out_dir),
        Command::Eigs(args) => commands::eigs::run(args, &file, seed, &out_dir),
        Command::Duplicate(args) => commands::duplicate::run(args, &file, seed, &out_dir),
        Command::Fcm(args) => commands::fcm::run(args, &file, seed, &out_dir),
        Command::Backtest(args) => commands::backtest::run(args, &file, seed, &out_dir),
    }
}
