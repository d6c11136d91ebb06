//! Config-driven pipeline runner.
//!
//! Five stages share one TOML configuration and one output directory:
//! `ingest` aligns per-ticker files into the panel cache, `reference` builds
//! the three reference densities, `indicators` computes the selected series,
//! `backtest` calibrates the danger zone and runs both protocols, `report`
//! assembles the human-readable summary. Two runs with the same config and
//! seed produce byte-identical output files.
//!
//! Exit codes: 1 I/O or internal, 2 configuration, 3 input data,
//! 4 insufficient history, 5 degenerate asset.

mod config;
mod stages;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(eigenwatch::Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl From<eigenwatch::Error> for CliError {
    fn from(e: eigenwatch::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use eigenwatch::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidParameter(_) | E::UnknownIndicator(_) => 2,
                E::InsufficientHistory { .. } => 4,
                E::DegenerateRow { .. } | E::DegenerateAsset { .. } => 5,
                E::Io(_) => 1,
                _ => 3,
            },
        }
    }
}

#[derive(Parser)]
#[command(
    name = "eigenwatch",
    about = "Spectral market-instability indicators and drawdown backtests",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align per-ticker price files into the panel cache.
    Ingest(StageArgs),
    /// Build the three reference eigenvalue densities.
    Reference(StageArgs),
    /// Compute the selected indicator series.
    Indicators(StageArgs),
    /// Calibrate the danger zone and run both backtest protocols.
    Backtest(StageArgs),
    /// Assemble the run report from the stage outputs.
    Report(StageArgs),
}

#[derive(clap::Args)]
struct StageArgs {
    /// Path to the run configuration file.
    #[arg(long, short)]
    config: PathBuf,
}

type Stage = fn(&RunConfig, &std::path::Path) -> Result<(), CliError>;

fn run(cli: Cli) -> Result<(), CliError> {
    let (config_path, stage): (&PathBuf, Stage) = match &cli.command {
        Command::Ingest(args) => (&args.config, stages::ingest),
        Command::Reference(args) => (&args.config, stages::reference),
        Command::Indicators(args) => (&args.config, stages::indicators),
        Command::Backtest(args) => (&args.config, stages::backtest),
        Command::Report(args) => (&args.config, stages::report),
    };
    let config = RunConfig::load(config_path)?;
    let out = config.output_dir();
    std::fs::create_dir_all(&out)?;
    stage(&config, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
