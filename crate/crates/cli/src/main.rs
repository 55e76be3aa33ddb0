//! `dgmsim`: select datasets, infer parameters, build and run simulation
//! studies from one configuration file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod report;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("too few datasets: {selected} selected, {min} required (deficit {deficit}); expand the database")]
    TooFew {
        selected: usize,
        min: usize,
        deficit: usize,
    },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::TooFew { .. } => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<dgmsim::Error> for CliError {
    fn from(e: dgmsim::Error) -> Self {
        use dgmsim::Error as E;
        match e {
            E::DuplicateComponent(_)
            | E::MissingParameter(_)
            | E::ParameterInBoth(_)
            | E::TargetOnKnown(_)
            | E::UnexpectedParameter { .. }
            | E::InvalidConfig(_)
            | E::UndeclaredKey { .. }
            | E::UnknownMethod(_)
            | E::UnknownPredicate(_) => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dgmsim", version, about)]
pub struct Cli {
    /// Study configuration file.
    #[arg(long, global = true, default_value = "study.toml")]
    pub config: PathBuf,
    /// Overrides the engine master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for `run` (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Screen the database, check count bounds and apply subset rules.
    Select,
    /// Infer real-data-based parameters from the selected datasets.
    Infer {
        /// Selected-records file (default: <out-dir>/selected.jsonl).
        #[arg(long)]
        selected: Option<PathBuf>,
    },
    /// Cross considered vectors with the researcher-specified grids.
    Plan,
    /// Run the simulation study over the planned DGMs.
    Run {
        /// DGM file (default: <out-dir>/dgms.jsonl).
        #[arg(long)]
        dgms: Option<PathBuf>,
    },
    /// Write plot-ready tables from a summary.
    Report {
        /// Summary CSV (default: <out-dir>/summary.csv).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
