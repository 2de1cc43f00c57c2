//! `macrohrl` command-line driver.
//!
//! Exit codes: 0 success, 2 bad configuration or usage, 3 missing or malformed input data,
//! 4 runtime failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "macrohrl", version, about = "Macro-action hierarchical RL on a micro-RTS simulator")]
pub struct Cli {
    /// Experiment config (TOML). Defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parallel episode workers (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Play scripted expert games and write replay logs plus a manifest.
    GenReplays {
        #[arg(long)]
        games: Option<usize>,
        /// Opponent level for the expert.
        #[arg(long)]
        opponent: Option<u8>,
    },
    /// Mine macro-actions from replay logs.
    Mine {
        /// Replay directory (default: <out>/replays).
        #[arg(long)]
        replays: Option<PathBuf>,
    },
    /// Train a hierarchy through the configured curriculum, resuming any previous run in <out>/train.
    Train {
        /// Macro file (default: <out>/macros.txt).
        #[arg(long)]
        macros: Option<PathBuf>,
        /// Expert statistics for the designed reward (default: <out>/expert_stats.toml).
        #[arg(long)]
        expert_stats: Option<PathBuf>,
    },
    /// Evaluate a checkpoint or a random baseline against scripted levels.
    Evaluate {
        /// Hierarchy checkpoint directory.
        #[arg(long, required_unless_present = "baseline", conflicts_with = "baseline")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        /// Macro file for the random-macro baseline (default: <out>/macros.txt).
        #[arg(long)]
        macros: Option<PathBuf>,
        #[arg(long)]
        games: Option<usize>,
        /// Comma-separated levels.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<u8>>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    RandomMacro,
    RandomPrimitive,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
