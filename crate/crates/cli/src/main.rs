//! `ssc` — experiment runner for the sparse optimal-control solver.
//!
//! Three subcommands, all driven by one JSON experiment configuration:
//!
//! * `run` solves every point of the configured parameter sweep and
//!   writes a `results.csv` summary plus one JSON report per run,
//! * `diagnose` computes dense eigenvalue bound reports of the
//!   preconditioned Newton systems, one CSV row per nonlinear iteration,
//! * `export-problem` writes each assembled instance as a bundle of
//!   Matrix Market files.
//!
//! Exit codes: 0 on success, 1 when any sweep point fails to solve,
//! 2 for configuration and dense-threshold errors.

mod config;
mod diagnose;
mod export;
mod runner;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ssc", version, about = "Sparse optimal-control experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every sweep point; write results.csv and per-run JSON reports.
    Run {
        /// Experiment configuration (JSON).
        config: PathBuf,
        /// Output directory; overrides the config's `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of parallel sweep workers.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write per-Newton-iteration eigenvalue bound reports for each sweep point.
    Diagnose {
        /// Experiment configuration (JSON).
        config: PathBuf,
        /// Output directory; overrides the config's `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write each assembled problem instance as a Matrix Market bundle.
    ExportProblem {
        /// Experiment configuration (JSON).
        config: PathBuf,
        /// Output directory; overrides the config's `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Everything that can stop a subcommand, tagged with its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Malformed or invalid configuration (exit 2).
    #[error("{0}")]
    Config(String),
    /// A dense diagnostic refused an operator above the size gate (exit 2).
    #[error("{0}")]
    Threshold(String),
    /// One or more sweep points failed to solve (exit 1).
    #[error("{failed} of {total} sweep points failed; see messages above")]
    RunFailures { failed: usize, total: usize },
    /// Filesystem trouble while writing outputs (exit 1).
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    /// A solver error outside the sweep loop, e.g. while assembling an
    /// instance for export (exit 1).
    #[error(transparent)]
    Solver(#[from] ssc_core::SolverError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Threshold(_) => 2,
            _ => 1,
        }
    }

    fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        |source| CliError::Io { context, source }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out, jobs } => config::ExperimentConfig::load(&config)
            .and_then(|cfg| runner::run(&cfg, out.as_deref(), jobs)),
        Command::Diagnose { config, out } => config::ExperimentConfig::load(&config)
            .and_then(|cfg| diagnose::diagnose(&cfg, out.as_deref())),
        Command::ExportProblem { config, out } => config::ExperimentConfig::load(&config)
            .and_then(|cfg| export::export(&cfg, out.as_deref())),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
