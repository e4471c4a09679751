//! Batch front door for the fiberwise Mercer pipeline.
//!
//! Every command reads one JSON run configuration and writes its reports
//! into the configured (or overridden) output directory. Exit statuses:
//! 0 on success, 2 when the kernel fails validation or data violate a
//! pipeline precondition, 3 for configuration/parse/file-system errors,
//! 4 when a numerical routine fails to converge.

mod commands;
mod config;
mod error;
mod fieldio;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Run;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "mercer-field",
    version,
    about = "Fiberwise Mercer decomposition of parameterized positive-definite kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command.
#[derive(Debug, Args)]
struct CommonArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Worker threads for the fiber-parallel stages (default: all cores).
    #[arg(long)]
    threads: Option<usize>,

    /// Write reports here instead of the configured output_dir.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check symmetry, positive semidefiniteness, and the Hilbert–Schmidt bound
    Validate(CommonArgs),
    /// Eigendecompose every fiber and align the curves across the parameter grid
    Decompose(CommonArgs),
    /// Rebuild the kernel from the truncated decomposition and report the error
    Reconstruct(CommonArgs),
    /// Evaluate the three equivalent spectral-completeness conditions
    Verify(CommonArgs),
    /// Apply the fiberwise integral operator to the constant unit element
    Apply(CommonArgs),
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    type CommandFn = fn(&Run, &Path) -> Result<(), CliError>;
    let (args, command): (&CommonArgs, CommandFn) = match &cli.command {
        Command::Validate(a) => (a, commands::validate),
        Command::Decompose(a) => (a, commands::decompose),
        Command::Reconstruct(a) => (a, commands::reconstruct_cmd),
        Command::Verify(a) => (a, commands::verify),
        Command::Apply(a) => (a, commands::apply),
    };
    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    let run = Run::load(&args.config)?;
    let out = args.output.clone().unwrap_or_else(|| run.output_dir());
    command(&run, &out)
}

fn main() -> ExitCode {
    match execute(&Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
