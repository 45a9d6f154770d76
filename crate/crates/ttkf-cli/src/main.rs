//! Experiment harness around the `ttkf` library: data generation,
//! identification runs, dense-vs-TN equivalence checks, and timing sweeps.
//!
//! Exit codes: 0 success, 1 a configured acceptance bound failed, 2 usage or
//! input errors.

mod bench;
mod compare;
mod config;
mod gen;
mod identify;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ttkf",
    version,
    about = "Tensor-train Kalman filtering and Volterra identification experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic experiment data (CSV plus a JSON sidecar).
    Gen(gen::GenArgs),
    /// Recursively identify a Volterra kernel from an input/output record.
    Identify(identify::IdentifyArgs),
    /// Run the tensor-train filter and the dense reference filter side by
    /// side and report their deviation.
    Compare(compare::CompareArgs),
    /// Sweep the filter degree and report median per-step times.
    Bench(bench::BenchArgs),
}

/// Command outcome: `Failed` means the command ran but a configured bound was
/// not met (exit 1).
pub(crate) enum Outcome {
    Ok,
    Failed(String),
}

#[derive(Debug)]
pub(crate) enum CliError {
    Usage(String),
}

impl From<ttkf::Error> for CliError {
    fn from(e: ttkf::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => gen::run(args),
        Command::Identify(args) => identify::run(args),
        Command::Compare(args) => compare::run(args),
        Command::Bench(args) => bench::run(args),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed(msg)) => {
            eprintln!("FAILED: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
