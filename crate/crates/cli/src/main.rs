//! `lbmkit` command-line front end.

mod commands;
mod config;
mod output;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::output::Format;

#[derive(Debug)]
pub enum CliError {
    /// Physics check ran and failed.
    Failed(String),
    /// Bad input: flags, config, files.
    Invalid(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Invalid(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Failed(m) => write!(f, "check failed: {m}"),
            CliError::Invalid(m) => write!(f, "{m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<lbmkit::Error> for CliError {
    fn from(e: lbmkit::Error) -> Self {
        CliError::Invalid(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "lbmkit",
    version,
    about = "Sparse-lattice D3Q19 solver, performance, energy and scaling models"
)]
pub struct Cli {
    /// Command config (TOML or JSON), an echoed meta record, or a CSV output of an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a geometry and report its statistics.
    Geom(commands::geom::GeomArgs),
    /// Run the solver and report performance.
    Run(commands::run::RunArgs),
    /// Poiseuille flow check against the analytic profile.
    Verify(commands::run::VerifyArgs),
    /// ECM single-core prediction and multicore scaling.
    Ecm(commands::models::EcmArgs),
    /// Energy to solution over clock and core count.
    Power(commands::models::PowerArgs),
    /// Multi-node performance and energy extrapolation.
    Scale(commands::models::ScaleArgs),
    /// Multi-stream memory bandwidth benchmark.
    Bench(commands::bench::BenchArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = catch_unwind(AssertUnwindSafe(|| commands::dispatch(cli)))
        .unwrap_or_else(|_| Err(CliError::Internal("panic".into())));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lbmkit: {e}");
            ExitCode::from(e.code())
        }
    }
}
