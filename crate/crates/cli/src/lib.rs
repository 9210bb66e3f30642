//! Command-line front end: verification suites, scaling benchmarks,
//! encoder runs and click-protocol evaluation.
//!
//! Exit codes: 0 success, 1 runtime or check failure, 2 usage error.

pub mod bench;
pub mod config;
pub mod encode;
pub mod eval;
pub mod verify;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "hrsam", version, about = "Windowed attention, cycle-scan and click-protocol toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: RunConfig,
    /// Perturb the named verification check (test hook).
    #[arg(long, global = true, hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Run oracle-equivalence checks and print PASS/FAIL per check.
    Verify,
    /// Time attention or encoder runs and write a CSV.
    Bench,
    /// Encode an image with saved weights and write the embedding (HRT1).
    Encode,
    /// Write freshly initialized encoder weights to a directory.
    InitWeights,
    /// Simulate click sessions over a directory of ground-truth masks.
    Eval,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Failure(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<hrsam_core::Error> for CliError {
    fn from(e: hrsam_core::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

/// Runs one command, writing its report to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::from_json(path)?.overlay(&cli.flags),
        None => cli.flags.clone(),
    };
    match cli.command {
        Command::Verify => verify::cmd_verify(&cfg, cli.inject_fault.as_deref(), out),
        Command::Bench => bench::cmd_bench(&cfg, out),
        Command::Encode => encode::cmd_encode(&cfg, out),
        Command::InitWeights => encode::cmd_init_weights(&cfg, out),
        Command::Eval => eval::cmd_eval(&cfg, out),
    }
}
