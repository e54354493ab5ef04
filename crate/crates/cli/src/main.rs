//! `seqopt` designs, evaluates, simulates, and calibrates sequential
//! multi-hypothesis tests from JSON configuration files.
//!
//! Every command reads one config, runs the corresponding core routine,
//! writes a canonical JSON artifact plus a run manifest into `--out`, and
//! prints a short summary. Artifacts embed the hash of their manifest, and
//! rerunning a command with the same config and seeds reproduces them byte
//! for byte.
//!
//! Exit codes: 0 on success, 2 when the inputs are rejected, 3 when a
//! numerical guard trips (state cap, enumeration cap, density underflow),
//! 4 when a search runs but does not settle.

mod commands;
mod config;
mod manifest;
mod summary;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// A failed run, carrying which exit-status family it belongs to.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration, unreadable files, invalid models or plans.
    Validation(String),
    /// A guard against meaningless numerics: caps and underflow.
    Numerical(String),
    /// A search that completed its budget without settling.
    NonConvergence(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::NonConvergence(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(msg) | Failure::Numerical(msg) | Failure::NonConvergence(msg) => {
                write!(f, "{msg}")
            }
        }
    }
}

impl From<seqopt_core::Error> for Failure {
    fn from(e: seqopt_core::Error) -> Self {
        use seqopt_core::Error;
        match e {
            Error::StateCapExceeded { .. }
            | Error::UnderflowGuard { .. }
            | Error::EnumerationCapExceeded { .. } => Failure::Numerical(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "seqopt",
    version,
    about = "Optimal sequential multi-hypothesis test design"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory artifacts are written into (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Worker-thread cap; the `SEQOPT_THREADS` environment variable sets
    /// the same limit when the flag is absent.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for an optimal sequential test plan.
    Design {
        #[command(flatten)]
        common: Common,
        /// Design mode, overriding the config.
        #[arg(long, value_enum)]
        mode: Option<config::Mode>,
        /// Truncation horizon, overriding the config (truncated mode).
        #[arg(long = "N", value_name = "HORIZON")]
        n: Option<usize>,
    },
    /// Exact operating characteristics of a designed plan.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Also export the design's value tables (and trace) as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Monte Carlo replication of a designed plan.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Replication count, overriding the config.
        #[arg(long)]
        reps: Option<u64>,
        /// RNG seed, overriding the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Generating distribution: a hypothesis index (0-based) or
        /// `mixture` for the sampling-cost mixture.
        #[arg(long = "true", value_name = "INDEX|MIXTURE")]
        true_parameter: Option<String>,
        /// Randomize boundary ties instead of following the plan's labels.
        #[arg(long)]
        randomize_ties: bool,
    },
    /// Search Lagrange multipliers meeting error-probability targets.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
}

/// Installs the global worker pool when a cap is requested by flag or by
/// `SEQOPT_THREADS`; the flag wins when both are present.
fn thread_cap(flag: Option<usize>) -> Result<(), Failure> {
    let cap = match flag {
        Some(n) => Some(n),
        None => match std::env::var("SEQOPT_THREADS") {
            Ok(text) => Some(text.parse().map_err(|_| {
                Failure::Validation(format!(
                    "SEQOPT_THREADS is `{text}`, expected a thread count"
                ))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = cap {
        if n == 0 {
            return Err(Failure::Validation("thread cap must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Validation(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Design { common, mode, n } => {
            thread_cap(common.threads)?;
            commands::design(&common, mode, n)
        }
        Command::Evaluate { common, csv } => {
            thread_cap(common.threads)?;
            commands::evaluate(&common, csv)
        }
        Command::Simulate {
            common,
            reps,
            seed,
            true_parameter,
            randomize_ties,
        } => {
            thread_cap(common.threads)?;
            commands::simulate(&common, reps, seed, true_parameter.as_deref(), randomize_ties)
        }
        Command::Calibrate { common } => {
            thread_cap(common.threads)?;
            commands::calibrate(&common)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
