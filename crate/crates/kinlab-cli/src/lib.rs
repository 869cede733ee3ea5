//! Batch driver for the kinlab solver: configuration loading, command
//! dispatch, report files and exit codes.
//!
//! Exit codes: 0 when every non-vacuous check passed, 1 when a check failed,
//! 2 for usage or configuration errors, 3 when every check was vacuous and 4
//! for runtime failures (I/O, numerical breakdown).

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use clap::{Args, Parser, Subcommand};
use kinlab::report::Overall;
use std::fmt;
use std::path::PathBuf;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VACUOUS: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Environment variable holding the default output root.
pub const OUT_ENV: &str = "KINLAB_OUT";

#[derive(Debug, Parser)]
#[command(name = "kinlab", version, about = "Solver and verification lab for nonlocal kinetic Fokker-Planck equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by the configuration-driven commands.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to `$KINLAB_OUT/<command>` or `kinlab-out/<command>`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed overriding every seed in the configuration.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one run configuration and dump the trajectory and stepper log.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the checks attached to one statement.
    Verify {
        /// Statement id, one of 2.1, 2.2, 2.3, 3.1, 4.1, 5.1, 5.2, A.1, A.2, A.3.
        #[arg(long, value_name = "ID")]
        lemma: String,
        #[command(flatten)]
        common: Common,
    },
    /// Print the exponent table for dimension n, order s and source exponent r.
    Exponents {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        r: f64,
        /// Also write `exponents.json` into this directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Cone measure checks on random or configured instances.
    Cone {
        #[command(flatten)]
        common: Common,
    },
    /// Run a family of configurations as independent jobs.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Number of worker threads.
        #[arg(long, value_name = "N", default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        workers: u16,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Lib(kinlab::Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<kinlab::Error> for CliError {
    fn from(e: kinlab::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Lib(kinlab::Error::Param(_) | kinlab::Error::Grid(_) | kinlab::Error::Json(_)) => EXIT_USAGE,
            CliError::Lib(_) | CliError::Io(_) => EXIT_RUNTIME,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn exit_code(overall: Overall) -> i32 {
    match overall {
        Overall::Pass => EXIT_PASS,
        Overall::Fail => EXIT_FAIL,
        Overall::Vacuous => EXIT_VACUOUS,
    }
}

/// Runs one parsed command line and returns the process exit code.
pub fn run_cli(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Run { common } => commands::cmd_run(&common),
        Command::Verify { lemma, common } => verify::cmd_verify(&lemma, &common),
        Command::Exponents { n, s, r, out } => commands::cmd_exponents(n, s, r, out.as_deref()),
        Command::Cone { common } => commands::cmd_cone(&common),
        Command::Sweep { common, workers } => commands::cmd_sweep(&common, workers as usize),
    };
    match result {
        Ok(overall) => exit_code(overall),
        Err(e) => {
            eprintln!("kinlab: {e}");
            e.exit_code()
        }
    }
}
