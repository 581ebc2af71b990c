//! Command-line driver for `rmv-core`: simulation, cost evaluation,
//! chattering studies, convexity checks, relaxed-control search and the
//! bang-bang example reproduction.
//!
//! Exit codes: 0 success, 1 selftest failure, 2 input error, 3 numerical
//! blowup.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod example3;
pub mod selftest;

use clap::{ArgAction, Args, Parser, Subcommand};
use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Input(String),
    Numerical(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failure(_) => 1,
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Numerical(m) => write!(f, "{m}"),
            CliError::Failure(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<rmv_core::Error> for CliError {
    fn from(e: rmv_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(format!("i/o: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(name = "rmv", version, about = "Reflected mean-field control toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Model file (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true)]
    pub particles: Option<usize>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory
    #[arg(long, global = true, default_value = "rmv-out")]
    pub out: PathBuf,
    /// Reuse the simulation seed across compared controls
    #[arg(long, global = true, default_value_t = true, action = ArgAction::Set)]
    pub common_rng: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the model's strict control; writes trajectories.csv and moments.csv
    Simulate,
    /// Estimate the cost of the model's control or of a policy file
    Cost {
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Compare a relaxed policy with its chattering approximations
    Chatter {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32")]
        levels: Vec<usize>,
        /// Use `steps = K * n` at level n instead of the configured steps
        #[arg(long)]
        steps_per_level: Option<usize>,
    },
    /// Search for a near-optimal relaxed control
    Optimize {
        #[arg(long, default_value = "cross-entropy")]
        method: String,
        #[arg(long, default_value_t = 1)]
        cells: usize,
        #[arg(long, default_value_t = 500)]
        budget: usize,
        /// Seed of the search itself (defaults to the simulation seed)
        #[arg(long)]
        search_seed: Option<u64>,
        #[arg(long, default_value_t = 0.1)]
        elite_fraction: f64,
        #[arg(long, default_value_t = 50)]
        batch_size: usize,
        /// Chattering level used to strictify the best candidate
        #[arg(long, default_value_t = 16)]
        strict_level: usize,
    },
    /// Reproduce the bang-bang example: chattering table, relaxed optimum and convexity failure
    Example3 {
        #[arg(long, default_value_t = 32)]
        n_max: usize,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
    },
    /// Check convexity of the drift/cost image set
    Roxin {
        /// State values to probe; the law is the Dirac mass at each
        #[arg(long, value_delimiter = ',', default_value = "0")]
        x: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        /// Relaxed weights to select a strict action for at the first probe
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
    },
    /// Run the invariant suites at reduced scale
    Selftest {
        #[arg(long, hide = true)]
        tamper: Option<String>,
    },
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match commands::dispatch(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "rmv: {e}");
            e.exit_code()
        }
    }
}
