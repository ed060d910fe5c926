//! Command-line experiment runner for `bitb-core`: configuration parsing,
//! file formats, the experiment suites and report writing.
//!
//! The binary is a thin wrapper around [`run`]; the acceptance target and the
//! integration tests call the same functions.

pub mod checks;
pub mod config;
pub mod io;
pub mod report;
pub mod suites;

use std::time::Instant;

pub use config::{ExperimentConfig, Suite, UsageError, WeightRegime};
pub use suites::{run_suite, SuiteError, SuiteReport};

/// Process exit codes.
pub mod exit {
    /// Every invariant passed.
    pub const OK: i32 = 0;
    /// The suite ran but at least one invariant failed.
    pub const INVARIANT_FAILED: i32 = 1;
    /// Invalid configuration or command line.
    pub const USAGE: i32 = 2;
    /// A numerical routine failed (degenerate weight, non-finite value, …)
    /// or the report could not be written.
    pub const NUMERIC: i32 = 3;
}

/// Outcome of [`run`].
pub enum RunError {
    Usage(UsageError),
    Numeric(SuiteError),
    Io(anyhow::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => exit::USAGE,
            RunError::Numeric(_) | RunError::Io(_) => exit::NUMERIC,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Usage(e) => write!(f, "usage error: {e}"),
            RunError::Numeric(e) => write!(f, "numeric failure {e}"),
            RunError::Io(e) => write!(f, "cannot write report: {e:#}"),
        }
    }
}

/// Validates, runs the configured suite and writes its report.
pub fn run(cfg: &ExperimentConfig) -> Result<SuiteReport, RunError> {
    cfg.validate().map_err(RunError::Usage)?;
    let start = Instant::now();
    let rep = run_suite(cfg).map_err(RunError::Numeric)?;
    report::write_report(cfg, &rep, start.elapsed()).map_err(RunError::Io)?;
    Ok(rep)
}
