//! Scenario runner for dissipative systems and their last multipliers.
//!
//! A scenario file describes a vector field, an integration, a multiplier
//! source and a list of checks. [`run_scenario`] writes a trajectory CSV
//! and a TOML report, and returns the process exit code.

// Positivity tests are written `!(x > 0.0)` so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cheillini;
pub mod config;
pub mod report;
pub mod run;
pub mod scan;

use std::path::Path;

use thiserror::Error;

pub use config::{ConfigError, Scenario, ScenarioConfig};
pub use report::ScenarioReport;
pub use run::{
    run_scenario, RunOutcome, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PASS, EXIT_VERIFICATION,
};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{context}: {message}")]
    Numerical { context: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl LabError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        LabError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Config(_) | LabError::Io { .. } => EXIT_CONFIG,
            LabError::Numerical { .. } => EXIT_NUMERICAL,
        }
    }
}
