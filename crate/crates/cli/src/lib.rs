//! Scenario parsing, run orchestration and output for the `cotrans` tool.

pub mod commands;
pub mod csv_out;
pub mod plots;
pub mod scenario;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{
    check, run_scenario, sweep, RunOptions, RunOutcome, RunReport, SweepParam, SweepRow,
};
pub use scenario::{
    parse_scenario, parse_scenario_str, read_scenario, ScenarioError, ScenarioFile,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl CliError {
    /// 1 for configuration errors, 2 for runtime failures, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Scenario(ScenarioError::Io { .. }) | Self::Io { .. } => 3,
            Self::Scenario(_) | Self::Config(_) => 1,
            Self::Runtime(_) => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
