//! Batch frontend for `robuststop`: JSON run configs, the five commands and
//! their CSV artifacts.
//!
//! Exit codes: 0 success, 1 input error (config, files, grids), 2 numerical
//! failure (non-convergence, a stored solution that fails its check).

pub mod commands;
pub mod config;
pub mod solution_csv;

use std::path::PathBuf;

use robuststop::hjb_solver::SolverError;
use robuststop::two_time_scale::AggregationError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
    #[error("solution grid does not match the config grid: {0}")]
    GridMismatch(String),
    #[error("solver: {0}")]
    Solver(SolverError),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(SolverError::MaxIterations { .. }) | CliError::CheckFailed(_) => 2,
            _ => 1,
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::Solver(e)
    }
}

impl From<AggregationError> for CliError {
    fn from(e: AggregationError) -> Self {
        match e {
            AggregationError::Solver(s) => CliError::Solver(s),
            other => CliError::Input(other.to_string()),
        }
    }
}
