//! Command-line front end for `bendlift`: configuration loading, batch runs
//! with CSV/JSON logs, cross-run comparison tables and the validation suite.

pub mod commands;
pub mod config;
pub mod output;

use bendlift::sim::SimError;
use std::path::PathBuf;
use thiserror::Error;

/// Version stamped into every manifest and summary file. Bump when a column
/// or field changes meaning; `compare` refuses to mix versions.
pub const SCHEMA_VERSION: u32 = 1;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    /// Simulation error that is neither a config nor a task problem.
    pub const INTERNAL: u8 = 1;
    /// Command-line usage error (reported by clap).
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const IO: u8 = 4;
    /// A controller failed its task (window missed, divergence, solver fault).
    pub const TASK_FAILURE: u8 = 5;
    /// A validation property failed.
    pub const PROPERTY_FAILURE: u8 = 6;
    /// Report directories written with a different schema version.
    pub const SCHEMA_MISMATCH: u8 = 7;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("task failure: {0}")]
    TaskFailure(String),
    #[error("property failure: {0}")]
    PropertyFailure(String),
    #[error("schema mismatch in {path}: found version {found}, expected {expected}")]
    SchemaMismatch { path: PathBuf, found: u32, expected: u32 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::TaskFailure(_) => exit::TASK_FAILURE,
            CliError::PropertyFailure(_) => exit::PROPERTY_FAILURE,
            CliError::SchemaMismatch { .. } => exit::SCHEMA_MISMATCH,
            CliError::Sim(_) => exit::INTERNAL,
        }
    }
}
