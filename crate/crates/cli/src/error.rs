use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;

/// Exit codes of the `memsq` binary.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const UNDECIDED: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const IO: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {error}")]
    Config { path: PathBuf, error: ConfigError },

    #[error("{path}: {error}")]
    Io { path: PathBuf, error: std::io::Error },

    #[error("sweep store {path}, line {line}: {message}")]
    CorruptStore { path: PathBuf, line: usize, message: String },

    #[error(transparent)]
    Core(#[from] memsq_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, error: std::io::Error) -> Self {
        CliError::Io { path: path.into(), error }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => exit::CONFIG,
            CliError::Io { .. } | CliError::CorruptStore { .. } => exit::IO,
            CliError::Core(memsq_core::Error::Config(_) | memsq_core::Error::Inadmissible { .. }) => exit::CONFIG,
            CliError::Core(_) => exit::FAILURE,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
