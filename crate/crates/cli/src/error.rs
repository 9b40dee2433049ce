use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config {path}: {key}: {message}")]
    Config { path: PathBuf, key: String, message: String },

    #[error("acceptance failure: {0}")]
    Acceptance(String),

    #[error(transparent)]
    Core(#[from] hamflow_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// 0 success, 1 usage or config error, 2 acceptance failure,
    /// 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Acceptance(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 1,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Core(e.into())
    }
}
