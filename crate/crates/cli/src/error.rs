use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("{} did not converge", .0.join(", "))]
    NotConverged(Vec<String>),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit status: 2 config, 3 data, 4 solver failure or non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Solver(_) | CliError::NotConverged(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<sobo::Error> for CliError {
    fn from(e: sobo::Error) -> Self {
        match e {
            sobo::Error::InvalidArgument(m) => CliError::Config(m),
            sobo::Error::Data(m) => CliError::Data(m),
            other => CliError::Solver(other.to_string()),
        }
    }
}
