use std::path::PathBuf;

use thiserror::Error;

/// Everything that can stop a command, with the exit status it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] datavalue::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A malformed input file; `message` says what and where.
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn input(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Input { path: path.into(), message: message.into() }
    }

    /// 2 when a size guard refused the computation, 1 for every other error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(datavalue::Error::GuardExceeded(_)) => 2,
            _ => 1,
        }
    }
}
