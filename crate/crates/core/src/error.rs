use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value function has no entry for v({a}, {b}) and no default")]
    MissingValue { a: u64, b: u64 },

    #[error("k must be odd and at least 1 (got {0})")]
    InvalidK(usize),

    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown bin {0:?}")]
    UnknownBin(String),

    #[error("invalid coalition structure: {0}")]
    InvalidCoalitions(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An enumeration was refused because it exceeds the configured size guard.
    #[error("enumeration refused: {0}")]
    GuardExceeded(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
