//! Error type shared across the crate.

use thiserror::Error;

/// Unified error type for every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes do not line up (matrix products, feature comparisons, model inputs).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A caller-supplied value is outside the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The math broke down: singular systems, non-finite values.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An object is used outside its valid lifecycle (e.g. a stale tape).
    #[error("invalid state: {0}")]
    State(String),

    /// A dimension-matching adapter cannot be constructed for the given shapes.
    #[error("adapter error: {0}")]
    Adapter(String),

    /// Experiment configuration is malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A serialized artifact (checkpoint, dataset, cost matrix, ...) is malformed.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration/usage problems,
    /// 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
