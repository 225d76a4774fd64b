//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Internal state is unusable (e.g. non-finite logits).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A file does not match its declared binary or text format.
    #[error("format error: {0}")]
    Format(String),

    /// Policy file failed to load (version or table-hash mismatch, bad field).
    #[error("policy load error: {0}")]
    PolicyLoad(String),

    /// Training diverged or otherwise failed.
    #[error("training failure: {0}")]
    Training(String),

    /// A gradient vector with zero norm where a direction is required.
    #[error("degenerate gradient: {0}")]
    DegenerateGradient(String),

    /// A numeric result went non-finite where finiteness is required.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::InvalidArgument(_) | Error::InvalidState(_) => 2,
            Error::Format(_) | Error::PolicyLoad(_) | Error::Io(_) => 3,
            Error::Training(_) | Error::DegenerateGradient(_) | Error::Numeric(_) => 4,
        }
    }
}
