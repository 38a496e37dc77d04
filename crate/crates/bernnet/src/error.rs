//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or shape disagreement between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input outside a function's mathematical domain (interval, sign, range).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration or usage.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed dataset file.
    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A NaN or Inf surfaced where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A verification property failed.
    #[error("property failure: {0}")]
    Property(String),
}

impl Error {
    /// Process exit code: 1 usage/config, 2 property failure, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) => 3,
            Error::Property(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
