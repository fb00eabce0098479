//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally valid input that collapses the operation (all-zero
    /// vector, constant column, zero range).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A quantity underflowed/overflowed past what f64 can represent.
    #[error("overflow: {0}")]
    Overflow(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Training aborted because the loss became non-finite.
    #[error("training aborted: {0}")]
    TrainAbort(String),

    /// Run-configuration file could not be parsed.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
