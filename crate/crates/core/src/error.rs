//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by any module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or batch dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A value violates a numeric precondition (non-finite, out of range).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value is missing, malformed, or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Text input (relatedness file, CSV, checkpoint, config) failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A label index is out of range or otherwise unusable.
    #[error("label error: {0}")]
    Label(String),

    /// Empirical relatedness inference has no eligible samples for a pair.
    #[error("inference error: {0}")]
    Inference(String),

    /// A metric cannot be computed from the given inputs.
    #[error("metric error: {0}")]
    Metric(String),

    /// A cached intermediate does not match the data it is used with.
    #[error("state error: {0}")]
    State(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: {message}")]
    Diverged { step: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
