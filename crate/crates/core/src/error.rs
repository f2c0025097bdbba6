use thiserror::Error;

/// Errors produced by the decoding core, environments, and harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BidError {
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("environment failure: {0}")]
    Environment(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for BidError {
    fn from(e: std::io::Error) -> Self {
        BidError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BidError>;
