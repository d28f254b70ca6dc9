use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid decision at slot {slot}: {reason}")]
    InvalidDecision { slot: usize, reason: String },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("instance too large: {0}")]
    SizeLimit(String),

    #[error("trace format error at line {line}: {reason}")]
    TraceFormat { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
