use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty measure")]
    EmptyMeasure,
    #[error("ball contains no atoms")]
    EmptyBall,
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("radius outside certified range: {0}")]
    RadiusOutOfRange(String),
    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
