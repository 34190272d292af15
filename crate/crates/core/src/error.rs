use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverageError {
    /// An argument lies outside the set the operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    /// The operation needs more agents than the configuration holds.
    #[error("unsupported agent count {n}: {what} requires at least {min}")]
    TooFewAgents { what: &'static str, n: usize, min: usize },

    #[error("degenerate Voronoi partition: agents {0} and {1} share a position")]
    DegenerateVoronoi(usize, usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, CoverageError>;
