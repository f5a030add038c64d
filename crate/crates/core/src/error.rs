use thiserror::Error;

use crate::lattice::Vertex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("line {functional} = {alpha} misses the domain")]
    EmptyTarget { functional: String, alpha: f64 },
    #[error("vertex {0} is outside the domain")]
    OutOfDomain(Vertex),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("brute-force oracle refused: half-width {0} exceeds 3")]
    TooLarge(i32),
    #[error("structural violation: {0}")]
    Structural(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, FppError>;
