use thiserror::Error;

use crate::lattice::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("field shape mismatch: expected d={} L={}, found d={} L={}", .expected.dim, .expected.side, .found.dim, .found.side)]
    ShapeMismatch { expected: Shape, found: Shape },

    #[error("invalid direction vector: {0}")]
    InvalidDirection(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("conductance value {0} outside [0, 1]")]
    ConductanceOutOfRange(f64),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
