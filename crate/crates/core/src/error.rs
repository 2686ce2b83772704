use thiserror::Error;

use crate::connection::CurveTrace;
use crate::matfun::SpdMatrix;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed numeric input (non-finite entries, wrong shapes).
    #[error("invalid input: {0}")]
    Input(String),

    /// Caller violated an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// A matrix that must be positive definite (or invertible) is not,
    /// relative to the eigenvalue floor.
    #[error("conditioning failure: {0}")]
    Conditioning(String),

    #[error("operation not supported: {0}")]
    Unsupported(String),

    /// Geodesic integration left the manifold's valid region.
    #[error("integration left the valid region at t = {t}")]
    Integration { t: f64, last_valid: Box<CurveTrace> },

    #[error("function evaluation failed at {location}: {message}")]
    Evaluation { location: String, message: String },

    /// Line search could not find a descent step.
    #[error("descent stagnated after {iterations} iterations (best value {best_value})")]
    Stagnation {
        iterations: usize,
        best_value: f64,
        best: Box<SpdMatrix>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("Brascamp-Lieb datum is suspected infeasible: {0}")]
    InfeasibleSuspected(String),

    #[error("operator capacity is suspected to be zero: {0}")]
    CapacityZeroSuspected(String),

    #[error("problem too large: {0}")]
    Capacity(String),
}
