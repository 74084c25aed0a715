use thiserror::Error;

/// Errors raised by the filtering library and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite, even after jitter of {max_jitter:e}")]
    NotPositiveDefinite { max_jitter: f64 },

    #[error("matrix has non-finite entries (the model produced NaN or infinity)")]
    NonFinite,

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("innovation covariance is numerically singular")]
    SingularInnovationCov,

    #[error("matrix is numerically singular")]
    SingularMatrix,

    #[error("Hessian of the misfit is singular at the minimizer")]
    SingularHessian,

    #[error("invalid dimension {0}")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(
        "optimizer did not converge: gradient norm {grad_norm:e} after {iterations} iterations"
    )]
    OptimizerDidNotConverge { iterations: usize, grad_norm: f64 },

    #[error("line search failed after {halvings} step halvings")]
    LineSearchFailed { halvings: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("observation sequence is empty")]
    NoObservations,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
