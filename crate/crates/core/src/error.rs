use thiserror::Error;

use crate::solver::SolveReport;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("basis vectors are linearly dependent")]
    RankDeficientBasis,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),
    #[error("pattern does not match penalty: {0}")]
    InvalidPattern(String),
    #[error("invalid response {value} for {loss} loss")]
    InvalidResponse { loss: &'static str, value: f64 },
    #[error("no closed form moments: {0}")]
    NoClosedForm(String),
    #[error("estimated Hessian is singular")]
    SingularEstimate,
    #[error("solver did not converge after {} iterations (KKT residual {:.3e})", .0.iterations, .0.kkt_residual)]
    NotConverged(Box<SolveReport>),
    #[error("logistic fit diverged (norm {norm:.3e}); data look separable")]
    SeparableData { norm: f64 },
    #[error("no converged replications")]
    NoConvergedReplications,
    #[error("too many failed draws: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::ConfigInvalid(_)
                | Error::InvalidPenalty(_)
                | Error::InvalidPattern(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidResponse { .. }
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
