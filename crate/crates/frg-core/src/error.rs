use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("factorization failed at pivot {pivot} (value {value:e})")]
    Factorization { pivot: usize, value: f64 },

    #[error("singular flow matrix at collocation index {index}, kappa = {kappa:e}")]
    SingularFlowMatrix { index: usize, kappa: f64 },

    #[error("integration failed at kappa = {kappa:e}: {reason}")]
    IntegrationFailure { kappa: f64, reason: String },

    #[error("non-finite state at kappa = {kappa:e}")]
    NonFinite { kappa: f64 },

    #[error("flow singularity: kappa^2 + U'' <= 0 at kappa = {kappa:e}, phi = {phi}")]
    FlowSingularity { kappa: f64, phi: f64 },

    #[error("projection failed at scale index {step}: {reason}")]
    ProjectionFailure { step: usize, reason: String },

    #[error("Newton iteration did not converge for source c = {c:e}")]
    RootFailure { c: f64 },

    #[error("non-convex minimum for source c = {c:e}: U''(m) = {curvature:e}")]
    NonConvexMinimum { c: f64, curvature: f64 },

    #[error("transfer-matrix entry overflow at ({i}, {j}); choose a reference shift closer to the minimum")]
    Overflow { i: usize, j: usize },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// True for errors caused by bad input rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidArgument(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
