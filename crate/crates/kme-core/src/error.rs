use thiserror::Error;

/// Errors surfaced by the library. Numerical routines distinguish between
/// invalid inputs, cases the closed forms do not cover, and honest failures
/// of the quadrature or construction machinery.
#[derive(Debug, Error)]
pub enum KmeError {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported case: {0}")]
    Unsupported(String),

    /// The d/2-moment condition `int t^(-d/2) dnu(t) < oo` fails, so the
    /// spectral density and the L2 quantities built on it are undefined.
    #[error("moment condition violated for d = {d}: int t^(-d/2) dnu(t) diverges ({detail})")]
    MomentCondition { d: u32, detail: String },

    #[error("quadrature did not converge: achieved error estimate {error_estimate:e}")]
    IntegrationFailure { error_estimate: f64 },

    #[error("construction failed: {0}")]
    ConstructionFailure(String),

    /// A quantity that must be nonnegative (or otherwise constrained) came
    /// out wrong by more than rounding noise. Indicates a bug, not an input
    /// problem.
    #[error("internal consistency violation: {0}")]
    InternalConsistency(String),
}

pub type Result<T> = std::result::Result<T, KmeError>;
