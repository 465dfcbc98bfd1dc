//! Error type shared by every module in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, TsrError>;

#[derive(Debug, Error)]
pub enum TsrError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("orbit solve did not converge after {iterations} iterations (last residual {residual:.3e})")]
    OrbitSolveFailed { iterations: usize, residual: f64 },

    #[error("operator is singular to working precision: {0}")]
    SingularOperator(String),

    /// The full resolvent was requested on a (near-)singular operator. The
    /// transverse formulation stays finite there and should be used instead.
    #[error("near-resonant operator (sigma_min/sigma_max = {ratio:.3e}); use the transverse formulation")]
    ResonantOperator { ratio: f64 },

    #[error("iterative solve stalled in {context}: relative residual {residual:.3e} after {iterations} iterations")]
    IterativeSolveFailed {
        context: String,
        residual: f64,
        iterations: usize,
        /// Relative residual after each iteration, for post-mortems.
        history: Vec<f64>,
    },

    #[error("response is not settled: gain trend {trend:.3e} over the analysis window exceeds 1%; increase settle_periods")]
    NotSettled { trend: f64 },

    #[error("step size underflow at t = {t:.6e}; the problem is too stiff for an explicit integrator")]
    StepSizeUnderflow { t: f64 },

    #[error("integration exceeded the step budget of {0}")]
    TooManySteps(usize),
}
