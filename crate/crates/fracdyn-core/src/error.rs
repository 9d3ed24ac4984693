//! Crate-wide error type and result alias.

use nalgebra::DVector;
use thiserror::Error;

/// Errors produced by any module of this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of two arguments do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// An iterative matrix factorization failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The l1 solver hit its iteration cap before meeting the optimality
    /// tolerance. Carries the last iterate so callers can inspect or reuse it.
    #[error("lasso did not converge within {iterations} sweeps (optimality residual {residual:.3e})")]
    LassoNoConvergence {
        iterations: usize,
        residual: f64,
        last_iterate: Box<DVector<f64>>,
    },

    /// A per-time-step solve inside the E-step failed; `index` is the time
    /// step (row of the stacked data) at which it happened.
    #[error("E-step failed at time index {index}: {source}")]
    EStepFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// A signal channel carries no information (zero variance / zero detail
    /// energy), so slopes and regressions on it are undefined.
    #[error("degenerate signal: channel {channel} has zero variance")]
    DegenerateSignal { channel: usize },

    /// A sensor index lies outside `0..n`.
    #[error("sensor index {index} out of range for {n} states")]
    SensorOutOfRange { index: usize, n: usize },

    /// A request exceeds the horizon a kernel was built for.
    #[error("requested length {requested} exceeds kernel horizon {available}")]
    HorizonExceeded { requested: usize, available: usize },

    /// Exhaustive subset enumeration refused: 2^n subsets is too many.
    #[error("exhaustive search refused for n = {n} (limit {limit})")]
    ExhaustiveLimit { n: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
