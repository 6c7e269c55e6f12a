use thiserror::Error;

use crate::dynamics::SystemState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {what}{}", .index.map(|i| format!(" (component {i})")).unwrap_or_default())]
    NonFinite { what: String, index: Option<usize> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operator is not monotone: smallest eigenvalue {min_eigenvalue:e} below tolerance")]
    NotMonotone { min_eigenvalue: f64 },

    #[error("resolvent linear system is singular (residual {residual:e})")]
    SingularSystem { residual: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("point is not in the constraint set (distance {distance:e})")]
    Infeasible { distance: f64 },

    #[error("constraint set is empty: {0}")]
    EmptySet(String),

    #[error("constraint set does not match the zero set of the penalty map: {0}")]
    Pairing(String),

    #[error("non-finite state at t = {t}: {detail}")]
    NonFiniteState {
        t: f64,
        detail: String,
        last_good: Box<SystemState>,
    },

    #[error("step size underflow at t = {t} (dt = {dt:e})")]
    StepUnderflow {
        t: f64,
        dt: f64,
        last_good: Box<SystemState>,
    },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("ergodic average is undefined before any weight has accumulated")]
    EmptyAccumulator,

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
