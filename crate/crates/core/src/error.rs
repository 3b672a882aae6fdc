use thiserror::Error;

/// Errors raised by the simulator and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("power coefficient is flat over the search range, maximum is indistinct")]
    FlatSurface,

    #[error("query outside table grid: {0}")]
    Extrapolation(String),

    #[error("zero droop stiffness: K_theta_msc * (K_wr + K_beta * K_p) = {0}")]
    ZeroStiffness(f64),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("invalid plant state at t = {time:.6} s: {what}")]
    StateViolation { time: f64, what: String },

    #[error("integration diverged at t = {time:.6} s (|x| = {magnitude:e})")]
    Divergence { time: f64, magnitude: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("eigenvalue solver failed")]
    EigenFailure,

    #[error("trace too short: {0}")]
    TraceTooShort(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParam(msg.into())
}
