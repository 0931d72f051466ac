use thiserror::Error;

/// Errors produced by the demixing library.
#[derive(Debug, Error)]
pub enum DemixError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("minimum separation {delta} infeasible for {k} lines (need k * delta < 1)")]
    InfeasibleSeparation { k: usize, delta: f64 },

    #[error("rejection sampling gave up after {attempts} attempts")]
    SamplingFailed { attempts: usize },

    #[error("singular interpolation system (smallest singular value {sigma_min:e})")]
    SingularSystem { sigma_min: f64 },

    #[error("rank-deficient least-squares system (condition estimate {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("solver did not converge after {iterations} iterations (primal {primal:e}, dual {dual:e})")]
    NotConverged {
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("eigendecomposition failed")]
    Eigen,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DemixError>;
