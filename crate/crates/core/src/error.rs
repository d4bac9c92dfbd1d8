use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("projection failed: {0}")]
    Infeasible(String),

    #[error("score function has zero norm")]
    ZeroNorm,

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error("limit simulation failed: {0}")]
    Limit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for configuration and input problems, 3 for
    /// fitting failures, 4 for limit-law failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Dimension { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::ZeroNorm => 2,
            Error::Infeasible(_) | Error::Optimizer(_) => 3,
            Error::Limit(_) => 4,
        }
    }
}
