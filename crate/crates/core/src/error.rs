use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PblError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("Cholesky factorization of the posterior precision failed")]
    Cholesky,

    #[error("empirical risk {emp} lies outside the loss range [{a}, {b}]")]
    EmpiricalRiskOutOfRange { emp: f64, a: f64, b: f64 },

    #[error("sub-gamma scale c = {0} must satisfy c < 1")]
    ScaleTooLarge(f64),

    #[error("lambda = {lambda} must lie in (0, 1/c) with c = {c}")]
    LambdaOutOfRange { lambda: f64, c: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("model family is empty")]
    EmptyFamily,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PblError>;

impl PblError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PblError::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(PblError::InvalidParameter(msg()))
    }
}
