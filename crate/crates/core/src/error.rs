use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("no data rows in {0}")]
    NoDataRows(PathBuf),

    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("singular system: {0}")]
    Singular(String),

    #[error("training diverged: {0}")]
    NonFinite(String),

    #[error("task mismatch: {0}")]
    TaskMismatch(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("no records for point {point_id} at k={k}")]
    NoRecords { point_id: u32, k: u32 },

    #[error("malformed store: {0}")]
    Store(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
