use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SaeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SaeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("batch too small: train-mode batch norm needs at least 2 rows, got {rows}")]
    BatchTooSmall { rows: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate labels: training needs at least 2 distinct classes")]
    DegenerateLabels,

    #[error("{file}: {message}")]
    Load { file: PathBuf, message: String },

    #[error("{file} at byte offset {offset}: {message}")]
    LoadAt {
        file: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl SaeError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SaeError::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SaeError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than bad usage or numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            SaeError::Load { .. } | SaeError::LoadAt { .. } | SaeError::DegenerateLabels
        )
    }
}
