use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum ElsaError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("size error: {0}")]
    Size(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("duplicate key: {0}")]
    DuplicateKey(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("translation failed for sentence {index}: {message}")]
    Translation { index: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing upstream artifact {path:?}; run stage `{stage}` first")]
    Dependency { stage: String, path: PathBuf },
    #[error("data error: {0}")]
    Data(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ElsaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ElsaError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, ElsaError>;
