//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    /// A document lacks ground-truth unit ids, so exact objective metrics
    /// cannot be computed for it.
    #[error("unsupported corpus: document '{0}' has no ground-truth unit ids")]
    UnsupportedCorpus(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("stale index: built at encoder version {index_version}, model is at {model_version}")]
    StaleIndex {
        index_version: u64,
        model_version: u64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("teacher protocol error: {0}")]
    TeacherProtocol(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
