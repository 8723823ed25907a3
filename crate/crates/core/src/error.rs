//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed text input (events CSV, pitch CSV, manifests).
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A corpus-level consistency violation, naming the offending track.
    #[error("invalid track '{track_id}': {message}")]
    Track { track_id: String, message: String },

    /// Tensor or matrix shape disagreement.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid configuration value.
    #[error("invalid config: {0}")]
    Config(String),

    /// Invalid audio input (wrong sample rate, unsupported encoding, empty).
    #[error("audio error: {0}")]
    Audio(String),

    /// Invalid argument to an operation.
    #[error("{0}")]
    Invalid(String),

    /// Training diverged (non-finite loss).
    #[error("training diverged at epoch {epoch}, step {step}: loss is not finite")]
    Diverged { epoch: usize, step: usize },

    /// File I/O failure with the path that caused it.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
