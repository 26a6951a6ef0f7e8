use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the denoiser library.
#[derive(Debug, Error)]
pub enum NaideError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("pixel ({row}, {col}) is outside a {width}x{height} image")]
    Index {
        row: usize,
        col: usize,
        width: usize,
        height: usize,
    },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {message}")]
    Training {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl NaideError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NaideError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        NaideError::Parse {
            offset,
            message: message.into(),
        }
    }
}

pub type Result<T, E = NaideError> = std::result::Result<T, E>;
