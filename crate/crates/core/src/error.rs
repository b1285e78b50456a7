use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model config: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid episode spec: {0}")]
    InvalidEpisode(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("invalid meta config: {0}")]
    InvalidMeta(String),

    #[error("invalid privacy parameter: {0}")]
    Privacy(String),

    #[error("federation error: {0}")]
    Federation(String),

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error(transparent)]
    Pgm(#[from] crate::data::PgmError),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("manifest {path}:{line}: {msg}")]
    Manifest {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
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
