//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("environment usage error: {0}")]
    EnvUsage(String),

    #[error("snapshot format error: {0}")]
    SnapshotFormat(String),

    #[error("training failure: {0}")]
    TrainingFailure(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("collection error: {0}")]
    Collection(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("margin table error: {0}")]
    Table(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
