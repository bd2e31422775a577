use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the crate.
///
/// The CLI maps `Config` to exit code 1 and `Data` to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or arguments (bad thresholds, out-of-range
    /// slots, shapes that cannot be combined).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or inconsistent data on disk or in memory.
    #[error("data error: {0}")]
    Data(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_) | Error::Io { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
