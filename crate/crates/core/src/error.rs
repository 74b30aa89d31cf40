//! Crate-wide error type and result alias.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad rating range, missing resource, malformed
    /// config file, unknown endpoint policy, and the like.
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid argument to an operation (out-of-range `k`, empty input, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A report was requested over an empty result set.
    #[error("no evaluation records found in {0}")]
    EmptyResults(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
