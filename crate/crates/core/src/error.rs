use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The URL has no recognizable host between scheme and first slash.
    #[error("cannot extract host from url {0:?}")]
    Classification(String),

    #[error("unknown search term {0:?}")]
    UnknownTerm(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stream read error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("{file}:{line}: {reason}")]
    Table {
        file: String,
        line: usize,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid cohort spec: {0}")]
    Spec(String),

    /// A statistic was requested on input that cannot define it
    /// (fewer than two lists, no outsiders, ...).
    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("table write error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
