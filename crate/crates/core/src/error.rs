use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the monitoring pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: column `{column}` not found in CSV header")]
    Schema { column: String },

    #[error("no readings survived cleaning")]
    EmptyData,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("series of {len} readings is too short for {requested} injections with gap {min_gap}")]
    Capacity {
        len: usize,
        requested: usize,
        min_gap: usize,
    },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported model document: {0}")]
    ModelFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the filesystem rather than of the data or configuration.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
