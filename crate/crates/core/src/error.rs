use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A row of an input file could not be parsed or violates a data invariant.
    #[error("{path}:{line}: field `{field}`: {message}")]
    Parse { path: String, line: u64, field: String, message: String },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid detection: {0}")]
    InvalidDetection(String),

    /// A parameter violates its domain, or an operation was called outside
    /// its precondition.
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
