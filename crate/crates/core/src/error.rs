use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },

    #[error("duplicate label for query `{query_id}` and passage `{passage_id}`")]
    DuplicateLabel { query_id: String, passage_id: String },

    #[error("label references unknown {kind} id `{id}`")]
    DanglingId { kind: &'static str, id: String },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("no vector for id `{0}`")]
    MissingVector(String),

    #[error("dimension mismatch for `{id}`: expected {expected}, got {actual}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        actual: usize,
    },

    #[error("corrupt vector file {path}: {message}")]
    CorruptVectors { path: PathBuf, message: String },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown document `{0}`")]
    UnknownDocument(String),

    #[error("nDCG undefined for query `{0}`: no positive passages")]
    UndefinedMetric(String),

    #[error("run does not cover {} queries: {}", .0.len(), .0.join(", "))]
    Coverage(Vec<String>),

    #[error("query sets differ between reports: {0}")]
    QuerySetMismatch(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
