use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the analysis stages.
///
/// Variants are grouped by how a driver should react: malformed or
/// contract-violating data, a stage that has not produced its output yet,
/// and plain I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: missing or invalid field `{field}`")]
    Schema { line: usize, field: String },

    #[error("template for relation {relation}: {reason}")]
    Template { relation: String, reason: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("missing dependency: {0}")]
    Dependency(String),

    #[error("insufficient cohort for fact {uid}: {size} record(s) share its relation and language")]
    InsufficientCohort { uid: String, size: usize },

    #[error("score undefined: {0}")]
    UndefinedScore(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("{path}: invalid UTF-8 at byte offset {offset}")]
    Encoding { path: PathBuf, offset: usize },

    #[error("activation dump: {0}")]
    Dump(String),

    #[error("stage `{0}` has no output yet; run it first")]
    MissingStage(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// True when the error means an upstream stage or input file is absent.
    pub fn is_missing_dependency(&self) -> bool {
        matches!(self, Error::MissingStage(_) | Error::Dependency(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
