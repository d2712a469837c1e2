//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A record in an input file could not be parsed. Carries the
    /// 1-based line number of the offending record.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A precondition on operation inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Run configuration is malformed or references missing resources.
    #[error("config error: {0}")]
    Config(String),

    /// A generator could not produce samples for a class.
    #[error("generator '{id}': {msg}")]
    Generator { id: String, msg: String },

    /// A downstream model could not be trained or queried.
    #[error("classifier: {0}")]
    Classifier(String),

    /// An external subprocess adapter misbehaved (bad protocol, timeout,
    /// nonzero exit).
    #[error("subprocess adapter: {0}")]
    Subprocess(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// Process exit code for the CLI: 1 for validation problems, 2 for
    /// runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::InvalidInput(_) | Error::Config(_) => 1,
            _ => 2,
        }
    }
}
