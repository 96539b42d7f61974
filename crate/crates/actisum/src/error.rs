//! Error type shared across the pipeline.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A file could not be parsed. Carries the 1-based row/line when known.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// An input violated a documented precondition or invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Two operands had incompatible shapes.
    #[error("shape mismatch in {op}: left {left:?}, right {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A numeric operation produced NaN or infinity.
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    /// A pipeline stage was invoked before its required predecessor.
    #[error("missing artifact: {what} — run `{predecessor}` first")]
    MissingArtifact { what: String, predecessor: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 for input/validation problems,
    /// 2 for numeric aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) => 2,
            _ => 1,
        }
    }
}
