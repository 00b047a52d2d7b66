use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("state error: {0}")]
    State(String),

    /// Malformed binary file. `offset` is the byte position where decoding failed.
    #[error("format error at offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("truncated payload at offset {offset}: need {needed} bytes, file has {available}")]
    Truncated {
        offset: u64,
        needed: u64,
        available: u64,
    },

    #[error("training diverged at step {step}: {message}")]
    Training { step: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
