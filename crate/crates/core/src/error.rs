use std::path::PathBuf;

use thiserror::Error;

use crate::backends::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown domain `{0}` (expected web, code or customized)")]
    UnknownDomain(String),

    #[error("unknown profile field `{0}`")]
    UnknownField(String),

    #[error("invalid tool profile: {0}")]
    InvalidProfile(String),

    #[error("{0}")]
    Invalid(String),

    #[error("backend call failed for `{id}`: {source}")]
    Document {
        id: String,
        #[source]
        source: BackendError,
    },

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }

    /// True when the failure came from a model backend rather than bad input.
    pub fn is_backend(&self) -> bool {
        matches!(self, Error::Backend(_) | Error::Document { .. })
    }
}
