use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input that violates a documented precondition or invariant.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("authorization rejected by {url} (HTTP {status})")]
    Auth { url: String, status: u16 },

    #[error("remote request failed: {0}")]
    Remote(String),

    /// One or more media downloads failed; the listing itself succeeded.
    #[error("{failed} of {total} media downloads failed")]
    PartialFetch {
        failed: usize,
        total: usize,
        failures: Vec<(String, String)>,
    },

    #[error("export aborted, {} image file(s) missing: {}", .0.len(), .0.join(", "))]
    MissingMedia(Vec<String>),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

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
