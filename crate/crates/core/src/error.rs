use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("reference field has no zero crossing inside the sampling box")]
    DegenerateSurface,

    #[error("mask is degenerate: {0}")]
    DegenerateMask(&'static str),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("optimization failed at iteration {iteration}: {message}")]
    Optimization { iteration: usize, message: String },

    #[error("format error in {file} at byte {offset}: {message}")]
    Format {
        file: String,
        offset: u64,
        message: String,
    },

    #[error("parse error in {file} line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid inputs rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Optimization { .. } | Error::Io { .. })
    }
}
