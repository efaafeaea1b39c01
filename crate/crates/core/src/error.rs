use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library reports.
///
/// The variants line up with the exit-code classes of the command-line tool:
/// [`Error::Argument`] is a usage problem, [`Error::Io`] an I/O problem, and
/// everything else is a data or validation problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt file at byte offset {offset}: {reason}")]
    Corruption { offset: u64, reason: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("attribution source {source_filter} selects no records")]
    EmptySubset { source_filter: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn corruption(offset: u64, reason: impl Into<String>) -> Self {
        Error::Corruption {
            offset,
            reason: reason.into(),
        }
    }
}
