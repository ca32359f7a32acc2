use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the engine.
///
/// The variants map onto distinct failure classes so front ends can choose
/// an exit status without string matching.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (bad shape, mismatched
    /// vocabulary, duplicate id, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration value failed validation.
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// A line of a text input could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A binary index file is malformed.
    #[error("invalid index file: {0}")]
    Format(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
