//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Unified error for parsing, validation, and numeric failure modes.
#[derive(Debug, Error)]
pub enum Error {
    /// Underlying I/O failure while reading or writing a file.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed content in an input file, located by line number
    /// (1-based, counting the header line as line 1).
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Arguments that violate a documented precondition (wrong lengths,
    /// empty inputs, out-of-range configuration, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A mathematical-domain violation (non-positive strike, negative
    /// volatility, price outside arbitrage bounds, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A numeric search that has no solution in its bracket.
    #[error("no solution: {0}")]
    NoSolution(String),

    /// An input that is formally valid but carries no usable signal
    /// (e.g. all points identical in a regression).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Failure encoding or decoding a persisted artifact.
    #[error("serialization error on {path}: {message}")]
    Serialization { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn serialization(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Serialization {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_error_names_file_and_line() {
        let err = Error::parse("data/quotes.csv", 17, "expected 6 fields, found 5");
        assert_eq!(
            err.to_string(),
            "data/quotes.csv:17: expected 6 fields, found 5"
        );
    }

    #[test]
    fn io_error_preserves_source() {
        let inner = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        let err = Error::io("missing.csv", inner);
        let msg = err.to_string();
        assert!(msg.contains("missing.csv"), "message was: {msg}");
        assert!(std::error::Error::source(&err).is_some());
    }
}
