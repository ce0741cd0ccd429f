use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Variants are split along the line the CLI cares about: bad user input
/// (files, config, data that fails validation) versus a broken internal
/// invariant.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: line {line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("rank-deficient design: column(s) {columns:?} are linearly dependent on earlier columns")]
    RankDeficient { columns: Vec<String> },

    #[error("not enough observations: n = {n}, k = {k}")]
    TooFewObservations { n: usize, k: usize },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("gazetteer transport failure: {0}")]
    Transport(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(context: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by the caller's inputs rather than by this crate.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Invariant(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
