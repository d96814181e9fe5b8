use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration error at line {line}: {message}")]
    ConfigLine { line: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("partitioning error: {0}")]
    Partition(String),

    #[error("numerical error: matrix is not positive definite (pivot {pivot:e} at column {column})")]
    NotPositiveDefinite { pivot: f64, column: usize },

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("client {client}: {source}")]
    Client {
        client: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_round(self, round: usize) -> Self {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_client(self, client: usize) -> Self {
        Error::Client {
            client,
            source: Box::new(self),
        }
    }

    /// The innermost error, with round/client context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Round { source, .. } | Error::Client { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) | Error::ConfigLine { .. } | Error::Partition(_) => 2,
            Error::Data(_) | Error::Domain(_) => 3,
            Error::NotPositiveDefinite { .. } => 4,
            _ => 1,
        }
    }
}
