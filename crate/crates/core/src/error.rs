use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("record {id}: {message}")]
    Schema { id: String, message: String },

    #[error("grammar: {0}")]
    Grammar(String),

    #[error("template `{template}`: {message}")]
    Structure { template: String, message: String },

    #[error("empty graph")]
    EmptyGraph,

    #[error("dead end after {} step(s) from `{}`", partial.steps.len(), partial.start_type)]
    DeadEnd { partial: crate::typegraph::PredicatePath },

    #[error("no candidate for slot {0}")]
    UnsatisfiableSlot(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config: {0}")]
    Config(String),

    #[error("integrity: unknown id {0}")]
    Integrity(String),

    #[error("generated {achieved} of {target} distinct pairs before exhausting the attempt budget")]
    PartialOutput { achieved: usize, target: usize },

    #[error("network error (retryable): {0}")]
    Network(String),

    #[error("endpoint returned HTTP {0}")]
    Status(u16),

    #[error("malformed endpoint response: {0}")]
    Protocol(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error: 2 for I/O-like failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Network(_) | Error::Status(_) => 2,
            _ => 1,
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Network(_) | Error::DeadEnd { .. })
    }
}
