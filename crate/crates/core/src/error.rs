use std::io;

use thiserror::Error;

/// Errors produced anywhere in the simulation stack.
///
/// The variants mirror the failure categories surfaced by the CLI, so a
/// caller can map an error to an exit code without inspecting messages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("round error: {0}")]
    Round(String),

    /// A module error raised while executing a specific round.
    #[error("round {round}: {source}")]
    InRound {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Attaches a round index, unless one is already present.
    pub fn in_round(self, round: usize) -> Self {
        match self {
            Error::InRound { .. } => self,
            other => Error::InRound {
                round,
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, with any round context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::InRound { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
