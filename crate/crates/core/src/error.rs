use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("user {user} cannot reach node {node}")]
    Unreachable { user: usize, node: usize },

    #[error("nothing to aggregate: {0}")]
    EmptyAggregate(&'static str),

    #[error("payload dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("packets mix primal and primal-dual aggregation modes")]
    MixedMode,

    #[error(
        "instance too large for exhaustive search: {combinations} combinations exceed {limit}"
    )]
    InstanceTooLarge { combinations: f64, limit: f64 },

    #[error("linear relaxation did not converge: {0}")]
    Solver(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("malformed packet: {0}")]
    Wire(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
