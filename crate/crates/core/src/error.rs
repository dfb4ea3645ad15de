use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible shapes between two operands or layers.
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    Shape {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    /// Invalid configuration (hyperparameters, class lists, fractions, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the domain of an operation.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An operation invoked in the wrong state (e.g. backward before forward).
    #[error("invalid state: {0}")]
    State(String),

    /// Data that violates a labeling or class-membership contract.
    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    /// Active error rate is undefined when nothing was executed.
    #[error("no accepted actions: AER is undefined")]
    NoAcceptedActions,

    #[error("ROC requires both classes; missing {0} scores")]
    MissingClass(&'static str),

    #[error("unsupported schema: expected {expected}, found {found}")]
    Schema { expected: String, found: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn shape(expected: &[usize], found: &[usize]) -> Self {
        Error::Shape {
            expected: expected.to_vec(),
            found: found.to_vec(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input or configuration rather than a
    /// failure while running. Front ends map these to a usage exit code.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config(_)
            | Error::Argument(_)
            | Error::Parse { .. }
            | Error::Schema { .. }
            | Error::Data(_)
            | Error::Shape { .. } => true,
            Error::File { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            _ => false,
        }
    }
}
