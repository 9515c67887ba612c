use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {op} on {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("correlation undefined: {0} is constant")]
    UndefinedCorrelation(&'static str),

    #[error("relative reduction undefined for a zero baseline drop")]
    UndefinedReduction,

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("I/O error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
