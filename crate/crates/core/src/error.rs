use thiserror::Error;

use crate::opt::{IlpError, QpError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("cell {cell:?} is outside the {dims:?} grid")]
    OutOfBounds { cell: [i64; 3], dims: [usize; 3] },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("time {t} outside trajectory horizon [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("separation failed: {0}")]
    Separation(String),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Ilp(#[from] IlpError),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
