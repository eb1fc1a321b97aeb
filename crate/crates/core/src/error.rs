use thiserror::Error;

use crate::allocation::Allocation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    /// The optimizer stopped without meeting its tolerances. The last
    /// iterate is attached when one could be mapped back to a feasible-shaped
    /// allocation.
    #[error("solver error: {message}")]
    Solver {
        message: String,
        best: Option<Box<Allocation>>,
    },

    #[error("size error: {0}")]
    Size(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn calibration(msg: impl Into<String>) -> Self {
        Error::Calibration(msg.into())
    }
}
