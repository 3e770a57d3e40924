use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced anywhere in the library.
///
/// The variants are grouped so that front ends can map them onto a small
/// exit-code taxonomy: configuration, I/O and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in `{name}`")]
    NonFinite { name: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("malformed {what} in {path}: {detail}")]
    Format {
        what: &'static str,
        path: PathBuf,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Io,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Dimension(_) | Error::Contract(_) => ErrorClass::Config,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Format { .. } => ErrorClass::Io,
            Error::NonFinite { .. }
            | Error::Diverged { .. }
            | Error::NoConvergence { .. }
            | Error::Numeric(_) => ErrorClass::Numeric,
        }
    }

    pub(crate) fn format(what: &'static str, path: impl Into<PathBuf>, detail: impl ToString) -> Self {
        Error::Format {
            what,
            path: path.into(),
            detail: detail.to_string(),
        }
    }
}

macro_rules! dim_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Dimension(format!($($arg)*))
    };
}
pub(crate) use dim_err;
