use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("svd did not converge after {sweeps} sweeps (off-diagonal ratio {off_ratio:.3e}, sigma_max {sigma_max:.3e}, sigma_min {sigma_min:.3e})")]
    NoConvergence {
        sweeps: usize,
        off_ratio: f64,
        sigma_max: f64,
        sigma_min: f64,
    },

    #[error("numerical failure at epoch {epoch}: {detail}")]
    Numerical { epoch: usize, detail: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse classification used by the command-line driver for exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => ErrorKind::Config,
            Error::Parse { .. } | Error::Data { .. } | Error::Io { .. } | Error::Json(_) => {
                ErrorKind::Data
            }
            Error::Shape { .. }
            | Error::NonFinite(_)
            | Error::NoConvergence { .. }
            | Error::Numerical { .. } => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}
