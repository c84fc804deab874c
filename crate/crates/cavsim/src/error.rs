//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("operator is not Hermitian: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NonHermitian { residual: f64, tol: f64 },

    #[error("invalid {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("timeline: {0}")]
    Timeline(String),

    #[error("fit: {0}")]
    Fit(String),

    #[error("analysis: {0}")]
    Analysis(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}:{line}: {reason}")]
    CsvParse {
        path: String,
        line: usize,
        reason: String,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
