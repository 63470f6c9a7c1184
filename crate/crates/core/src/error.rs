use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs disagree on identity or layout (site, variable, cadence, header).
    #[error("schema error: {0}")]
    Schema(String),

    /// A numeric argument falls outside the domain of the operation.
    #[error("{name}={value} is outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// The metric has no defined value for this input (empty set, single class, zero baseline).
    #[error("undefined metric: {0}")]
    Undefined(String),

    /// v10 or v100 is not strictly positive, so no power-law exponent exists.
    #[error("degenerate wind profile: v10={v10}, v100={v100}")]
    DegenerateProfile { v10: f64, v100: f64 },

    /// p* = 1 maps to an infinite mean-probability threshold.
    #[error("threshold unreachable: p*={0}")]
    UnreachableThreshold(f64),

    #[error("{path}:{row}: {msg}")]
    Parse { path: PathBuf, row: usize, msg: String },

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("hash mismatch for {path}: manifest {expected}, file {actual}")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain { name, value, expected }
    }

    /// True for errors that only signal an undefined metric value.
    pub fn is_undefined(&self) -> bool {
        matches!(self, Error::Undefined(_))
    }
}
