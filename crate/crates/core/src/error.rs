//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DssError {
    /// Malformed input file (CSV syntax, missing header, unparseable field).
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    /// Structurally valid input that violates a dataset invariant.
    #[error("inconsistent data: {0}")]
    Consistency(String),

    /// Bad run configuration (missing key, out-of-range parameter).
    #[error("configuration error: {0}")]
    Config(String),

    /// Numerical failure (no basis, rank resolution out of range, non-convergence).
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DssError {
    /// Process exit code contract: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            DssError::Config(_) => 2,
            DssError::Parse { .. } | DssError::Consistency(_) | DssError::Io { .. } => 3,
            DssError::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, DssError>;
