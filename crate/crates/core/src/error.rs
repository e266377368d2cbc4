use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    /// Scenario/config validation failure. `path` is the JSON path of the
    /// offending field, e.g. `satellites[2].flops_per_sec`.
    #[error("invalid field `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed compressed blob; `offset` is the byte position where
    /// decoding failed.
    #[error("decode error at byte {offset}: {message}")]
    Decode { offset: usize, message: String },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    /// Brute-force instance too large for the configured cap.
    #[error("search space {size} exceeds brute-force cap {cap}")]
    CapExceeded { size: u128, cap: u128 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }
}
