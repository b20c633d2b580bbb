//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by any stage of the pipeline.
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("parse error at {path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error at node {node}: {detail}")]
    Numeric { node: String, detail: String },

    #[error("gradient check failed: {0}")]
    GradCheck(String),

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("bundle format error: {0}")]
    Bundle(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
