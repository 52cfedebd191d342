use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the segmentation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid {field}: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced by node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },

    #[error("missing parameters: {0:?}")]
    MissingParams(Vec<String>),

    #[error("parameter shape mismatch: {0:?}")]
    ParamShapes(Vec<String>),

    #[error("missing gradient for parameter {0}")]
    MissingGrad(String),

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape { op, detail: detail.into() }
}
