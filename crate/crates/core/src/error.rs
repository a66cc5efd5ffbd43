use std::io;

use crate::tensor::DType;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid shape {0:?}: every extent must be >= 1 and the element count must fit in usize")]
    InvalidShape(Vec<usize>),

    #[error("element count mismatch: {from:?} has {from_count} elements, {to:?} has {to_count}")]
    CountMismatch {
        from: Vec<usize>,
        from_count: usize,
        to: Vec<usize>,
        to_count: usize,
    },

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("dtype mismatch in {op}: {left:?} vs {right:?}")]
    DTypeMismatch {
        op: &'static str,
        left: DType,
        right: DType,
    },

    #[error("{op} does not support dtype {dtype:?}")]
    UnsupportedDType { op: &'static str, dtype: DType },

    #[error("fill value {0} is not representable as u8")]
    FillOutOfRange(f64),

    #[error("invalid layer configuration: {0}")]
    Layer(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("malformed {format} file: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u8 },

    #[error("ensemble error: {0}")]
    Ensemble(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }
}
