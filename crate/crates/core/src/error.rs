use std::io;

use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum DaraError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("backward requires a 1x1 loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("label {label} out of range for class_count {class_count}")]
    LabelOutOfRange { label: u32, class_count: u32 },
    #[error("class {class} has {available} items, episode needs {needed}")]
    InsufficientItems {
        class: u32,
        available: usize,
        needed: usize,
    },
    #[error("invalid episode spec: {0}")]
    InvalidSpec(String),

    #[error("feature vector {index} has near-zero norm")]
    ZeroNormFeature { index: usize },
    #[error("channel mismatch: expected {expected}, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("training diverged: {0}")]
    DivergenceDetected(String),

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl DaraError {
    pub(crate) fn shape(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        DaraError::ShapeMismatch { op, lhs, rhs }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        DaraError::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, DaraError>;
