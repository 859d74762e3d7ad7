use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("{op}: dimension mismatch ({detail})")]
    DimensionMismatch { op: &'static str, detail: String },
    #[error("mode out of range: {0} (expected 1, 2 or 3)")]
    ModeOutOfRange(usize),
    #[error("{0}: empty input")]
    EmptyInput(&'static str),
    #[error("maxpool1d: invalid bucket count {buckets} for input of length {len}")]
    InvalidBuckets { buckets: usize, len: usize },
    #[error("cross_entropy: target not a distribution ({0})")]
    InvalidTarget(String),
    #[error("backward: loss is not a scalar (shape {0:?})")]
    NotScalar(Vec<usize>),
    #[error("backward: tape is empty")]
    EmptyTape,
    #[error("unknown tape variable {0}")]
    UnknownVar(usize),
}
