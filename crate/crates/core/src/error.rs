use std::path::PathBuf;

use jex_owsplit::OwsplitError;
use jex_tensor::TensorError;
use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] OwsplitError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("bad magic {found:?} (expected {expected:?})")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },
    #[error("corrupted file: {0}")]
    Corrupted(String),
    #[error("empty question")]
    EmptyQuestion,
    #[error("empty token list")]
    EmptyTokens,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("the jex variant requires an exemplar store")]
    MissingStore,
    #[error("exemplar store is empty")]
    EmptyStore,
    #[error("every exemplar row is excluded")]
    AllExcluded,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid sample rate {0} (expected 0 < rate <= 1)")]
    InvalidSampleRate(f64),
    #[error("empty answer dictionary")]
    EmptyDictionary,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("missing features for image {image_id} ({path})")]
    MissingFeatures { image_id: u64, path: PathBuf },
    #[error("numeric failure: {0}")]
    NumericFailure(String),
}

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Self::NumericFailure(_))
    }
}
