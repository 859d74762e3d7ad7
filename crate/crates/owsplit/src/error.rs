use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = OwsplitError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum OwsplitError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("annotation {annotation} references unknown category id {category_id}")]
    UnknownCategory { annotation: u64, category_id: u64 },
    #[error("annotation {annotation} references unknown image id {image_id}")]
    UnknownImage { annotation: u64, image_id: u64 },
    #[error("category id {id} defined twice with different names ({first:?} vs {second:?})")]
    ConflictingCategory {
        id: u64,
        first: String,
        second: String,
    },
    #[error("category {0:?} has no supercategory")]
    MissingSupercategory(String),
    #[error(
        "question {question_id} references image {image_id} missing from the instance annotations"
    )]
    MissingImage { question_id: u64, image_id: u64 },
    #[error("empty question")]
    EmptyQuestion,
    #[error("question {0} has no answers")]
    NoAnswers(u64),
    #[error("unknown answer type {0:?}")]
    UnknownAnswerType(String),
    #[error("{0}: cannot tell train from val (data_subtype missing or unrecognised)")]
    UnknownSourceSplit(PathBuf),
    #[error("question {0} has no matching annotation")]
    UnmatchedQuestion(u64),
    #[error("question id {0} appears more than once")]
    DuplicateQuestion(u64),
    #[error("empty trainset")]
    EmptyTrainset,
}

impl OwsplitError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Self::Json {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| OwsplitError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| OwsplitError::json(path, e))
}
