//! Synthetic VQA scenes on a small grid.
//!
//! Every scene places a few coloured shapes on a `rows × cols` grid and
//! encodes each cell as `[1, objectness, shape one-hot, colour one-hot]`
//! plus seeded Gaussian noise. Questions come from three templates (count,
//! colour, presence). A fraction of scenes plant an unknown shape; all
//! other scenes neither contain nor mention one, so the open-world split of
//! the corpus is known in advance and written out as a ground-truth
//! manifest.

mod generate;
mod oracle;
mod spec;
mod write;

use std::path::PathBuf;

use thiserror::Error;

pub use generate::{generate, Object, Question, Scene, ToyCorpus};
pub use oracle::{decode_cells, oracle_answer, Cell};
pub use spec::{ShapeDef, ToySpec};
pub use write::ToyFiles;

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("invalid toy spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Core(#[from] jex_core::CoreError),
    #[error(transparent)]
    Data(#[from] jex_owsplit::OwsplitError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T, E = ToyError> = std::result::Result<T, E>;
