//! Visual question answering with Tucker fusion, grid attention and an
//! exemplar store of joint embeddings.
//!
//! The grid model fuses a GRU question encoding with every cell of a visual
//! feature grid and attends over the cells. The jex variant additionally
//! retrieves the nearest stored training embedding (by max-pooled soft key)
//! and uses it to drive a second attention map.

pub mod attention;
mod binio;
pub mod checkpoint;
mod error;
pub mod exemplar;
pub mod features;
pub mod fusion;
pub mod gru;
mod init;
pub mod model;
pub mod training;
pub mod vocab;

pub use error::{CoreError, Result};
pub use exemplar::{build_store, load_store, save_store, ExemplarStore};
pub use features::{load_features, save_features, VisualFeatures};
pub use model::{predict, ModelDims, ModelParams, Variant};
pub use training::{evaluate, stage1_train, stage2_train, EvalReport, ScoreMode, TrainConfig};
pub use vocab::{tokenize, Vocabulary};
