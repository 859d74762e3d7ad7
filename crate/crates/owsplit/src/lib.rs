//! Open-world known/unknown split generation.
//!
//! Category occurrence is measured as `N = N_i · N_t` (distinct images times
//! instances) over all supplied COCO instance files. The rarest category of
//! every supercategory except `person` becomes unknown, and an IQA triplet is
//! unknown when its image holds an unknown instance or its question mentions
//! an unknown category (or one of its lexicon phrases).

pub mod answers;
pub mod coco;
mod error;
pub mod lexicon;
pub mod split;
pub mod text;
pub mod vqa;

pub use answers::{build_answer_dict, AnswerDictionary};
pub use coco::{Instances, InstancesFile};
pub use error::{OwsplitError, Result};
pub use lexicon::Lexicon;
pub use split::{
    category_stats, select_unknown, split_triplets, CategoryStats, SplitManifest, SplitName,
};
pub use vqa::{load_triplets, AnswerType, IqaTriplet, SourceSplit};
