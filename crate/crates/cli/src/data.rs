use std::collections::HashSet;
use std::path::{Path, PathBuf};

use clap::Args;
use jex_core::training::{build_examples, Example};
use jex_core::Vocabulary;
use jex_owsplit::{load_triplets, AnswerDictionary, IqaTriplet, SplitManifest, SplitName};
use jex_toycorpus::ToyFiles;

use crate::error::{CliError, Result};

/// Where triplets, features and the split manifest live.
#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Corpus directory as written by `gen-toy`; fills in any path not given
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Split manifest [default: <data>/manifest.json]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// VQA-style question files
    #[arg(long, num_args = 1..)]
    pub questions: Vec<PathBuf>,
    /// VQA-style annotation files, paired with --questions in order
    #[arg(long, num_args = 1..)]
    pub annotations: Vec<PathBuf>,
    /// Directory of `<image_id>.jexf` feature files
    #[arg(long)]
    pub features: Option<PathBuf>,
}

pub fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingPath(path.to_path_buf()))
    }
}

pub struct Dataset {
    pub manifest: SplitManifest,
    pub triplets: Vec<IqaTriplet>,
    pub features: PathBuf,
}

impl DataArgs {
    fn resolve(&self) -> Result<(PathBuf, Vec<PathBuf>, Vec<PathBuf>, PathBuf)> {
        let toy = self.data.as_deref().map(ToyFiles::at);
        let pick = |given: &Option<PathBuf>, fallback: Option<PathBuf>, flag: &str| {
            given
                .clone()
                .or(fallback)
                .ok_or_else(|| CliError::Usage(format!("--{flag} (or --data) is required")))
        };
        let manifest = pick(
            &self.manifest,
            self.data.as_ref().map(|d| d.join("manifest.json")),
            "manifest",
        )?;
        let features = pick(
            &self.features,
            toy.as_ref().map(|t| t.features.clone()),
            "features",
        )?;
        let or_toy = |given: &[PathBuf], fallback: Option<Vec<PathBuf>>| {
            if given.is_empty() {
                fallback.unwrap_or_default()
            } else {
                given.to_vec()
            }
        };
        let questions = or_toy(&self.questions, toy.as_ref().map(|t| t.questions.clone()));
        let annotations = or_toy(
            &self.annotations,
            toy.as_ref().map(|t| t.annotations.clone()),
        );
        if questions.is_empty() {
            return Err(CliError::Usage(
                "--questions (or --data) is required".into(),
            ));
        }
        if questions.len() != annotations.len() {
            return Err(CliError::Usage(format!(
                "{} question files but {} annotation files",
                questions.len(),
                annotations.len()
            )));
        }
        Ok((manifest, questions, annotations, features))
    }

    /// Checks every path, then loads the manifest and all triplets.
    pub fn load(&self) -> Result<Dataset> {
        let (manifest, questions, annotations, features) = self.resolve()?;
        for p in [&manifest, &features]
            .into_iter()
            .chain(&questions)
            .chain(&annotations)
        {
            require(p)?;
        }
        let manifest = SplitManifest::load(&manifest)?;
        let mut triplets = Vec::new();
        for (q, a) in questions.iter().zip(&annotations) {
            triplets.extend(load_triplets(q, a)?);
        }
        Ok(Dataset {
            manifest,
            triplets,
            features,
        })
    }
}

impl Dataset {
    /// Triplets of one split in ascending question id order.
    pub fn split(&self, name: SplitName) -> Result<Vec<&IqaTriplet>> {
        let ids: HashSet<u64> = self.manifest.ids(name).iter().copied().collect();
        let mut out: Vec<&IqaTriplet> = self
            .triplets
            .iter()
            .filter(|t| ids.contains(&t.question_id))
            .collect();
        out.sort_by_key(|t| t.question_id);
        if out.len() != ids.len() {
            return Err(CliError::Data(format!(
                "manifest lists {} {name} questions, the annotation files hold {}",
                ids.len(),
                out.len()
            )));
        }
        Ok(out)
    }

    pub fn examples(
        &self,
        name: SplitName,
        vocab: &Vocabulary,
        dict: &AnswerDictionary,
        max_len: usize,
    ) -> Result<Vec<Example>> {
        let triplets = self.split(name)?;
        Ok(build_examples(
            &triplets,
            &self.features,
            vocab,
            dict,
            max_len,
        )?)
    }
}
