use std::fs;
use std::path::{Path, PathBuf};

use jex_core::features::{feature_path, save_features};
use jex_core::VisualFeatures;
use jex_owsplit::coco::{CategoryRecord, ImageRecord, InstanceRecord, InstancesFile};
use jex_owsplit::vqa::{
    AnnotationRecord, AnnotationsFile, AnswerRecord, QuestionRecord, QuestionsFile,
};
use jex_owsplit::SourceSplit;
use serde::Serialize;

use crate::generate::ToyCorpus;
use crate::{Result, ToyError};

const HUMAN_ANSWERS: usize = 10;

/// Files the split tool reads, in the order it is given them.
pub(crate) const INPUT_FILES: [&str; 6] = [
    "instances_train.json",
    "instances_val.json",
    "questions_train.json",
    "annotations_train.json",
    "questions_val.json",
    "annotations_val.json",
];

/// Paths of a corpus written to disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyFiles {
    pub root: PathBuf,
    pub features: PathBuf,
    pub instances: Vec<PathBuf>,
    pub questions: Vec<PathBuf>,
    pub annotations: Vec<PathBuf>,
    pub answers: PathBuf,
    pub truth: PathBuf,
    pub spec: PathBuf,
}

impl ToyFiles {
    pub fn at(root: &Path) -> Self {
        let p = |n: &str| root.join(n);
        Self {
            root: root.to_path_buf(),
            features: p("features"),
            instances: vec![p(INPUT_FILES[0]), p(INPUT_FILES[1])],
            questions: vec![p(INPUT_FILES[2]), p(INPUT_FILES[4])],
            annotations: vec![p(INPUT_FILES[3]), p(INPUT_FILES[5])],
            answers: p("answers.json"),
            truth: p("truth_manifest.json"),
            spec: p("toyspec.json"),
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|source| ToyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl ToyCorpus {
    /// Writes features, COCO-style instances, VQA-style questions and
    /// annotations, the answer list, the spec and the ground-truth manifest.
    pub fn write(&self, root: &Path) -> Result<ToyFiles> {
        let files = ToyFiles::at(root);
        fs::create_dir_all(&files.features).map_err(|source| ToyError::Io {
            path: files.features.clone(),
            source,
        })?;
        for scene in &self.scenes {
            let f = VisualFeatures::from_grid(scene.features.clone())?;
            save_features(&feature_path(&files.features, scene.image_id), &f)?;
        }
        let categories: Vec<CategoryRecord> = self
            .spec
            .shapes
            .iter()
            .enumerate()
            .map(|(i, s)| CategoryRecord {
                id: i as u64 + 1,
                name: s.name.clone(),
                supercategory: s.supercategory.clone(),
            })
            .collect();
        let mut next_annotation = 0u64;
        for (i, split) in [SourceSplit::Train, SourceSplit::Val]
            .into_iter()
            .enumerate()
        {
            let scenes: Vec<_> = self.scenes.iter().filter(|s| s.split == split).collect();
            let subtype = format!("{}toy", split.subtype());
            let mut instances = InstancesFile {
                images: Vec::new(),
                annotations: Vec::new(),
                categories: categories.clone(),
            };
            for s in &scenes {
                instances.images.push(ImageRecord {
                    id: s.image_id,
                    file_name: Some(format!("{}.jexf", s.image_id)),
                });
                for o in &s.objects {
                    next_annotation += 1;
                    instances.annotations.push(InstanceRecord {
                        id: next_annotation,
                        image_id: s.image_id,
                        category_id: o.shape as u64 + 1,
                    });
                }
            }
            write_json(&files.instances[i], &instances)?;

            let in_split =
                |q: &&crate::Question| self.scene(q.image_id).is_some_and(|s| s.split == split);
            let questions = QuestionsFile {
                data_subtype: Some(subtype.clone()),
                questions: self
                    .questions
                    .iter()
                    .filter(in_split)
                    .map(|q| QuestionRecord {
                        question_id: q.question_id,
                        image_id: q.image_id,
                        question: q.text.clone(),
                    })
                    .collect(),
            };
            write_json(&files.questions[i], &questions)?;
            let annotations = AnnotationsFile {
                data_subtype: Some(subtype),
                annotations: self
                    .questions
                    .iter()
                    .filter(in_split)
                    .map(|q| AnnotationRecord {
                        question_id: q.question_id,
                        image_id: q.image_id,
                        answer_type: q.answer_type.label().to_owned(),
                        answers: (1..=HUMAN_ANSWERS as u32)
                            .map(|k| AnswerRecord {
                                answer: q.answer.clone(),
                                answer_id: Some(k),
                            })
                            .collect(),
                        multiple_choice_answer: Some(q.answer.clone()),
                    })
                    .collect(),
            };
            write_json(&files.annotations[i], &annotations)?;
        }
        write_json(&files.answers, &self.answers)?;
        write_json(&files.spec, &self.spec)?;
        let truth = self.manifest.to_json();
        fs::write(&files.truth, truth).map_err(|source| ToyError::Io {
            path: files.truth.clone(),
            source,
        })?;
        Ok(files)
    }
}
