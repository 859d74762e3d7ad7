//! VQA-style question and annotation files, joined into IQA triplets.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_json, OwsplitError, Result};
use crate::text::normalize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnswerType {
    #[serde(rename = "yes/no")]
    YesNo,
    #[serde(rename = "number")]
    Number,
    #[serde(rename = "other")]
    Other,
}

impl AnswerType {
    pub fn parse(label: &str) -> Result<Self> {
        match label {
            "yes/no" => Ok(Self::YesNo),
            "number" => Ok(Self::Number),
            "other" => Ok(Self::Other),
            _ => Err(OwsplitError::UnknownAnswerType(label.to_owned())),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::YesNo => "yes/no",
            Self::Number => "number",
            Self::Other => "other",
        }
    }
}

impl fmt::Display for AnswerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Which source split (train or val) a triplet came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceSplit {
    Train,
    Val,
}

impl SourceSplit {
    /// Reads a VQA `data_subtype` such as `train2014` or `val2017`.
    pub fn from_subtype(subtype: &str) -> Option<Self> {
        let s = subtype.to_ascii_lowercase();
        if s.starts_with("train") {
            Some(Self::Train)
        } else if s.starts_with("val") {
            Some(Self::Val)
        } else {
            None
        }
    }

    pub fn subtype(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_subtype: Option<String>,
    pub questions: Vec<QuestionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: u64,
    pub image_id: u64,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_subtype: Option<String>,
    pub annotations: Vec<AnnotationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub question_id: u64,
    pub image_id: u64,
    pub answer_type: String,
    pub answers: Vec<AnswerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiple_choice_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_id: Option<u32>,
}

/// One image–question–answer record.
#[derive(Debug, Clone, PartialEq)]
pub struct IqaTriplet {
    pub question_id: u64,
    pub image_id: u64,
    pub question: String,
    /// Human answers, lowercased and trimmed.
    pub answers: Vec<String>,
    pub answer_type: AnswerType,
    pub split: SourceSplit,
}

impl IqaTriplet {
    /// Most frequent human answer; ties go to the lexicographically smallest.
    pub fn target_answer(&self) -> &str {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for a in &self.answers {
            *counts.entry(a.as_str()).or_default() += 1;
        }
        let mut best = ("", 0);
        for (a, n) in counts {
            if n > best.1 {
                best = (a, n);
            }
        }
        best.0
    }

    pub fn tokens(&self) -> Vec<String> {
        normalize(&self.question)
    }
}

/// Joins a questions file with its annotations file. The source split comes
/// from the files' `data_subtype`.
pub fn load_triplets(questions: &Path, annotations: &Path) -> Result<Vec<IqaTriplet>> {
    let q: QuestionsFile = read_json(questions)?;
    let a: AnnotationsFile = read_json(annotations)?;
    let split = q
        .data_subtype
        .as_deref()
        .or(a.data_subtype.as_deref())
        .and_then(SourceSplit::from_subtype)
        .ok_or_else(|| OwsplitError::UnknownSourceSplit(questions.to_path_buf()))?;
    join(q, a, split)
}

pub fn join(q: QuestionsFile, a: AnnotationsFile, split: SourceSplit) -> Result<Vec<IqaTriplet>> {
    let mut by_qid: HashMap<u64, AnnotationRecord> = HashMap::with_capacity(a.annotations.len());
    for ann in a.annotations {
        let qid = ann.question_id;
        if by_qid.insert(qid, ann).is_some() {
            return Err(OwsplitError::DuplicateQuestion(qid));
        }
    }
    let mut out = Vec::with_capacity(q.questions.len());
    for rec in q.questions {
        let ann = by_qid
            .remove(&rec.question_id)
            .ok_or(OwsplitError::UnmatchedQuestion(rec.question_id))?;
        if normalize(&rec.question).is_empty() {
            return Err(OwsplitError::EmptyQuestion);
        }
        if ann.answers.is_empty() {
            return Err(OwsplitError::NoAnswers(rec.question_id));
        }
        out.push(IqaTriplet {
            question_id: rec.question_id,
            image_id: rec.image_id,
            question: rec.question,
            answers: ann
                .answers
                .iter()
                .map(|x| x.answer.trim().to_lowercase())
                .collect(),
            answer_type: AnswerType::parse(&ann.answer_type)?,
            split,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triplet(answers: &[&str]) -> IqaTriplet {
        IqaTriplet {
            question_id: 1,
            image_id: 1,
            question: "q?".into(),
            answers: answers.iter().map(|s| s.to_string()).collect(),
            answer_type: AnswerType::Other,
            split: SourceSplit::Train,
        }
    }

    #[test]
    fn target_is_majority_then_lexicographic() {
        assert_eq!(triplet(&["red", "blue", "red"]).target_answer(), "red");
        assert_eq!(triplet(&["red", "blue"]).target_answer(), "blue");
    }

    #[test]
    fn answer_types_round_trip_labels() {
        for t in [AnswerType::YesNo, AnswerType::Number, AnswerType::Other] {
            assert_eq!(AnswerType::parse(t.label()).unwrap(), t);
        }
        assert!(matches!(
            AnswerType::parse("colour"),
            Err(OwsplitError::UnknownAnswerType(_))
        ));
    }

    #[test]
    fn subtypes() {
        assert_eq!(
            SourceSplit::from_subtype("train2014"),
            Some(SourceSplit::Train)
        );
        assert_eq!(SourceSplit::from_subtype("val2014"), Some(SourceSplit::Val));
        assert_eq!(SourceSplit::from_subtype("test-dev2015"), None);
    }

    #[test]
    fn join_rejects_unmatched_and_empty() {
        let q = QuestionsFile {
            data_subtype: None,
            questions: vec![QuestionRecord {
                question_id: 7,
                image_id: 1,
                question: "?!".into(),
            }],
        };
        let a = AnnotationsFile {
            data_subtype: None,
            annotations: vec![],
        };
        assert!(matches!(
            join(q.clone(), a, SourceSplit::Train),
            Err(OwsplitError::UnmatchedQuestion(7))
        ));
        let a = AnnotationsFile {
            data_subtype: None,
            annotations: vec![AnnotationRecord {
                question_id: 7,
                image_id: 1,
                answer_type: "other".into(),
                answers: vec![AnswerRecord {
                    answer: "x".into(),
                    answer_id: None,
                }],
                multiple_choice_answer: None,
            }],
        };
        assert!(matches!(
            join(q, a, SourceSplit::Train),
            Err(OwsplitError::EmptyQuestion)
        ));
    }
}
