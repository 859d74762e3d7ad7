//! The answer dictionary the classifier predicts over.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{OwsplitError, Result};
use crate::vqa::IqaTriplet;

/// Ordered, duplicate-free list of answers with dense indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerDictionary {
    answers: Vec<String>,
    index: HashMap<String, usize>,
}

impl AnswerDictionary {
    /// Builds a dictionary, keeping the first occurrence of any duplicate.
    pub fn new(answers: impl IntoIterator<Item = String>) -> Self {
        let mut out = Self {
            answers: Vec::new(),
            index: HashMap::new(),
        };
        for a in answers {
            if !out.index.contains_key(&a) {
                out.index.insert(a.clone(), out.answers.len());
                out.answers.push(a);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn index_of(&self, answer: &str) -> Option<usize> {
        self.index.get(answer).copied()
    }

    pub fn answer(&self, index: usize) -> Option<&str> {
        self.answers.get(index).map(String::as_str)
    }

    pub fn answers(&self) -> &[String] {
        &self.answers
    }
}

impl Serialize for AnswerDictionary {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.answers.serialize(s)
    }
}

impl<'de> Deserialize<'de> for AnswerDictionary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Vec::<String>::deserialize(d).map(Self::new)
    }
}

/// The `size` most frequent target answers over the given (Trainset)
/// triplets; ties are broken lexicographically.
pub fn build_answer_dict<'a>(
    trainset: impl IntoIterator<Item = &'a IqaTriplet>,
    size: usize,
) -> Result<AnswerDictionary> {
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for t in trainset {
        *freq.entry(t.target_answer()).or_default() += 1;
    }
    if freq.is_empty() {
        return Err(OwsplitError::EmptyTrainset);
    }
    Ok(AnswerDictionary::new(top_answers(freq, size)))
}

fn top_answers(freq: BTreeMap<&str, usize>, size: usize) -> Vec<String> {
    let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
    // BTreeMap order is lexicographic, and the sort is stable.
    ranked.sort_by_key(|a| std::cmp::Reverse(a.1));
    ranked
        .into_iter()
        .take(size)
        .map(|(a, _)| a.to_owned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vqa::{AnswerType, SourceSplit};

    fn corpus(freqs: &[(&str, usize)]) -> Vec<IqaTriplet> {
        let mut out = Vec::new();
        for &(a, n) in freqs {
            for _ in 0..n {
                out.push(IqaTriplet {
                    question_id: out.len() as u64,
                    image_id: 0,
                    question: "q".into(),
                    answers: vec![a.into()],
                    answer_type: AnswerType::Other,
                    split: SourceSplit::Train,
                });
            }
        }
        out
    }

    #[test]
    fn keeps_most_frequent() {
        let c = corpus(&[("2", 1), ("no", 3), ("yes", 5)]);
        assert_eq!(build_answer_dict(&c, 2).unwrap().answers(), ["yes", "no"]);
        assert_eq!(build_answer_dict(&c, 10).unwrap().len(), 3);
    }

    #[test]
    fn ties_are_lexicographic() {
        let c = corpus(&[("yes", 3), ("no", 3)]);
        assert_eq!(build_answer_dict(&c, 1).unwrap().answers(), ["no"]);
    }

    #[test]
    fn empty_trainset_is_rejected() {
        assert!(matches!(
            build_answer_dict(&[], 5),
            Err(OwsplitError::EmptyTrainset)
        ));
    }

    #[test]
    fn dense_indices() {
        let d = AnswerDictionary::new(["a", "b", "a", "c"].map(String::from));
        assert_eq!(d.len(), 3);
        assert_eq!(d.index_of("c"), Some(2));
        assert_eq!(d.answer(1), Some("b"));
    }
}
