//! Question vocabulary and tokenization.

use std::collections::{BTreeMap, HashMap};

use jex_owsplit::text::normalize;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CoreError, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Token ↔ index map with `<pad>` at 0 and `<unk>` at 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in order of first appearance.
    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.push(PAD_TOKEN.to_owned());
        v.push(UNK_TOKEN.to_owned());
        for t in tokens {
            v.push(t.into());
        }
        v
    }

    /// Collects every token of `questions`, most frequent first (ties
    /// alphabetical), keeping those seen at least `min_count` times.
    pub fn build<'a>(questions: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for q in questions {
            for t in normalize(q) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, n)| *n >= min_count.max(1))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(ranked.into_iter().map(|(t, _)| t))
    }

    fn push(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Always false: the reserved tokens are present.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN)
            || tokens.get(1).map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err(serde::de::Error::custom(
                "vocabulary must start with <pad> and <unk>",
            ));
        }
        let v = Self::from_tokens(tokens.into_iter().skip(2));
        Ok(v)
    }
}

/// Normalizes `question` and maps each token to its index.
pub fn tokenize(question: &str, vocab: &Vocabulary) -> Result<Vec<usize>> {
    let tokens = normalize(question);
    if tokens.is_empty() {
        return Err(CoreError::EmptyQuestion);
    }
    Ok(tokens.iter().map(|t| vocab.index_of(t)).collect())
}

/// [`tokenize`] followed by truncation to `max_len` tokens.
pub fn tokenize_truncated(
    question: &str,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<usize>> {
    let mut ids = tokenize(question, vocab)?;
    ids.truncate(max_len.max(1));
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_lowercase_without_punctuation() {
        let vocab = Vocabulary::from_tokens(["is", "the", "airplane", "white"]);
        let ids = tokenize("Is the Airplane white?", &vocab).unwrap();
        assert_eq!(ids, vec![2, 3, 4, 5]);
    }

    #[test]
    fn out_of_vocabulary_maps_to_unk() {
        let vocab = Vocabulary::default();
        assert_eq!(tokenize("xyzzy?", &vocab).unwrap(), vec![UNK]);
    }

    #[test]
    fn blank_question_is_rejected() {
        let err = tokenize("   ", &Vocabulary::default()).unwrap_err();
        assert_eq!(err.to_string(), "empty question");
    }

    #[test]
    fn idempotent_on_joined_output() {
        let vocab = Vocabulary::build(["What colour is the Bus?", "is it red"], 1);
        let q = "What colour is the BUS, really?";
        let first = tokenize(q, &vocab).unwrap();
        let rejoined = normalize(q).join(" ");
        assert_eq!(tokenize(&rejoined, &vocab).unwrap(), first);
    }

    #[test]
    fn build_ranks_by_frequency_and_keeps_reserved() {
        let vocab = Vocabulary::build(["b a", "a c", "a"], 1);
        assert_eq!(vocab.tokens(), ["<pad>", "<unk>", "a", "b", "c"]);
        assert_eq!(Vocabulary::build(["b a", "a c", "a"], 2).len(), 3);
    }

    #[test]
    fn serde_roundtrip() {
        let vocab = Vocabulary::from_tokens(["x", "y"]);
        let json = serde_json::to_string(&vocab).unwrap();
        assert_eq!(json, r#"["<pad>","<unk>","x","y"]"#);
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vocab);
        assert!(serde_json::from_str::<Vocabulary>(r#"["x"]"#).is_err());
    }

    #[test]
    fn truncation() {
        let vocab = Vocabulary::default();
        assert_eq!(tokenize_truncated("a b c d", &vocab, 2).unwrap().len(), 2);
    }
}
