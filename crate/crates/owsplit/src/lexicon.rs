//! Category name → match phrases used by the semantic filter.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{read_json, Result};
use crate::text::{contains_phrase, naive_plural, normalize};

/// Every category maps to its normalized phrases; the category's own name and
/// its naive plural are always included.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    phrases: BTreeMap<String, Vec<Vec<String>>>,
}

impl Lexicon {
    /// Name plus naive plural for each category.
    pub fn auto<'a>(categories: impl IntoIterator<Item = &'a str>) -> Self {
        let empty = BTreeMap::new();
        let names: Vec<&str> = categories.into_iter().collect();
        Self::from_synonyms(names, &empty)
    }

    /// Extends the automatic lexicon with user-supplied synonyms.
    pub fn from_synonyms<'a>(
        categories: impl IntoIterator<Item = &'a str>,
        synonyms: &'a BTreeMap<String, Vec<String>>,
    ) -> Self {
        let mut phrases = BTreeMap::new();
        let names: BTreeSet<&str> = categories
            .into_iter()
            .chain(synonyms.keys().map(String::as_str))
            .collect();
        for name in names {
            let mut set: BTreeSet<Vec<String>> = BTreeSet::new();
            set.insert(normalize(name));
            set.insert(normalize(&naive_plural(name)));
            for s in synonyms.get(name).into_iter().flatten() {
                set.insert(normalize(s));
            }
            set.remove(&Vec::new());
            phrases.insert(name.to_owned(), set.into_iter().collect());
        }
        Self { phrases }
    }

    /// Reads a `{"category": ["synonym", ...]}` JSON file.
    pub fn load<'a>(path: &Path, categories: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let synonyms: BTreeMap<String, Vec<String>> = read_json(path)?;
        let names: Vec<String> = categories.into_iter().map(str::to_owned).collect();
        Ok(Self::from_synonyms(
            names.iter().map(String::as_str),
            &synonyms,
        ))
    }

    pub fn phrases(&self, category: &str) -> &[Vec<String>] {
        self.phrases.get(category).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Whether any phrase of `category` occurs in the normalized `tokens`.
    pub fn mentions(&self, category: &str, tokens: &[String]) -> bool {
        self.phrases(category)
            .iter()
            .any(|p| contains_phrase(tokens, p))
    }
}
