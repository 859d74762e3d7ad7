//! Occurrence statistics, unknown-category selection and the IQA split.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coco::Instances;
use crate::error::{OwsplitError, Result};
use crate::lexicon::Lexicon;
use crate::text::normalize;
use crate::vqa::{IqaTriplet, SourceSplit};

/// Supercategory exempt from unknown selection (it has a single category).
pub const EXEMPT_SUPERCATEGORY: &str = "person";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub id: u64,
    pub name: String,
    pub supercategory: String,
    /// Distinct images containing the category.
    pub n_images: u64,
    /// Instance records of the category.
    pub n_instances: u64,
    /// `n_images · n_instances`
    pub occurrence: u64,
}

/// Per-category occurrence over the union of the given instance files,
/// ordered by category id. Categories without annotations get zeros.
pub fn category_stats(instances: &Instances) -> Vec<CategoryStats> {
    let mut images: HashMap<u64, u64> = HashMap::new();
    let mut total: HashMap<u64, u64> = HashMap::new();
    for cats in instances.per_image().values() {
        for (&cat, &n) in cats {
            *images.entry(cat).or_default() += 1;
            *total.entry(cat).or_default() += n;
        }
    }
    instances
        .categories()
        .map(|c| {
            let n_images = images.get(&c.id).copied().unwrap_or(0);
            let n_instances = total.get(&c.id).copied().unwrap_or(0);
            CategoryStats {
                id: c.id,
                name: c.name.clone(),
                supercategory: c.supercategory.clone(),
                n_images,
                n_instances,
                occurrence: n_images * n_instances,
            }
        })
        .collect()
}

/// The category with the smallest occurrence in every supercategory except
/// `person`; ties go to the lexicographically smaller name. Result is
/// ordered by supercategory.
pub fn select_unknown(stats: &[CategoryStats]) -> Result<Vec<String>> {
    let mut groups: BTreeMap<&str, Vec<&CategoryStats>> = BTreeMap::new();
    for s in stats {
        if s.supercategory.trim().is_empty() {
            return Err(OwsplitError::MissingSupercategory(s.name.clone()));
        }
        groups.entry(s.supercategory.as_str()).or_default().push(s);
    }
    Ok(groups
        .into_iter()
        .filter(|(sc, _)| *sc != EXEMPT_SUPERCATEGORY)
        .filter_map(|(_, members)| {
            members
                .into_iter()
                .min_by(|a, b| a.occurrence.cmp(&b.occurrence).then(a.name.cmp(&b.name)))
                .map(|s| s.name.clone())
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Trainset,
    Testset,
    ValsetKnown,
    ValsetUnknown,
}

impl SplitName {
    pub const ALL: [SplitName; 4] = [
        SplitName::Trainset,
        SplitName::Testset,
        SplitName::ValsetKnown,
        SplitName::ValsetUnknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Trainset => "trainset",
            Self::Testset => "testset",
            Self::ValsetKnown => "valset_known",
            Self::ValsetUnknown => "valset_unknown",
        }
    }

    pub fn of(source: SourceSplit, unknown: bool) -> Self {
        match (source, unknown) {
            (SourceSplit::Train, false) => Self::Trainset,
            (SourceSplit::Train, true) => Self::Testset,
            (SourceSplit::Val, false) => Self::ValsetKnown,
            (SourceSplit::Val, true) => Self::ValsetUnknown,
        }
    }
}

impl FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| format!("unknown split name {s:?}"))
    }
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub categories: Vec<CategoryStats>,
    pub counts: BTreeMap<String, usize>,
    /// Unknown share of triplets from the source train split.
    pub unknown_fraction_train: f64,
    /// Unknown share of triplets from the source val split.
    pub unknown_fraction_val: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// Input file names (without directories).
    pub sources: Vec<String>,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(tool: &str, sources: &[impl AsRef<Path>], seed: Option<u64>) -> Self {
        Self {
            tool: tool.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            sources: sources
                .iter()
                .map(|p| {
                    p.as_ref()
                        .file_name()
                        .map(|f| f.to_string_lossy().into_owned())
                        .unwrap_or_default()
                })
                .collect(),
            seed,
        }
    }
}

/// Unknown categories plus the four disjoint question-id lists (ascending).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub unknown_categories: Vec<String>,
    pub trainset: Vec<u64>,
    pub testset: Vec<u64>,
    pub valset_known: Vec<u64>,
    pub valset_unknown: Vec<u64>,
    pub stats: SplitStats,
    pub provenance: Provenance,
}

impl SplitManifest {
    pub fn ids(&self, split: SplitName) -> &[u64] {
        match split {
            SplitName::Trainset => &self.trainset,
            SplitName::Testset => &self.testset,
            SplitName::ValsetKnown => &self.valset_known,
            SplitName::ValsetUnknown => &self.valset_unknown,
        }
    }

    fn ids_mut(&mut self, split: SplitName) -> &mut Vec<u64> {
        match split {
            SplitName::Trainset => &mut self.trainset,
            SplitName::Testset => &mut self.testset,
            SplitName::ValsetKnown => &mut self.valset_known,
            SplitName::ValsetUnknown => &mut self.valset_unknown,
        }
    }

    /// Whether two manifests agree on unknown categories and every id list.
    pub fn same_split(&self, other: &Self) -> bool {
        self.unknown_categories == other.unknown_categories
            && SplitName::ALL.iter().all(|&s| self.ids(s) == other.ids(s))
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::error::read_json(path)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| OwsplitError::io(path, e))
    }
}

/// Why a triplet was judged unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnknownEvidence {
    pub visual: bool,
    pub semantic: bool,
}

impl UnknownEvidence {
    pub fn is_unknown(self) -> bool {
        self.visual || self.semantic
    }
}

struct Classifier<'a> {
    instances: &'a Instances,
    unknown_ids: BTreeSet<u64>,
    unknown_names: &'a [String],
    lexicon: &'a Lexicon,
}

impl<'a> Classifier<'a> {
    fn new(instances: &'a Instances, unknown: &'a [String], lexicon: &'a Lexicon) -> Self {
        let unknown_ids = unknown
            .iter()
            .filter_map(|n| instances.category_by_name(n).map(|c| c.id))
            .collect();
        Self {
            instances,
            unknown_ids,
            unknown_names: unknown,
            lexicon,
        }
    }

    fn evidence(&self, t: &IqaTriplet) -> Result<UnknownEvidence> {
        if !self.instances.has_image(t.image_id) {
            return Err(OwsplitError::MissingImage {
                question_id: t.question_id,
                image_id: t.image_id,
            });
        }
        let visual = self
            .instances
            .image_categories(t.image_id)
            .any(|(c, n)| n > 0 && self.unknown_ids.contains(&c));
        let tokens = normalize(&t.question);
        let semantic = self
            .unknown_names
            .iter()
            .any(|name| self.lexicon.mentions(name, &tokens));
        Ok(UnknownEvidence { visual, semantic })
    }
}

/// Evidence for a single triplet against a set of unknown categories.
pub fn classify(
    triplet: &IqaTriplet,
    instances: &Instances,
    unknown: &[String],
    lexicon: &Lexicon,
) -> Result<UnknownEvidence> {
    Classifier::new(instances, unknown, lexicon).evidence(triplet)
}

/// Assigns every triplet to Trainset / Testset / Valset-Known / Valset-Unknown.
/// The returned manifest carries counts but no category stats or provenance.
pub fn split_triplets(
    triplets: &[IqaTriplet],
    instances: &Instances,
    unknown: &[String],
    lexicon: &Lexicon,
) -> Result<SplitManifest> {
    let classifier = Classifier::new(instances, unknown, lexicon);
    let mut manifest = SplitManifest {
        unknown_categories: unknown.to_vec(),
        ..Default::default()
    };
    let mut seen = BTreeSet::new();
    let mut per_source: HashMap<SourceSplit, (usize, usize)> = HashMap::new();
    for t in triplets {
        if !seen.insert(t.question_id) {
            return Err(OwsplitError::DuplicateQuestion(t.question_id));
        }
        let unknown = classifier.evidence(t)?.is_unknown();
        let entry = per_source.entry(t.split).or_default();
        entry.0 += 1;
        entry.1 += usize::from(unknown);
        manifest
            .ids_mut(SplitName::of(t.split, unknown))
            .push(t.question_id);
    }
    for s in SplitName::ALL {
        manifest.ids_mut(s).sort_unstable();
        manifest
            .stats
            .counts
            .insert(s.as_str().to_owned(), manifest.ids(s).len());
    }
    let frac = |s: SourceSplit| {
        per_source
            .get(&s)
            .map(|&(n, u)| if n == 0 { 0.0 } else { u as f64 / n as f64 })
            .unwrap_or(0.0)
    };
    manifest.stats.unknown_fraction_train = frac(SourceSplit::Train);
    manifest.stats.unknown_fraction_val = frac(SourceSplit::Val);
    Ok(manifest)
}

/// Full pipeline: stats → unknown selection → triplet split.
pub fn build_manifest(
    instances: &Instances,
    triplets: &[IqaTriplet],
    lexicon: &Lexicon,
    provenance: Provenance,
) -> Result<SplitManifest> {
    let stats = category_stats(instances);
    let unknown = select_unknown(&stats)?;
    let mut manifest = split_triplets(triplets, instances, &unknown, lexicon)?;
    manifest.stats.categories = stats;
    manifest.provenance = provenance;
    Ok(manifest)
}

/// Trainset triplets that violate the split, found by exhaustive scan.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LeakageReport {
    /// Trainset question ids whose image holds an unknown instance.
    pub visual: Vec<u64>,
    /// Trainset question ids whose question mentions an unknown phrase.
    pub semantic: Vec<u64>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.visual.is_empty() && self.semantic.is_empty()
    }
}

pub fn scan_leakage(
    manifest: &SplitManifest,
    triplets: &[IqaTriplet],
    instances: &Instances,
    lexicon: &Lexicon,
) -> LeakageReport {
    let by_id: HashMap<u64, &IqaTriplet> = triplets.iter().map(|t| (t.question_id, t)).collect();
    let unknown_ids: BTreeSet<u64> = instances
        .categories()
        .filter(|c| manifest.unknown_categories.contains(&c.name))
        .map(|c| c.id)
        .collect();
    let mut report = LeakageReport::default();
    for qid in &manifest.trainset {
        let Some(t) = by_id.get(qid) else { continue };
        if instances
            .image_categories(t.image_id)
            .any(|(c, n)| n > 0 && unknown_ids.contains(&c))
        {
            report.visual.push(*qid);
        }
        let tokens = normalize(&t.question);
        let hit = manifest.unknown_categories.iter().any(|name| {
            lexicon.phrases(name).iter().any(|phrase| {
                (0..tokens.len()).any(|i| tokens[i..].starts_with(phrase) && !phrase.is_empty())
            })
        });
        if hit {
            report.semantic.push(*qid);
        }
    }
    report
}
