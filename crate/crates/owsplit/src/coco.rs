//! COCO-style instance annotations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_json, OwsplitError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstancesFile {
    #[serde(default)]
    pub images: Vec<ImageRecord>,
    #[serde(default)]
    pub annotations: Vec<InstanceRecord>,
    #[serde(default)]
    pub categories: Vec<CategoryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    #[serde(default)]
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryRecord {
    pub id: u64,
    pub name: String,
    #[serde(default)]
    pub supercategory: String,
}

impl InstancesFile {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Union of one or more instance files, indexed by image.
#[derive(Debug, Clone, Default)]
pub struct Instances {
    images: BTreeSet<u64>,
    categories: BTreeMap<u64, CategoryRecord>,
    /// image id → (category id → instance count)
    per_image: BTreeMap<u64, BTreeMap<u64, u64>>,
}

impl Instances {
    pub fn load(paths: &[impl AsRef<Path>]) -> Result<Self> {
        let files = paths
            .iter()
            .map(|p| InstancesFile::load(p.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::merge(&files)
    }

    pub fn merge(files: &[InstancesFile]) -> Result<Self> {
        let mut out = Self::default();
        for f in files {
            out.images.extend(f.images.iter().map(|i| i.id));
            for c in &f.categories {
                if let Some(prev) = out.categories.get(&c.id) {
                    if prev.name != c.name {
                        return Err(OwsplitError::ConflictingCategory {
                            id: c.id,
                            first: prev.name.clone(),
                            second: c.name.clone(),
                        });
                    }
                } else {
                    out.categories.insert(c.id, c.clone());
                }
            }
        }
        for f in files {
            for a in &f.annotations {
                if !out.categories.contains_key(&a.category_id) {
                    return Err(OwsplitError::UnknownCategory {
                        annotation: a.id,
                        category_id: a.category_id,
                    });
                }
                if !out.images.contains(&a.image_id) {
                    return Err(OwsplitError::UnknownImage {
                        annotation: a.id,
                        image_id: a.image_id,
                    });
                }
                *out.per_image
                    .entry(a.image_id)
                    .or_default()
                    .entry(a.category_id)
                    .or_default() += 1;
            }
        }
        Ok(out)
    }

    pub fn has_image(&self, image_id: u64) -> bool {
        self.images.contains(&image_id)
    }

    pub fn image_count(&self) -> usize {
        self.images.len()
    }

    pub fn categories(&self) -> impl Iterator<Item = &CategoryRecord> {
        self.categories.values()
    }

    pub fn category_by_name(&self, name: &str) -> Option<&CategoryRecord> {
        self.categories.values().find(|c| c.name == name)
    }

    /// Category id → instance count for one image (empty for unannotated images).
    pub fn image_categories(&self, image_id: u64) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.per_image
            .get(&image_id)
            .into_iter()
            .flat_map(|m| m.iter().map(|(&c, &n)| (c, n)))
    }

    pub(crate) fn per_image(&self) -> &BTreeMap<u64, BTreeMap<u64, u64>> {
        &self.per_image
    }
}
