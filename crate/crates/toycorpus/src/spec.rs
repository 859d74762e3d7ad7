use serde::{Deserialize, Serialize};

use crate::{Result, ToyError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeDef {
    pub name: String,
    pub supercategory: String,
}

impl ShapeDef {
    pub fn new(name: &str, supercategory: &str) -> Self {
        Self {
            name: name.to_owned(),
            supercategory: supercategory.to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySpec {
    pub rows: usize,
    pub cols: usize,
    pub shapes: Vec<ShapeDef>,
    pub colors: Vec<String>,
    /// Shapes withheld from known scenes.
    pub unknown: Vec<String>,
    pub train_scenes: usize,
    pub val_scenes: usize,
    /// Probability that a scene plants an unknown shape.
    pub unknown_scene_rate: f64,
    pub max_objects: usize,
    /// Standard deviation of the additive feature noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            rows: 4,
            cols: 4,
            shapes: vec![
                ShapeDef::new("circle", "shape"),
                ShapeDef::new("square", "shape"),
                ShapeDef::new("triangle", "shape"),
                ShapeDef::new("person", "person"),
            ],
            colors: ["red", "green", "blue"].map(String::from).to_vec(),
            unknown: vec!["triangle".to_owned()],
            train_scenes: 400,
            val_scenes: 160,
            unknown_scene_rate: 0.16,
            max_objects: 4,
            noise: 0.02,
            seed: 0,
        }
    }
}

impl ToySpec {
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Channels per cell: bias, objectness, shapes, colours.
    pub fn channels(&self) -> usize {
        2 + self.shapes.len() + self.colors.len()
    }

    pub fn shape_index(&self, name: &str) -> Option<usize> {
        self.shapes.iter().position(|s| s.name == name)
    }

    pub fn is_unknown(&self, shape: usize) -> bool {
        self.unknown.contains(&self.shapes[shape].name)
    }

    pub fn known_shapes(&self) -> Vec<usize> {
        (0..self.shapes.len())
            .filter(|&s| !self.is_unknown(s))
            .collect()
    }

    pub fn unknown_shapes(&self) -> Vec<usize> {
        (0..self.shapes.len())
            .filter(|&s| self.is_unknown(s))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ToyError::InvalidSpec(m));
        if self.shapes.len() < 2 || self.colors.len() < 2 {
            return bad("need at least two shapes and two colours".into());
        }
        if self.unknown.is_empty() {
            return bad("need at least one unknown shape".into());
        }
        if let Some(u) = self.unknown.iter().find(|u| self.shape_index(u).is_none()) {
            return bad(format!("unknown shape {u:?} is not among the shapes"));
        }
        if self.known_shapes().is_empty() {
            return bad("every shape is unknown".into());
        }
        let mut names: Vec<&str> = self
            .shapes
            .iter()
            .map(|s| s.name.as_str())
            .chain(self.colors.iter().map(String::as_str))
            .collect();
        let total = names.len();
        names.sort_unstable();
        names.dedup();
        if names.len() != total {
            return bad("shape and colour names must be distinct".into());
        }
        let single_words = self
            .shapes
            .iter()
            .map(|s| &s.name)
            .chain(&self.colors)
            .all(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_lowercase()));
        if !single_words {
            return bad("shape and colour names must be single lowercase words".into());
        }
        if self.cells() == 0 || self.max_objects == 0 || self.max_objects > self.cells() {
            return bad(format!(
                "max_objects={} must be within 1..={} cells",
                self.max_objects,
                self.cells()
            ));
        }
        if self.train_scenes == 0 || self.val_scenes == 0 {
            return bad("both splits need scenes".into());
        }
        if !(0.0..1.0).contains(&self.unknown_scene_rate) {
            return bad(format!(
                "unknown_scene_rate {} outside [0, 1)",
                self.unknown_scene_rate
            ));
        }
        if !(self.noise >= 0.0 && self.noise < 0.25) {
            return bad(format!("noise {} outside [0, 0.25)", self.noise));
        }
        Ok(())
    }
}
