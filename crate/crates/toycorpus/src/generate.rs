use std::collections::{BTreeMap, BTreeSet};

use jex_owsplit::split::{CategoryStats, Provenance, SplitStats};
use jex_owsplit::text::naive_plural;
use jex_owsplit::{AnswerType, SourceSplit, SplitManifest, SplitName};
use jex_tensor::Tensor;
use rand::seq::index::sample;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::spec::ToySpec;
use crate::{Result, ToyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Object {
    pub cell: usize,
    pub shape: usize,
    pub color: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_id: u64,
    pub split: SourceSplit,
    /// Sorted by cell.
    pub objects: Vec<Object>,
    /// Whether an unknown shape was planted.
    pub unknown: bool,
    /// Noisy encoding as written to disk.
    pub features: Tensor,
}

impl Scene {
    /// Noise-free `cells × channels` encoding.
    pub fn encode(&self, spec: &ToySpec) -> Tensor {
        let c = spec.channels();
        let mut data = vec![0.0; spec.cells() * c];
        for cell in 0..spec.cells() {
            data[cell * c] = 1.0;
        }
        for o in &self.objects {
            let row = &mut data[o.cell * c..(o.cell + 1) * c];
            row[1] = 1.0;
            row[2 + o.shape] = 1.0;
            row[2 + spec.shapes.len() + o.color] = 1.0;
        }
        Tensor::matrix(spec.cells(), c, data).expect("consistent shape")
    }

    fn count(&self, shape: usize) -> usize {
        self.objects.iter().filter(|o| o.shape == shape).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub question_id: u64,
    pub image_id: u64,
    pub text: String,
    pub answer: String,
    pub answer_type: AnswerType,
    /// Shape the question names.
    pub about: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyCorpus {
    pub spec: ToySpec,
    pub scenes: Vec<Scene>,
    pub questions: Vec<Question>,
    /// Every answer any question can have.
    pub answers: Vec<String>,
    /// The split implied by the planted unknowns.
    pub manifest: SplitManifest,
}

impl ToyCorpus {
    pub fn scene(&self, image_id: u64) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.image_id == image_id)
    }
}

pub fn generate(spec: &ToySpec) -> Result<ToyCorpus> {
    spec.validate()?;
    let noise = Normal::new(0.0, spec.noise).map_err(|e| ToyError::InvalidSpec(e.to_string()))?;
    let mut scenes = Vec::with_capacity(spec.train_scenes + spec.val_scenes);
    let mut questions = Vec::new();
    let splits = [
        (SourceSplit::Train, spec.train_scenes),
        (SourceSplit::Val, spec.val_scenes),
    ];
    let mut image_id = 0u64;
    for (split, n) in splits {
        for _ in 0..n {
            image_id += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(image_id);
            let mut scene = layout(spec, image_id, split, &mut rng);
            let mut f = scene.encode(spec);
            for x in f.data_mut() {
                *x = f64::from((*x + noise.sample(&mut rng)) as f32);
            }
            scene.features = f;
            questions.extend(ask(spec, &scene, &mut rng));
            scenes.push(scene);
        }
    }
    let manifest = truth_manifest(spec, &scenes, &questions)?;
    Ok(ToyCorpus {
        spec: spec.clone(),
        scenes,
        questions,
        answers: answer_list(spec),
        manifest,
    })
}

fn layout(spec: &ToySpec, image_id: u64, split: SourceSplit, rng: &mut ChaCha8Rng) -> Scene {
    let unknown = rng.random_bool(spec.unknown_scene_rate);
    let k = rng.random_range(1..=spec.max_objects);
    let mut cells = sample(rng, spec.cells(), k).into_vec();
    let known = spec.known_shapes();
    let all: Vec<usize> = (0..spec.shapes.len()).collect();
    let mut objects: Vec<Object> = Vec::with_capacity(k);
    for (i, cell) in cells.drain(..).enumerate() {
        let shape = if unknown && i == 0 {
            *spec.unknown_shapes().choose(rng).expect("validated")
        } else if unknown {
            *all.choose(rng).expect("non-empty")
        } else {
            *known.choose(rng).expect("validated")
        };
        objects.push(Object {
            cell,
            shape,
            color: rng.random_range(0..spec.colors.len()),
        });
    }
    objects.sort_by_key(|o| o.cell);
    Scene {
        image_id,
        split,
        objects,
        unknown,
        features: Tensor::scalar(0.0),
    }
}

fn ask(spec: &ToySpec, scene: &Scene, rng: &mut ChaCha8Rng) -> Vec<Question> {
    let pool: Vec<usize> = if scene.unknown {
        (0..spec.shapes.len()).collect()
    } else {
        spec.known_shapes()
    };
    let mut out = Vec::new();
    let mut push = |text: String, answer: String, answer_type, about| {
        out.push(Question {
            question_id: scene.image_id * 10 + out.len() as u64,
            image_id: scene.image_id,
            text,
            answer,
            answer_type,
            about,
        });
    };

    let s = *pool.choose(rng).expect("non-empty");
    push(
        format!("how many {} are there?", naive_plural(&spec.shapes[s].name)),
        scene.count(s).to_string(),
        AnswerType::Number,
        s,
    );

    let unique: Vec<&Object> = scene
        .objects
        .iter()
        .filter(|o| pool.contains(&o.shape) && scene.count(o.shape) == 1)
        .collect();
    if let Some(o) = unique.choose(rng) {
        push(
            format!("what color is the {}?", spec.shapes[o.shape].name),
            spec.colors[o.color].clone(),
            AnswerType::Other,
            o.shape,
        );
    }

    for _ in 0..2 {
        let (shape, color) = if rng.random_bool(0.5) {
            let present: Vec<&Object> = scene
                .objects
                .iter()
                .filter(|o| pool.contains(&o.shape))
                .collect();
            let o = present
                .choose(rng)
                .expect("a scene always has a pool shape");
            (o.shape, o.color)
        } else {
            (
                *pool.choose(rng).expect("non-empty"),
                rng.random_range(0..spec.colors.len()),
            )
        };
        let yes = scene
            .objects
            .iter()
            .any(|o| o.shape == shape && o.color == color);
        push(
            format!(
                "is there a {} {}?",
                spec.colors[color], spec.shapes[shape].name
            ),
            if yes { "yes" } else { "no" }.to_owned(),
            AnswerType::YesNo,
            shape,
        );
    }
    out
}

fn answer_list(spec: &ToySpec) -> Vec<String> {
    let mut out: Vec<String> = ["yes", "no"].map(String::from).to_vec();
    out.extend((0..=spec.max_objects).map(|n| n.to_string()));
    out.extend(spec.colors.iter().cloned());
    out
}

/// The manifest the split tool should reproduce, derived from planting
/// decisions rather than from the written files.
fn truth_manifest(
    spec: &ToySpec,
    scenes: &[Scene],
    questions: &[Question],
) -> Result<SplitManifest> {
    let mut images: BTreeMap<usize, u64> = BTreeMap::new();
    let mut instances: BTreeMap<usize, u64> = BTreeMap::new();
    for scene in scenes {
        let present: BTreeSet<usize> = scene.objects.iter().map(|o| o.shape).collect();
        for s in present {
            *images.entry(s).or_default() += 1;
        }
        for o in &scene.objects {
            *instances.entry(o.shape).or_default() += 1;
        }
    }
    let categories: Vec<CategoryStats> = spec
        .shapes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let n_images = images.get(&i).copied().unwrap_or(0);
            let n_instances = instances.get(&i).copied().unwrap_or(0);
            CategoryStats {
                id: i as u64 + 1,
                name: s.name.clone(),
                supercategory: s.supercategory.clone(),
                n_images,
                n_instances,
                occurrence: n_images * n_instances,
            }
        })
        .collect();

    // Each planted unknown must be the unique rarest shape of its group, and
    // every other non-person group needs exactly one planted unknown.
    let mut by_group: BTreeMap<&str, Vec<&CategoryStats>> = BTreeMap::new();
    for c in &categories {
        by_group
            .entry(c.supercategory.as_str())
            .or_default()
            .push(c);
    }
    let mut unknown_categories = Vec::new();
    for (group, members) in &by_group {
        if *group == jex_owsplit::split::EXEMPT_SUPERCATEGORY {
            continue;
        }
        let planted: Vec<&&CategoryStats> = members
            .iter()
            .filter(|c| spec.unknown.contains(&c.name))
            .collect();
        let [u] = planted.as_slice() else {
            return Err(ToyError::InvalidSpec(format!(
                "supercategory {group:?} needs exactly one unknown shape"
            )));
        };
        let rarest = members
            .iter()
            .all(|c| c.name == u.name || c.occurrence > u.occurrence);
        if !rarest {
            return Err(ToyError::InvalidSpec(format!(
                "planted unknown {:?} is not the rarest {group} (try more scenes or a lower unknown rate)",
                u.name
            )));
        }
        unknown_categories.push(u.name.clone());
    }
    if let Some(u) = spec
        .unknown
        .iter()
        .find(|u| !unknown_categories.contains(u))
    {
        return Err(ToyError::InvalidSpec(format!(
            "unknown shape {u:?} cannot be selected"
        )));
    }

    let unknown_scene: BTreeMap<u64, (SourceSplit, bool)> = scenes
        .iter()
        .map(|s| (s.image_id, (s.split, s.unknown)))
        .collect();
    let mut manifest = SplitManifest {
        unknown_categories,
        ..Default::default()
    };
    let mut tallies = [(0usize, 0usize); 2];
    for q in questions {
        let (split, visual) = unknown_scene[&q.image_id];
        let unknown = visual || spec.is_unknown(q.about);
        let slot = usize::from(split == SourceSplit::Val);
        tallies[slot].0 += 1;
        tallies[slot].1 += usize::from(unknown);
        let ids = match SplitName::of(split, unknown) {
            SplitName::Trainset => &mut manifest.trainset,
            SplitName::Testset => &mut manifest.testset,
            SplitName::ValsetKnown => &mut manifest.valset_known,
            SplitName::ValsetUnknown => &mut manifest.valset_unknown,
        };
        ids.push(q.question_id);
    }
    let frac = |(n, u): (usize, usize)| if n == 0 { 0.0 } else { u as f64 / n as f64 };
    let mut counts = BTreeMap::new();
    for s in SplitName::ALL {
        counts.insert(s.as_str().to_owned(), manifest.ids(s).len());
    }
    manifest.stats = SplitStats {
        categories,
        counts,
        unknown_fraction_train: frac(tallies[0]),
        unknown_fraction_val: frac(tallies[1]),
    };
    manifest.provenance =
        Provenance::new("jex-toycorpus", &crate::write::INPUT_FILES, Some(spec.seed));
    Ok(manifest)
}
