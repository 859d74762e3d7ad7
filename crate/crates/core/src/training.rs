//! Two-stage training, the loss, and VQA-style evaluation.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use jex_owsplit::{AnswerDictionary, AnswerType, IqaTriplet};
use jex_tensor::{Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::exemplar::{build_store, ExemplarStore};
use crate::features::{feature_path, load_features, VisualFeatures};
use crate::model::{forward_model, predict, ExemplarLookup, ModelDims, ModelParams, Variant};
use crate::vocab::{tokenize_truncated, Vocabulary};

/// Hyper-parameters for both stages. `Default` gives the full-size
/// configuration; [`TrainConfig::toy`] a desk-scale one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epochs per stage.
    pub epochs: usize,
    pub seed: u64,
    pub sample_rate: f64,
    pub rho: usize,
    pub k: usize,
    pub glimpses: usize,
    pub t_q: usize,
    pub t_v: usize,
    pub t_e: usize,
    /// Answer dictionary size `|D|`.
    pub answers: usize,
    pub n_q: usize,
    pub embed_dim: usize,
    pub max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            sample_rate: 0.1,
            rho: 140,
            k: 1,
            glimpses: 2,
            t_q: 310,
            t_v: 310,
            t_e: 510,
            answers: 2000,
            n_q: 2400,
            embed_dim: 300,
            max_len: 26,
        }
    }
}

impl TrainConfig {
    pub fn toy() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 100,
            rho: 32,
            t_q: 8,
            t_v: 8,
            t_e: 8,
            n_q: 64,
            embed_dim: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::InvalidConfig(m.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        let sizes = [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("rho", self.rho),
            ("glimpses", self.glimpses),
            ("t_q", self.t_q),
            ("t_v", self.t_v),
            ("t_e", self.t_e),
            ("answers", self.answers),
            ("n_q", self.n_q),
            ("embed_dim", self.embed_dim),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(CoreError::InvalidConfig(format!("{name} must be positive")));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(CoreError::InvalidSampleRate(self.sample_rate));
        }
        if self.k != 1 {
            return bad("only k = 1 nearest neighbour is supported");
        }
        if !self.t_e.is_multiple_of(self.glimpses) {
            return bad("t_e must be divisible by glimpses");
        }
        Ok(())
    }

    pub fn dims(&self, vocab: usize, cells: usize, n_v: usize, answers: usize) -> ModelDims {
        ModelDims {
            vocab,
            embed: self.embed_dim,
            n_q: self.n_q,
            n_v,
            cells,
            t_q: self.t_q,
            t_v: self.t_v,
            t_e: self.t_e,
            glimpses: self.glimpses,
            answers,
        }
    }
}

/// One tokenized triplet with its features.
#[derive(Debug, Clone)]
pub struct Example {
    pub question_id: u64,
    pub image_id: u64,
    pub tokens: Vec<usize>,
    pub features: Arc<VisualFeatures>,
    pub answers: Vec<String>,
    pub answer_type: AnswerType,
    /// Most frequent human answer.
    pub ground_truth: String,
    /// Index of `ground_truth` in the dictionary, if present.
    pub target: Option<usize>,
}

/// Tokenizes triplets and loads `<image_id>.jexf` for each image once.
pub fn build_examples(
    triplets: &[&IqaTriplet],
    features_dir: &Path,
    vocab: &Vocabulary,
    dict: &AnswerDictionary,
    max_len: usize,
) -> Result<Vec<Example>> {
    let mut cache: HashMap<u64, Arc<VisualFeatures>> = HashMap::new();
    let mut out = Vec::with_capacity(triplets.len());
    for t in triplets {
        let features = match cache.get(&t.image_id) {
            Some(f) => Arc::clone(f),
            None => {
                let path = feature_path(features_dir, t.image_id);
                if !path.is_file() {
                    return Err(CoreError::MissingFeatures {
                        image_id: t.image_id,
                        path,
                    });
                }
                let f = Arc::new(load_features(&path)?);
                cache.insert(t.image_id, Arc::clone(&f));
                f
            }
        };
        let gt = t.target_answer().to_owned();
        out.push(Example {
            question_id: t.question_id,
            image_id: t.image_id,
            tokens: tokenize_truncated(&t.question, vocab, max_len)?,
            features,
            answers: t.answers.clone(),
            answer_type: t.answer_type,
            target: dict.index_of(&gt),
            ground_truth: gt,
        });
    }
    Ok(out)
}

/// `−Σ target · log softmax(logits)`.
pub fn cross_entropy_loss(logits: &[f64], target: &[f64]) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(Tensor::vector(logits.to_vec())?);
    let loss = tape.cross_entropy(l, target)?;
    Ok(tape.value(loss).data()[0])
}

/// Per-epoch audit of every attention row produced during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionAudit {
    pub epoch: usize,
    pub rows: usize,
    /// Largest `|Σα − 1|` seen.
    pub max_sum_error: f64,
    pub min_weight: f64,
}

impl AttentionAudit {
    fn new(epoch: usize) -> Self {
        Self {
            epoch,
            rows: 0,
            max_sum_error: 0.0,
            min_weight: f64::INFINITY,
        }
    }

    fn record(&mut self, row: &[f64]) {
        self.rows += 1;
        self.max_sum_error = self
            .max_sum_error
            .max((row.iter().sum::<f64>() - 1.0).abs());
        self.min_weight = row.iter().copied().fold(self.min_weight, f64::min);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epoch_loss: Vec<f64>,
    pub attention: Vec<AttentionAudit>,
}

pub struct Stage1 {
    pub params: ModelParams,
    pub store: ExemplarStore,
    pub history: TrainHistory,
}

/// Trains a grid model, then stores a sample of its training joint embeddings.
pub fn stage1_train(examples: &[Example], dims: &ModelDims, cfg: &TrainConfig) -> Result<Stage1> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(CoreError::EmptyInput("training set"));
    }
    let mut init = stream(cfg.seed, 0);
    let mut params = ModelParams::random(Variant::Grid, dims, &mut init)?;
    let history = run_epochs(&mut params, examples, None, cfg, &mut stream(cfg.seed, 1))?;
    let embeddings = joint_embeddings(&params, examples)?;
    let store = build_store(&embeddings, cfg.sample_rate, cfg.rho, cfg.seed)?;
    Ok(Stage1 {
        params,
        store,
        history,
    })
}

/// Extends a stage-1 grid model with exemplar attention and trains it with
/// the store frozen. Each triplet's own stored embedding is excluded.
pub fn stage2_train(
    stage1: &ModelParams,
    store: &dyn ExemplarLookup,
    examples: &[Example],
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(CoreError::EmptyInput("training set"));
    }
    let mut params = stage1.clone().into_jex(&mut stream(cfg.seed, 2))?;
    let history = run_epochs(
        &mut params,
        examples,
        Some(store),
        cfg,
        &mut stream(cfg.seed, 3),
    )?;
    Ok((params, history))
}

/// Any variant trained from scratch (used for the pooled-feature baselines).
pub fn train_variant(
    variant: Variant,
    examples: &[Example],
    dims: &ModelDims,
    store: Option<&dyn ExemplarLookup>,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(CoreError::EmptyInput("training set"));
    }
    let mut params = ModelParams::random(variant, dims, &mut stream(cfg.seed, 0))?;
    let history = run_epochs(&mut params, examples, store, cfg, &mut stream(cfg.seed, 1))?;
    Ok((params, history))
}

/// `(question_id, e)` for each example under `params`' first fusion.
pub fn joint_embeddings(params: &ModelParams, examples: &[Example]) -> Result<Vec<(u64, Tensor)>> {
    examples
        .iter()
        .map(|ex| {
            Ok((
                ex.question_id,
                params.joint_embedding(&ex.features, &ex.tokens)?,
            ))
        })
        .collect()
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn run_epochs(
    params: &mut ModelParams,
    examples: &[Example],
    store: Option<&dyn ExemplarLookup>,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainHistory> {
    let usable: Vec<&Example> = examples.iter().filter(|e| e.target.is_some()).collect();
    if usable.is_empty() {
        return Err(CoreError::EmptyInput(
            "training examples with a known answer",
        ));
    }
    let answers = params.answers();
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..usable.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut audit = AttentionAudit::new(epoch + 1);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let vars = params.bind(&mut tape, true);
            let mut losses: Vec<Var> = Vec::with_capacity(batch.len());
            for &i in batch {
                let ex = usable[i];
                let f = forward_model(
                    &mut tape,
                    params.variant,
                    &vars,
                    &ex.features,
                    &ex.tokens,
                    store,
                    Some(ex.question_id),
                )?;
                for &a in f.alpha_iq.iter().chain(&f.alpha_e) {
                    audit.record(tape.value(a).data());
                }
                let mut target = vec![0.0; answers];
                target[ex.target.expect("filtered")] = 1.0;
                losses.push(tape.cross_entropy(f.logits, &target)?);
            }
            let mut sum = losses[0];
            for &l in &losses[1..] {
                sum = tape.add(sum, l)?;
            }
            let mean = tape.scale(sum, 1.0 / batch.len() as f64)?;
            let loss = tape.value(mean).data()[0];
            if !loss.is_finite() {
                return Err(CoreError::NumericFailure(format!(
                    "loss became {loss} in epoch {}",
                    epoch + 1
                )));
            }
            total += loss * batch.len() as f64;
            tape.backward(mean)?;
            let grads: HashMap<&str, &[f64]> = vars
                .all
                .iter()
                .filter_map(|(n, v)| tape.grad(*v).map(|g| (*n, g)))
                .collect();
            for (name, t) in params.named_mut() {
                if let Some(g) = grads.get(name) {
                    for (w, d) in t.data_mut().iter_mut().zip(g.iter()) {
                        *w -= cfg.learning_rate * d;
                    }
                }
            }
        }
        if !params.is_finite() {
            return Err(CoreError::NumericFailure(format!(
                "parameters became non-finite in epoch {}",
                epoch + 1
            )));
        }
        history.epoch_loss.push(total / usable.len() as f64);
        history.attention.push(audit);
    }
    Ok(history)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// 1 when the prediction equals the most frequent human answer.
    #[default]
    Exact,
    /// `min(#matching human answers / 3, 1)`.
    Consensus,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub yesno: usize,
    pub number: usize,
    pub other: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub variant: Variant,
    pub mode: ScoreMode,
    pub all: f64,
    pub yesno: f64,
    pub number: f64,
    pub other: f64,
    pub n: usize,
    pub counts: TypeCounts,
}

impl EvalReport {
    /// Count-weighted mean of the per-type accuracies.
    pub fn weighted_mean(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let c = self.counts;
        (self.yesno * c.yesno as f64 + self.number * c.number as f64 + self.other * c.other as f64)
            / self.n as f64
    }
}

/// Score of one prediction in thirds (0..=3).
pub fn score_thirds(predicted: &str, ex: &Example, mode: ScoreMode) -> u64 {
    match mode {
        ScoreMode::Exact => 3 * u64::from(predicted == ex.ground_truth),
        ScoreMode::Consensus => ex.answers.iter().filter(|a| *a == predicted).count().min(3) as u64,
    }
}

pub fn evaluate(
    params: &ModelParams,
    store: Option<&dyn ExemplarLookup>,
    examples: &[Example],
    dict: &AnswerDictionary,
    mode: ScoreMode,
    split: &str,
) -> Result<EvalReport> {
    if params.variant == Variant::Jex && store.is_none() {
        return Err(CoreError::MissingStore);
    }
    let mut thirds = [0u64; 3];
    let mut counts = [0usize; 3];
    for ex in examples {
        let p = params.predict_logits(&ex.features, &ex.tokens, store, None)?;
        let answer = predict(&p.logits, dict)?;
        let slot = match ex.answer_type {
            AnswerType::YesNo => 0,
            AnswerType::Number => 1,
            AnswerType::Other => 2,
        };
        thirds[slot] += score_thirds(answer, ex, mode);
        counts[slot] += 1;
    }
    let acc = |s: u64, n: usize| {
        if n == 0 {
            0.0
        } else {
            s as f64 / (3 * n) as f64
        }
    };
    let n: usize = counts.iter().sum();
    Ok(EvalReport {
        split: split.to_owned(),
        variant: params.variant,
        mode,
        all: acc(thirds.iter().sum(), n),
        yesno: acc(thirds[0], counts[0]),
        number: acc(thirds[1], counts[1]),
        other: acc(thirds[2], counts[2]),
        n,
        counts: TypeCounts {
            yesno: counts[0],
            number: counts[1],
            other: counts[2],
        },
    })
}

/// Exact-match accuracy over examples (training-set monitoring).
pub fn accuracy(
    params: &ModelParams,
    store: Option<&dyn ExemplarLookup>,
    examples: &[Example],
    dict: &AnswerDictionary,
) -> Result<f64> {
    Ok(evaluate(params, store, examples, dict, ScoreMode::Exact, "")?.all)
}
