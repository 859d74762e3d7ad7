//! The four model variants, parameter bookkeeping and the forward pass.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use jex_owsplit::AnswerDictionary;
use jex_tensor::{Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{attend, compute_attention};
use crate::error::{CoreError, Result};
use crate::exemplar::{ExemplarStore, XiSource};
use crate::features::VisualFeatures;
use crate::fusion::{tucker_fuse, TuckerParams, TuckerVars};
use crate::gru::{gru_encode, GruParams, GruVars};
use crate::init::uniform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Fuses `q` with `v₂ ⊕ q`.
    Concat,
    /// Fuses `q` with `v₂`.
    Dual,
    /// Fuses `q` with every grid cell.
    Grid,
    /// Grid plus exemplar attention.
    Jex,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Self::Concat, Self::Dual, Self::Grid, Self::Jex];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Concat => "concat",
            Self::Dual => "dual",
            Self::Grid => "grid",
            Self::Jex => "jex",
        }
    }

    pub(crate) fn code(self) -> f64 {
        Self::ALL.iter().position(|&v| v == self).expect("listed") as f64
    }

    pub(crate) fn from_code(code: f64) -> Option<Self> {
        Self::ALL.iter().copied().find(|v| v.code() == code)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| CoreError::InvalidConfig(format!("unknown variant {s:?}")))
    }
}

/// Every size a model needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    pub n_q: usize,
    pub n_v: usize,
    pub cells: usize,
    pub t_q: usize,
    pub t_v: usize,
    pub t_e: usize,
    pub glimpses: usize,
    pub answers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub variant: Variant,
    pub gru: GruParams,
    /// First fusion, producing the joint embedding `e`.
    pub fusion: TuckerParams,
    pub attn_iq: Tensor,
    /// Exemplar attention projection (jex only).
    pub attn_e: Option<Tensor>,
    /// Second fusion over the attended feature; its output factor is the
    /// answer classifier.
    pub fusion_out: TuckerParams,
    /// Extra `τ_v` rows for the exemplar-attended half of `ṽ` (jex only).
    pub tau_v_exemplar: Option<Tensor>,
}

/// A model's tensors registered on a tape.
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub gru: GruVars,
    pub fusion: TuckerVars,
    pub attn_iq: Var,
    pub attn_e: Option<Var>,
    pub fusion_out: TuckerVars,
    pub classifier: Var,
    pub tau_v_exemplar: Option<Var>,
    /// Every tensor by name, in [`ModelParams::named`] order.
    pub all: Vec<(&'static str, Var)>,
}

impl ModelVars {
    /// Assembles tape leaves given by tensor name (see [`ModelParams::named`]).
    pub fn from_named(all: Vec<(&'static str, Var)>) -> Result<Self> {
        let get = |name: &str| all.iter().find(|(n, _)| *n == name).map(|(_, v)| *v);
        let must = |name: &str| {
            get(name).ok_or_else(|| CoreError::Corrupted(format!("missing tensor {name:?}")))
        };
        Ok(Self {
            gru: GruVars {
                embedding: must("gru.embedding")?,
                w_z: must("gru.w_z")?,
                u_z: must("gru.u_z")?,
                b_z: must("gru.b_z")?,
                w_r: must("gru.w_r")?,
                u_r: must("gru.u_r")?,
                b_r: must("gru.b_r")?,
                w_h: must("gru.w_h")?,
                u_h: must("gru.u_h")?,
                b_h: must("gru.b_h")?,
            },
            fusion: TuckerVars {
                core: must("fusion1.core")?,
                tau_q: must("fusion1.tau_q")?,
                tau_v: must("fusion1.tau_v")?,
            },
            attn_iq: must("attn_iq.weights")?,
            attn_e: get("attn_e.weights"),
            fusion_out: TuckerVars {
                core: must("fusion2.core")?,
                tau_q: must("fusion2.tau_q")?,
                tau_v: must("fusion2.tau_v")?,
            },
            classifier: must("classifier")?,
            tau_v_exemplar: get("fusion2.tau_v_exemplar"),
            all,
        })
    }
}

/// Nearest stored joint embedding for a query embedding.
pub trait ExemplarLookup {
    /// Returns the stored embedding (shaped like `e`) and its triplet id.
    fn lookup(&self, e: &Tensor, exclude: Option<u64>) -> Result<(Tensor, u64)>;
}

impl<X: XiSource> ExemplarLookup for ExemplarStore<X> {
    fn lookup(&self, e: &Tensor, exclude: Option<u64>) -> Result<(Tensor, u64)> {
        let (row, id) = self.nearest(e.data(), exclude)?;
        Ok((Tensor::new(e.shape().to_vec(), row)?, id))
    }
}

pub struct Forward {
    pub logits: Var,
    /// Joint embedding `e` from the first fusion.
    pub joint: Var,
    pub alpha_iq: Vec<Var>,
    pub alpha_e: Vec<Var>,
    pub exemplar_id: Option<u64>,
}

/// Untracked forward pass results.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub joint: Tensor,
    pub alpha_iq: Vec<Vec<f64>>,
    pub alpha_e: Vec<Vec<f64>>,
    pub exemplar_id: Option<u64>,
}

impl ModelParams {
    pub fn random(variant: Variant, dims: &ModelDims, rng: &mut impl Rng) -> Result<Self> {
        let d = dims;
        if d.glimpses == 0 || !d.t_e.is_multiple_of(d.glimpses) {
            return Err(CoreError::InvalidConfig(format!(
                "t_e={} must be divisible by glimpses={}",
                d.t_e, d.glimpses
            )));
        }
        if d.answers == 0 {
            return Err(CoreError::EmptyDictionary);
        }
        let c = d.t_e / d.glimpses;
        let n_v1 = if variant == Variant::Concat {
            d.n_v + d.n_q
        } else {
            d.n_v
        };
        let ranks = (d.t_q, d.t_v, d.t_e);
        let gru = GruParams::random(d.vocab, d.embed, d.n_q, rng)?;
        let fusion = TuckerParams::random((d.n_q, n_v1), ranks, d.glimpses, rng)?;
        let attn_iq = match variant {
            Variant::Grid | Variant::Jex => uniform(&[d.glimpses, c], c, rng)?,
            Variant::Concat | Variant::Dual => uniform(&[d.glimpses, c, d.cells], c, rng)?,
        };
        let v_len = d.glimpses * d.n_v;
        let fusion_out = TuckerParams::random((d.n_q, v_len), ranks, d.glimpses, rng)?
            .with_output(d.answers, rng)?;
        let mut p = Self {
            variant: Variant::Grid,
            gru,
            fusion,
            attn_iq,
            attn_e: None,
            fusion_out,
            tau_v_exemplar: None,
        };
        if variant == Variant::Jex {
            p = p.into_jex(rng)?;
            let shape = p.fusion_out.tau_v.shape().to_vec();
            p.tau_v_exemplar = Some(uniform(&shape, shape[0], rng)?);
        } else {
            p.variant = variant;
        }
        p.validate()?;
        Ok(p)
    }

    /// Extends a grid model with exemplar attention. The new `τ_v` rows start
    /// at zero, so the extended model initially reproduces the grid model.
    pub fn into_jex(mut self, rng: &mut impl Rng) -> Result<Self> {
        if self.variant != Variant::Grid {
            return Err(CoreError::InvalidConfig(format!(
                "only a grid model can be extended, got {}",
                self.variant
            )));
        }
        self.attn_e = Some(uniform(self.attn_iq.shape(), self.attn_iq.shape()[1], rng)?);
        self.tau_v_exemplar = Some(Tensor::zeros(self.fusion_out.tau_v.shape())?);
        self.variant = Variant::Jex;
        self.validate()?;
        Ok(self)
    }

    pub fn glimpses(&self) -> usize {
        self.fusion.glimpses
    }

    pub fn classifier(&self) -> &Tensor {
        self.fusion_out
            .tau_e
            .as_ref()
            .expect("validated model has a classifier")
    }

    pub fn answers(&self) -> usize {
        self.classifier().shape()[0]
    }

    pub fn dims(&self) -> ModelDims {
        let n_v1 = self.fusion.n_v();
        let n_q = self.gru.hidden();
        ModelDims {
            vocab: self.gru.vocab_size(),
            embed: self.gru.embed_dim(),
            n_q,
            n_v: if self.variant == Variant::Concat {
                n_v1 - n_q
            } else {
                n_v1
            },
            cells: match self.attn_iq.rank() {
                3 => self.attn_iq.shape()[2],
                _ => 0,
            },
            t_q: self.fusion.t_q(),
            t_v: self.fusion.t_v(),
            t_e: self.fusion.t_e(),
            glimpses: self.glimpses(),
            answers: self.answers(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::InvalidConfig(m));
        self.fusion.validate()?;
        self.fusion_out.validate()?;
        let Some(cls) = &self.fusion_out.tau_e else {
            return bad("second fusion lacks a classifier".into());
        };
        if cls.shape()[0] == 0 {
            return Err(CoreError::EmptyDictionary);
        }
        let n_q = self.gru.hidden();
        if self.fusion.n_q() != n_q || self.fusion_out.n_q() != n_q {
            return bad(format!("fusions disagree with encoder size {n_q}"));
        }
        let g = self.glimpses();
        let c = self.fusion.t_e() / g;
        let n_v = if self.variant == Variant::Concat {
            self.fusion.n_v().saturating_sub(n_q)
        } else {
            self.fusion.n_v()
        };
        if self.fusion_out.n_v() != g * n_v || self.fusion_out.glimpses != g {
            return bad(format!(
                "second fusion takes {} inputs, expected {g}·{n_v}",
                self.fusion_out.n_v()
            ));
        }
        let attn_ok = match self.variant {
            Variant::Grid | Variant::Jex => self.attn_iq.shape() == [g, c],
            Variant::Concat | Variant::Dual => {
                self.attn_iq.rank() == 3 && self.attn_iq.shape()[..2] == [g, c]
            }
        };
        if !attn_ok {
            return bad(format!(
                "attention weights {:?} do not fit",
                self.attn_iq.shape()
            ));
        }
        let jex = self.variant == Variant::Jex;
        match (&self.attn_e, &self.tau_v_exemplar) {
            (Some(a), Some(t)) if jex => {
                if a.shape() != [g, c] || t.shape() != self.fusion_out.tau_v.shape() {
                    return bad("exemplar tensors have the wrong shape".into());
                }
            }
            (None, None) if !jex => {}
            _ => {
                return bad(format!(
                    "{} model has mismatched exemplar tensors",
                    self.variant
                ))
            }
        }
        Ok(())
    }

    /// Every tensor by name, in a fixed order.
    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out: Vec<(&'static str, &Tensor)> = self
            .gru
            .named()
            .into_iter()
            .map(|(n, t)| (gru_name(n), t))
            .collect();
        out.push(("fusion1.core", &self.fusion.core));
        out.push(("fusion1.tau_q", &self.fusion.tau_q));
        out.push(("fusion1.tau_v", &self.fusion.tau_v));
        out.push(("attn_iq.weights", &self.attn_iq));
        if let Some(a) = &self.attn_e {
            out.push(("attn_e.weights", a));
        }
        out.push(("fusion2.core", &self.fusion_out.core));
        out.push(("fusion2.tau_q", &self.fusion_out.tau_q));
        out.push(("fusion2.tau_v", &self.fusion_out.tau_v));
        if let Some(t) = &self.tau_v_exemplar {
            out.push(("fusion2.tau_v_exemplar", t));
        }
        out.push(("classifier", self.classifier()));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut out: Vec<(&'static str, &mut Tensor)> = self
            .gru
            .named_mut()
            .into_iter()
            .map(|(n, t)| (gru_name(n), t))
            .collect();
        out.push(("fusion1.core", &mut self.fusion.core));
        out.push(("fusion1.tau_q", &mut self.fusion.tau_q));
        out.push(("fusion1.tau_v", &mut self.fusion.tau_v));
        out.push(("attn_iq.weights", &mut self.attn_iq));
        if let Some(a) = &mut self.attn_e {
            out.push(("attn_e.weights", a));
        }
        out.push(("fusion2.core", &mut self.fusion_out.core));
        out.push(("fusion2.tau_q", &mut self.fusion_out.tau_q));
        out.push(("fusion2.tau_v", &mut self.fusion_out.tau_v));
        if let Some(t) = &mut self.tau_v_exemplar {
            out.push(("fusion2.tau_v_exemplar", t));
        }
        if let Some(c) = &mut self.fusion_out.tau_e {
            out.push(("classifier", c));
        }
        out
    }

    /// Rebuilds a model from named tensors.
    pub fn from_named(
        variant: Variant,
        glimpses: usize,
        mut tensors: HashMap<String, Tensor>,
    ) -> Result<Self> {
        let mut take = |name: &str| {
            tensors
                .remove(name)
                .ok_or_else(|| CoreError::Corrupted(format!("missing tensor {name:?}")))
        };
        let gru = GruParams {
            embedding: take("gru.embedding")?,
            w_z: take("gru.w_z")?,
            u_z: take("gru.u_z")?,
            b_z: take("gru.b_z")?,
            w_r: take("gru.w_r")?,
            u_r: take("gru.u_r")?,
            b_r: take("gru.b_r")?,
            w_h: take("gru.w_h")?,
            u_h: take("gru.u_h")?,
            b_h: take("gru.b_h")?,
        };
        let jex = variant == Variant::Jex;
        let fusion = TuckerParams {
            core: take("fusion1.core")?,
            tau_q: take("fusion1.tau_q")?,
            tau_v: take("fusion1.tau_v")?,
            tau_e: None,
            glimpses,
        };
        let attn_iq = take("attn_iq.weights")?;
        let attn_e = if jex {
            Some(take("attn_e.weights")?)
        } else {
            None
        };
        let core = take("fusion2.core")?;
        let tau_q = take("fusion2.tau_q")?;
        let tau_v = take("fusion2.tau_v")?;
        let tau_v_exemplar = if jex {
            Some(take("fusion2.tau_v_exemplar")?)
        } else {
            None
        };
        let fusion_out = TuckerParams {
            core,
            tau_q,
            tau_v,
            tau_e: Some(take("classifier")?),
            glimpses,
        };
        if let Some(extra) = tensors.keys().next() {
            return Err(CoreError::Corrupted(format!("unexpected tensor {extra:?}")));
        }
        let p = Self {
            variant,
            gru,
            fusion,
            attn_iq,
            attn_e,
            fusion_out,
            tau_v_exemplar,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.is_finite())
    }

    /// Registers every tensor on `tape`, as parameters when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> ModelVars {
        let all: Vec<(&'static str, Var)> = self
            .named()
            .into_iter()
            .map(|(n, t)| {
                let v = if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (n, v)
            })
            .collect();
        ModelVars::from_named(all).expect("named tensors are complete")
    }

    /// Untracked forward pass.
    pub fn predict_logits(
        &self,
        features: &VisualFeatures,
        tokens: &[usize],
        store: Option<&dyn ExemplarLookup>,
        exclude: Option<u64>,
    ) -> Result<Prediction> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let f = forward_model(
            &mut tape,
            self.variant,
            &vars,
            features,
            tokens,
            store,
            exclude,
        )?;
        let maps = |m: &[Var]| m.iter().map(|&a| tape.value(a).data().to_vec()).collect();
        let logits = tape.value(f.logits).data().to_vec();
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::NumericFailure("non-finite logits".into()));
        }
        Ok(Prediction {
            logits,
            joint: tape.value(f.joint).clone(),
            alpha_iq: maps(&f.alpha_iq),
            alpha_e: maps(&f.alpha_e),
            exemplar_id: f.exemplar_id,
        })
    }

    /// Joint embedding `e` of the first fusion.
    pub fn joint_embedding(&self, features: &VisualFeatures, tokens: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let q = gru_encode(&mut tape, &vars.gru, tokens)?;
        let e = first_fusion(&mut tape, self.variant, &vars, features, q)?;
        Ok(tape.value(e).clone())
    }
}

fn gru_name(short: &str) -> &'static str {
    match short {
        "embedding" => "gru.embedding",
        "w_z" => "gru.w_z",
        "u_z" => "gru.u_z",
        "b_z" => "gru.b_z",
        "w_r" => "gru.w_r",
        "u_r" => "gru.u_r",
        "b_r" => "gru.b_r",
        "w_h" => "gru.w_h",
        "u_h" => "gru.u_h",
        "b_h" => "gru.b_h",
        other => unreachable!("unknown GRU tensor {other}"),
    }
}

fn first_fusion(
    tape: &mut Tape,
    variant: Variant,
    vars: &ModelVars,
    features: &VisualFeatures,
    q: Var,
) -> Result<Var> {
    let v = match variant {
        Variant::Grid | Variant::Jex => tape.constant(features.grid().clone()),
        Variant::Dual => tape.constant(features.pooled().clone()),
        Variant::Concat => {
            let v2 = tape.constant(features.pooled().clone());
            tape.concat(&[v2, q])?
        }
    };
    tucker_fuse(tape, q, v, &vars.fusion)
}

/// Answer logits for one image–question pair.
///
/// The jex variant looks up the exemplar nearest to `e` (skipping `exclude`)
/// and treats it as a constant: no gradient reaches the store.
pub fn forward_model(
    tape: &mut Tape,
    variant: Variant,
    vars: &ModelVars,
    features: &VisualFeatures,
    tokens: &[usize],
    store: Option<&dyn ExemplarLookup>,
    exclude: Option<u64>,
) -> Result<Forward> {
    let glimpses = tape.value(vars.attn_iq).shape()[0];
    let cells = features.cells();
    let expected_cells = tape.value(vars.attn_iq).shape().get(2).copied();
    if expected_cells.is_some_and(|g| g != cells) {
        return Err(CoreError::DimensionMismatch(format!(
            "model attends over {} cells, features have {cells}",
            expected_cells.unwrap_or_default()
        )));
    }
    let q = gru_encode(tape, &vars.gru, tokens)?;
    let e = first_fusion(tape, variant, vars, features, q)?;
    let alpha_iq = compute_attention(tape, e, vars.attn_iq, glimpses)?;
    let v1 = tape.constant(features.grid().clone());
    let v_iq = attend(tape, v1, &alpha_iq)?;

    let mut out_vars = vars.fusion_out;
    let mut alpha_e = Vec::new();
    let mut exemplar_id = None;
    let v = if variant == Variant::Jex {
        let store = store.ok_or(CoreError::MissingStore)?;
        let (attn_e, extra) = vars.attn_e.zip(vars.tau_v_exemplar).ok_or_else(|| {
            CoreError::InvalidConfig("jex forward pass without exemplar tensors".into())
        })?;
        let (e_e, id) = store.lookup(tape.value(e), exclude)?;
        exemplar_id = Some(id);
        let e_e = tape.constant(e_e);
        alpha_e = compute_attention(tape, e_e, attn_e, glimpses)?;
        let v_e = attend(tape, v1, &alpha_e)?;
        out_vars.tau_v = tape.concat(&[vars.fusion_out.tau_v, extra])?;
        tape.concat(&[v_iq, v_e])?
    } else {
        v_iq
    };
    let z = tucker_fuse(tape, q, v, &out_vars)?;
    let logits = tape.matmul(vars.classifier, z)?;
    Ok(Forward {
        logits,
        joint: e,
        alpha_iq,
        alpha_e,
        exemplar_id,
    })
}

/// Answer at the largest logit; ties go to the lowest index.
pub fn predict<'a>(logits: &[f64], dict: &'a AnswerDictionary) -> Result<&'a str> {
    if dict.is_empty() {
        return Err(CoreError::EmptyDictionary);
    }
    if logits.len() != dict.len() {
        return Err(CoreError::DimensionMismatch(format!(
            "{} logits for {} answers",
            logits.len(),
            dict.len()
        )));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(CoreError::NumericFailure("non-finite logits".into()));
    }
    let best = argmax(logits);
    Ok(dict.answer(best).expect("index in range"))
}

pub(crate) fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exemplar::build_store;
    use jex_tensor::gradcheck::check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_dims(glimpses: usize) -> ModelDims {
        ModelDims {
            vocab: 7,
            embed: 3,
            n_q: 5,
            n_v: 6,
            cells: 4,
            t_q: 3,
            t_v: 3,
            t_e: 3,
            glimpses,
            answers: 4,
        }
    }

    fn features(rng: &mut ChaCha8Rng, cells: usize, n_v: usize) -> VisualFeatures {
        VisualFeatures::from_grid(
            Tensor::from_fn(&[cells, n_v], |_| rng.random_range(-1.0..1.0)).unwrap(),
        )
        .unwrap()
    }

    fn self_store(
        model: &ModelParams,
        f: &VisualFeatures,
        tokens: &[usize],
    ) -> crate::exemplar::ExemplarStore {
        let e = model.joint_embedding(f, tokens).unwrap();
        build_store(&[(999, e)], 1.0, 2, 0).unwrap()
    }

    #[test]
    fn every_variant_emits_one_logit_per_answer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = features(&mut rng, 4, 6);
        for variant in Variant::ALL {
            let m = ModelParams::random(variant, &toy_dims(1), &mut rng).unwrap();
            let store = self_store(
                &ModelParams::random(Variant::Grid, &toy_dims(1), &mut rng).unwrap(),
                &f,
                &[2],
            );
            let p = m.predict_logits(&f, &[2, 3], Some(&store), None).unwrap();
            assert_eq!(p.logits.len(), 4, "{variant}");
            assert_eq!(p.alpha_e.is_empty(), variant != Variant::Jex);
            for a in p.alpha_iq.iter().chain(&p.alpha_e) {
                assert!(a.iter().all(|&x| x >= 0.0));
                assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn single_cell_attention_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dims = ModelDims {
            cells: 1,
            ..toy_dims(1)
        };
        let m = ModelParams::random(Variant::Grid, &dims, &mut rng).unwrap();
        let f = features(&mut rng, 1, 6);
        let p = m.predict_logits(&f, &[1], None, None).unwrap();
        assert_eq!(p.alpha_iq, vec![vec![1.0]]);
    }

    #[test]
    fn jex_requires_a_store() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = ModelParams::random(Variant::Jex, &toy_dims(1), &mut rng).unwrap();
        let f = features(&mut rng, 4, 6);
        assert!(matches!(
            m.predict_logits(&f, &[1], None, None),
            Err(CoreError::MissingStore)
        ));
    }

    #[test]
    fn jex_extension_starts_equal_then_diverges() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = ModelParams::random(Variant::Grid, &toy_dims(1), &mut rng).unwrap();
        let f = features(&mut rng, 4, 6);
        let tokens = [2, 5, 3];
        let store = self_store(&grid, &f, &tokens);
        let jex = grid.clone().into_jex(&mut rng).unwrap();
        let g = grid.predict_logits(&f, &tokens, None, None).unwrap();
        let j = jex
            .predict_logits(&f, &tokens, Some(&store), Some(1))
            .unwrap();
        assert_eq!(j.exemplar_id, Some(999));
        assert_eq!(g.logits, j.logits);

        let fresh = ModelParams::random(Variant::Jex, &toy_dims(1), &mut rng).unwrap();
        let mut grid_twin = fresh.clone();
        grid_twin.variant = Variant::Grid;
        grid_twin.attn_e = None;
        grid_twin.tau_v_exemplar = None;
        let store = self_store(&grid_twin, &f, &tokens);
        let j = fresh
            .predict_logits(&f, &tokens, Some(&store), None)
            .unwrap();
        let g = grid_twin.predict_logits(&f, &tokens, None, None).unwrap();
        assert_eq!(j.exemplar_id, Some(999));
        assert_ne!(j.logits, g.logits);
    }

    #[test]
    fn jex_names_are_a_superset() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = ModelParams::random(Variant::Grid, &toy_dims(1), &mut rng).unwrap();
        let jex = grid.clone().into_jex(&mut rng).unwrap();
        let g: Vec<_> = grid.named().iter().map(|(n, _)| *n).collect();
        let j: Vec<_> = jex.named().iter().map(|(n, _)| *n).collect();
        assert!(g.iter().all(|n| j.contains(n)));
        let extra: Vec<_> = j.iter().filter(|n| !g.contains(n)).copied().collect();
        assert_eq!(extra, ["attn_e.weights", "fusion2.tau_v_exemplar"]);
    }

    #[test]
    fn named_and_named_mut_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for v in Variant::ALL {
            let mut m = ModelParams::random(v, &toy_dims(3), &mut rng).unwrap();
            let a: Vec<_> = m
                .named()
                .iter()
                .map(|(n, t)| (*n, t.shape().to_vec()))
                .collect();
            let b: Vec<_> = m
                .named_mut()
                .iter()
                .map(|(n, t)| (*n, t.shape().to_vec()))
                .collect();
            assert_eq!(a, b);
            let map: HashMap<String, Tensor> = m
                .named()
                .into_iter()
                .map(|(n, t)| (n.to_owned(), t.clone()))
                .collect();
            assert_eq!(ModelParams::from_named(v, 3, map).unwrap(), m);
        }
    }

    #[test]
    fn concat_widens_first_fusion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = ModelParams::random(Variant::Concat, &toy_dims(1), &mut rng).unwrap();
        assert_eq!(m.fusion.n_v(), 11);
        assert_eq!(m.dims(), toy_dims(1));
    }

    #[test]
    fn predict_examples() {
        let dict = AnswerDictionary::new(["no", "yes", "2"].map(String::from));
        assert_eq!(predict(&[0.1, 5.0, 0.2], &dict).unwrap(), "yes");
        assert_eq!(predict(&[1.0, 1.0, 1.0], &dict).unwrap(), "no");
        assert_eq!(predict(&[100.1, 105.0, 100.2], &dict).unwrap(), "yes");
        let empty = AnswerDictionary::new(Vec::<String>::new());
        assert!(matches!(
            predict(&[], &empty),
            Err(CoreError::EmptyDictionary)
        ));
        assert!(matches!(
            predict(&[f64::NAN, 0.0, 0.0], &dict),
            Err(CoreError::NumericFailure(_))
        ));
    }

    /// Gradient check of the full model, every tensor at once.
    fn grad_check(variant: Variant, glimpses: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = toy_dims(glimpses);
        let model = ModelParams::random(variant, &dims, &mut rng).unwrap();
        let f = features(&mut rng, 4, 6);
        let tokens = [1, 4, 6];
        let mut grid_twin = model.clone();
        if variant == Variant::Jex {
            grid_twin.variant = Variant::Grid;
            grid_twin.attn_e = None;
            grid_twin.tau_v_exemplar = None;
        }
        let store = self_store(&grid_twin, &f, &[3, 2]);
        let names: Vec<&'static str> = model.named().iter().map(|(n, _)| *n).collect();
        let params: Vec<Tensor> = model.named().iter().map(|(_, t)| (*t).clone()).collect();
        let target = [0.1, 0.6, 0.0, 0.3];
        let store_before = store.xi().clone();
        let report = check(
            &params,
            |tape, x| {
                let all = names.iter().copied().zip(x.iter().copied()).collect();
                let vars = ModelVars::from_named(all)?;
                let out = forward_model(tape, variant, &vars, &f, &tokens, Some(&store), None)?;
                Ok::<_, CoreError>(tape.cross_entropy(out.logits, &target)?)
            },
            1e-4,
        )
        .unwrap();
        assert_eq!(store.xi(), &store_before);
        report.max_rel_error
    }

    #[test]
    fn end_to_end_gradients_for_every_variant() {
        for variant in Variant::ALL {
            for glimpses in [1, 3] {
                let err = grad_check(variant, glimpses, 20 + glimpses as u64);
                assert!(err < 1e-4, "{variant} with {glimpses} glimpses: {err:e}");
            }
        }
    }
}
