//! Single-layer GRU question encoder.

use jex_tensor::{Tape, Tensor, Var};
use rand::Rng;

use crate::error::{CoreError, Result};
use crate::init::uniform;

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    /// `vocab × embed`
    pub embedding: Tensor,
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub b_z: Tensor,
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub b_r: Tensor,
    pub w_h: Tensor,
    pub u_h: Tensor,
    pub b_h: Tensor,
}

/// [`GruParams`] registered on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub embedding: Var,
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
}

impl GruParams {
    pub fn zeros(vocab: usize, embed: usize, hidden: usize) -> Result<Self> {
        let z = |s: &[usize]| Tensor::zeros(s);
        Ok(Self {
            embedding: z(&[vocab, embed])?,
            w_z: z(&[embed, hidden])?,
            u_z: z(&[hidden, hidden])?,
            b_z: z(&[hidden])?,
            w_r: z(&[embed, hidden])?,
            u_r: z(&[hidden, hidden])?,
            b_r: z(&[hidden])?,
            w_h: z(&[embed, hidden])?,
            u_h: z(&[hidden, hidden])?,
            b_h: z(&[hidden])?,
        })
    }

    /// Unit-variance embeddings, weights scaled by fan-in, biases zero.
    pub fn random(vocab: usize, embed: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut p = Self::zeros(vocab, embed, hidden)?;
        p.embedding = uniform(&[vocab, embed], 1, rng)?;
        for w in [&mut p.w_z, &mut p.w_r, &mut p.w_h] {
            *w = uniform(&[embed, hidden], embed, rng)?;
        }
        for u in [&mut p.u_z, &mut p.u_r, &mut p.u_h] {
            *u = uniform(&[hidden, hidden], hidden, rng)?;
        }
        Ok(p)
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.shape()[0]
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.b_z.len()
    }

    pub fn named(&self) -> [(&'static str, &Tensor); 10] {
        [
            ("embedding", &self.embedding),
            ("w_z", &self.w_z),
            ("u_z", &self.u_z),
            ("b_z", &self.b_z),
            ("w_r", &self.w_r),
            ("u_r", &self.u_r),
            ("b_r", &self.b_r),
            ("w_h", &self.w_h),
            ("u_h", &self.u_h),
            ("b_h", &self.b_h),
        ]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut Tensor); 10] {
        [
            ("embedding", &mut self.embedding),
            ("w_z", &mut self.w_z),
            ("u_z", &mut self.u_z),
            ("b_z", &mut self.b_z),
            ("w_r", &mut self.w_r),
            ("u_r", &mut self.u_r),
            ("b_r", &mut self.b_r),
            ("w_h", &mut self.w_h),
            ("u_h", &mut self.u_h),
            ("b_h", &mut self.b_h),
        ]
    }

    /// Registers every tensor on `tape`, as parameters when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> GruVars {
        let mut leaf = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        GruVars {
            embedding: leaf(&self.embedding),
            w_z: leaf(&self.w_z),
            u_z: leaf(&self.u_z),
            b_z: leaf(&self.b_z),
            w_r: leaf(&self.w_r),
            u_r: leaf(&self.u_r),
            b_r: leaf(&self.b_r),
            w_h: leaf(&self.w_h),
            u_h: leaf(&self.u_h),
            b_h: leaf(&self.b_h),
        }
    }

    /// Final hidden state for `tokens`.
    pub fn encode(&self, tokens: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let q = gru_encode(&mut tape, &vars, tokens)?;
        Ok(tape.value(q).clone())
    }
}

/// Runs the recurrence from `h₀ = 0` and returns the final hidden state.
pub fn gru_encode(tape: &mut Tape, p: &GruVars, tokens: &[usize]) -> Result<Var> {
    if tokens.is_empty() {
        return Err(CoreError::EmptyTokens);
    }
    let vocab = tape.value(p.embedding).shape()[0];
    let embed = tape.value(p.embedding).shape()[1];
    let hidden = tape.value(p.b_z).len();
    let mut h = tape.constant(Tensor::zeros(&[hidden])?);
    for &t in tokens {
        if t >= vocab {
            return Err(CoreError::DimensionMismatch(format!(
                "token {t} outside vocabulary of {vocab}"
            )));
        }
        let x = tape.slice(p.embedding, 0, t, 1)?;
        let x = tape.reshape(x, &[embed])?;
        let z = gate(tape, x, h, p.w_z, p.u_z, p.b_z)?;
        let z = tape.sigmoid(z)?;
        let r = gate(tape, x, h, p.w_r, p.u_r, p.b_r)?;
        let r = tape.sigmoid(r)?;
        let rh = tape.mul(r, h)?;
        let cand = gate(tape, x, rh, p.w_h, p.u_h, p.b_h)?;
        let cand = tape.tanh(cand)?;
        let diff = tape.sub(cand, h)?;
        let step = tape.mul(z, diff)?;
        h = tape.add(h, step)?;
    }
    Ok(h)
}

fn gate(tape: &mut Tape, x: Var, h: Var, w: Var, u: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    let hu = tape.matmul(h, u)?;
    let s = tape.add(xw, hu)?;
    Ok(tape.add(s, b)?)
}
