//! Glimpse attention over grid cells.

use jex_tensor::{Tape, Tensor, Var};

use crate::error::{CoreError, Result};

/// One softmax map over the `G` grid cells per glimpse.
///
/// With a `G × t_e` embedding, glimpse `g` scores every cell by projecting
/// that cell's `g`-th channel group through `w[g]` (`w` is
/// `glimpses × t_e/glimpses`). With a single `t_e` vector, `w` is
/// `glimpses × t_e/glimpses × G` and maps the channel group straight to `G`
/// scores.
pub fn compute_attention(tape: &mut Tape, e: Var, w: Var, glimpses: usize) -> Result<Vec<Var>> {
    let es = tape.value(e).shape().to_vec();
    let ws = tape.value(w).shape().to_vec();
    let t_e = *es.last().unwrap_or(&0);
    if glimpses == 0 || t_e == 0 || !t_e.is_multiple_of(glimpses) {
        return Err(CoreError::DimensionMismatch(format!(
            "t_e={t_e} cannot be split into {glimpses} glimpses"
        )));
    }
    let c = t_e / glimpses;
    let grid_mode = es.len() == 2;
    let ok = match (grid_mode, ws.as_slice()) {
        (true, [g, cc]) => *g == glimpses && *cc == c,
        (false, [g, cc, cells]) => es.len() == 1 && *g == glimpses && *cc == c && *cells > 0,
        _ => false,
    };
    if !ok {
        return Err(CoreError::DimensionMismatch(format!(
            "attention weights {ws:?} do not fit embedding {es:?} with {glimpses} glimpses"
        )));
    }
    let mut maps = Vec::with_capacity(glimpses);
    for g in 0..glimpses {
        let wg = tape.slice(w, 0, g, 1)?;
        let scores = if grid_mode {
            let eg = tape.slice(e, 1, g * c, c)?;
            let wg = tape.reshape(wg, &[c])?;
            tape.matmul(eg, wg)?
        } else {
            let eg = tape.slice(e, 0, g * c, c)?;
            let wg = tape.reshape(wg, &[c, ws[2]])?;
            tape.matmul(eg, wg)?
        };
        maps.push(tape.softmax(scores)?);
    }
    Ok(maps)
}

/// Concatenates `Σ_g α_g v_g` over glimpses.
pub fn attend(tape: &mut Tape, v1: Var, alphas: &[Var]) -> Result<Var> {
    let cells = tape.value(v1).shape()[0];
    let mut parts = Vec::with_capacity(alphas.len());
    for &a in alphas {
        if tape.value(a).shape() != [cells] {
            return Err(CoreError::DimensionMismatch(format!(
                "attention over {:?} cells, grid has {cells}",
                tape.value(a).shape()
            )));
        }
        parts.push(tape.weighted_sum(a, v1)?);
    }
    if parts.is_empty() {
        return Err(CoreError::EmptyInput("attention maps"));
    }
    Ok(tape.concat(&parts)?)
}

/// Untracked [`compute_attention`].
pub fn attention_weights(e: &Tensor, w: &Tensor, glimpses: usize) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let e = tape.constant(e.clone());
    let w = tape.constant(w.clone());
    let maps = compute_attention(&mut tape, e, w, glimpses)?;
    Ok(maps
        .iter()
        .map(|&m| tape.value(m).data().to_vec())
        .collect())
}

/// Untracked [`attend`].
pub fn attend_grid(v1: &Tensor, alphas: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let v = tape.constant(v1.clone());
    let maps = alphas
        .iter()
        .map(|a| Ok(tape.constant(Tensor::vector(a.clone())?)))
        .collect::<Result<Vec<_>>>()?;
    let out = attend(&mut tape, v, &maps)?;
    Ok(tape.value(out).data().to_vec())
}
