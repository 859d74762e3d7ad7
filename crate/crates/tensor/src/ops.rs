//! Plain (untracked) kernels. The tape reuses them for its forward passes.

use std::ops::Range;

use crate::{Result, Tensor, TensorError};

/// `out[m×n] = a[m×k] · b[k×n]`; each output sums over `k` in ascending order.
pub(crate) fn matmul_kernel(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// Splits `shape` around `axis` into (outer, axis, inner) extents.
pub(crate) fn axis_view(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Contracts mode `mode` (1-based) of a rank-3 tensor with the rows of `m`.
///
/// `out[.., c, ..] = Σ_d t[.., d, ..] · m[d, c]`, so the contracted dimension
/// is replaced by the column count of `m`.
pub fn n_mode_product(t: &Tensor, m: &Tensor, mode: usize) -> Result<Tensor> {
    if !(1..=3).contains(&mode) {
        return Err(TensorError::ModeOutOfRange(mode));
    }
    if t.rank() != 3 {
        return Err(TensorError::DimensionMismatch {
            op: "n_mode_product",
            detail: format!("expected a rank-3 tensor, got shape {:?}", t.shape()),
        });
    }
    if m.rank() != 2 || m.shape()[0] != t.shape()[mode - 1] {
        return Err(TensorError::DimensionMismatch {
            op: "n_mode_product",
            detail: format!(
                "mode {mode} of {:?} does not match matrix rows of {:?}",
                t.shape(),
                m.shape()
            ),
        });
    }
    let cols = m.shape()[1];
    let data = n_mode_kernel(t.data(), t.shape(), m.data(), cols, mode - 1);
    let mut shape = t.shape().to_vec();
    shape[mode - 1] = cols;
    Tensor::new(shape, data)
}

pub(crate) fn n_mode_kernel(
    t: &[f64],
    shape: &[usize],
    m: &[f64],
    cols: usize,
    axis: usize,
) -> Vec<f64> {
    let (outer, d, inner) = axis_view(shape, axis);
    let mut out = vec![0.0; outer * cols * inner];
    for a in 0..outer {
        for r in 0..d {
            let t_off = (a * d + r) * inner;
            for c in 0..cols {
                let w = m[r * cols + c];
                let o_off = (a * cols + c) * inner;
                for b in 0..inner {
                    out[o_off + b] += t[t_off + b] * w;
                }
            }
        }
    }
    out
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(TensorError::EmptyInput("softmax"));
    }
    Ok(softmax_unchecked(x))
}

pub(crate) fn softmax_unchecked(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `log Σ exp(x)` with max subtraction.
pub(crate) fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Window boundaries used by [`maxpool1d`].
///
/// Windows have width `ceil(len / buckets)` and are laid out consecutively;
/// the last non-empty window may be shorter. When the ceiling rule runs out
/// of input before `buckets` windows are placed, each remaining window is the
/// single final element.
pub fn maxpool_windows(len: usize, buckets: usize) -> Result<Vec<Range<usize>>> {
    if buckets == 0 || buckets > len {
        return Err(TensorError::InvalidBuckets { buckets, len });
    }
    let width = len.div_ceil(buckets);
    Ok((0..buckets)
        .map(|i| {
            let start = i * width;
            if start >= len {
                len - 1..len
            } else {
                start..(start + width).min(len)
            }
        })
        .collect())
}

/// Max over each window of [`maxpool_windows`]; returns values and the
/// first argmax index of each window.
pub fn maxpool1d_with_argmax(x: &[f64], buckets: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    let windows = maxpool_windows(x.len(), buckets)?;
    let mut values = Vec::with_capacity(buckets);
    let mut argmax = Vec::with_capacity(buckets);
    for w in windows {
        let mut best = w.start;
        for i in w.clone() {
            if x[i] > x[best] {
                best = i;
            }
        }
        values.push(x[best]);
        argmax.push(best);
    }
    Ok((values, argmax))
}

pub fn maxpool1d(x: &[f64], buckets: usize) -> Result<Vec<f64>> {
    maxpool1d_with_argmax(x, buckets).map(|(v, _)| v)
}

/// Untracked matrix product with the same shape rules as [`crate::Tape::matmul`].
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k, n, shape) = matmul_dims(a.shape(), b.shape())?;
    Tensor::new(shape, matmul_kernel(a.data(), m, k, b.data(), n))
}

/// Resolves (m, k, n, output shape); rank-1 operands act as a row vector on the
/// left or a column vector on the right.
pub(crate) fn matmul_dims(a: &[usize], b: &[usize]) -> Result<(usize, usize, usize, Vec<usize>)> {
    let (m, ka) = match a {
        [k] => (None, *k),
        [m, k] => (Some(*m), *k),
        _ => return Err(mismatch_matmul(a, b)),
    };
    let (kb, n) = match b {
        [k] => (*k, None),
        [k, n] => (*k, Some(*n)),
        _ => return Err(mismatch_matmul(a, b)),
    };
    if ka != kb {
        return Err(mismatch_matmul(a, b));
    }
    let shape = match (m, n) {
        (Some(m), Some(n)) => vec![m, n],
        (Some(m), None) => vec![m],
        (None, Some(n)) => vec![n],
        (None, None) => vec![1],
    };
    Ok((m.unwrap_or(1), ka, n.unwrap_or(1), shape))
}

fn mismatch_matmul(a: &[usize], b: &[usize]) -> TensorError {
    TensorError::DimensionMismatch {
        op: "matmul",
        detail: format!("{a:?} x {b:?}"),
    }
}
