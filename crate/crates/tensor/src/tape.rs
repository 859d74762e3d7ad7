use crate::ops::{
    axis_view, log_sum_exp, matmul_dims, matmul_kernel, maxpool1d_with_argmax, softmax_unchecked,
};
use crate::{Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    NMode {
        t: Var,
        m: Var,
        axis: usize,
        cols: usize,
    },
    Add {
        a: Var,
        b: Var,
    },
    AddRow {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        a: Var,
        c: f64,
    },
    Tanh(Var),
    Sigmoid(Var),
    Softmax {
        a: Var,
        cols: usize,
    },
    Concat(Vec<Var>),
    Slice {
        a: Var,
        outer: usize,
        dim: usize,
        inner: usize,
        start: usize,
        len: usize,
    },
    Reshape(Var),
    Sum(Var),
    MaxPool {
        a: Var,
        argmax: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        target: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Ordered record of executed operations. Nodes are appended in execution
/// order, so every node's inputs precede it.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a trainable input whose gradient is populated by [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last [`Tape::backward`] loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> Result<&Node> {
        self.nodes.get(v.0).ok_or(TensorError::UnknownVar(v.0))
    }

    fn shape(&self, v: Var) -> Result<&[usize]> {
        Ok(self.node(v)?.value.shape())
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Matrix product. Rank-1 operands are a row vector on the left and a
    /// column vector on the right.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k, n, shape) = matmul_dims(self.shape(a)?, self.shape(b)?)?;
        let data = matmul_kernel(self.value(a).data(), m, k, self.value(b).data(), n);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, Op::MatMul { a, b, m, k, n }, rg))
    }

    /// `weights[G] · rows[G×n]`: the weighted sum of matrix rows.
    pub fn weighted_sum(&mut self, weights: Var, rows: Var) -> Result<Var> {
        let (ws, rs) = (self.shape(weights)?, self.shape(rows)?);
        if ws.len() != 1 || rs.len() != 2 || ws[0] != rs[0] {
            return Err(TensorError::DimensionMismatch {
                op: "weighted_sum",
                detail: format!("weights {ws:?} over rows {rs:?}"),
            });
        }
        self.matmul(weights, rows)
    }

    /// n-mode product (`mode` is 1-based) of a rank-3 tensor with a matrix.
    pub fn n_mode(&mut self, t: Var, m: Var, mode: usize) -> Result<Var> {
        let out = crate::ops::n_mode_product(self.value(t), self.value(m), mode)?;
        let cols = self.value(m).shape()[1];
        let rg = self.any_grad(&[t, m]);
        Ok(self.push(
            out,
            Op::NMode {
                t,
                m,
                axis: mode - 1,
                cols,
            },
            rg,
        ))
    }

    /// Elementwise sum. `b` may also be a vector broadcast over the rows of
    /// a matrix `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a)?.to_vec(), self.shape(b)?.to_vec());
        let va = self.value(a).data();
        let vb = self.value(b).data();
        let (data, op) = if sa == sb {
            (
                va.iter().zip(vb).map(|(x, y)| x + y).collect(),
                Op::Add { a, b },
            )
        } else if sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0] {
            let data = va
                .chunks(sb[0])
                .flat_map(|row| row.iter().zip(vb).map(|(x, y)| x + y))
                .collect();
            (data, Op::AddRow { a, b })
        } else {
            return Err(TensorError::DimensionMismatch {
                op: "add",
                detail: format!("{sa:?} + {sb:?}"),
            });
        };
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(sa, data)?, op, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let data = self.zip_same("sub", a, b, |x, y| x - y)?;
        let rg = self.any_grad(&[a, b]);
        let shape = self.shape(a)?.to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Sub { a, b }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let data = self.zip_same("mul", a, b, |x, y| x * y)?;
        let rg = self.any_grad(&[a, b]);
        let shape = self.shape(a)?.to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Mul { a, b }, rg))
    }

    fn zip_same(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Vec<f64>> {
        let (sa, sb) = (self.shape(a)?, self.shape(b)?);
        if sa != sb {
            return Err(TensorError::DimensionMismatch {
                op,
                detail: format!("{sa:?} vs {sb:?}"),
            });
        }
        Ok(self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect())
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.map(a, |x| x * c)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Scale { a, c }, rg))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, f64::tanh)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Tanh(a), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, sigmoid)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Sigmoid(a), rg))
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let v = &self.node(a)?.value;
        Tensor::new(v.shape().to_vec(), v.data().iter().map(|&x| f(x)).collect())
    }

    /// Softmax over the last axis (each row of a matrix independently).
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let v = &self.node(a)?.value;
        let cols = v.cols();
        let data: Vec<f64> = v.data().chunks(cols).flat_map(softmax_unchecked).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Softmax { a, cols }, rg))
    }

    /// Concatenation along the first axis; trailing dimensions must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(TensorError::EmptyInput("concat"))?;
        let tail = self.shape(*first)?[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p)?;
            if s[1..] != tail[..] {
                return Err(TensorError::DimensionMismatch {
                    op: "concat",
                    detail: format!("trailing dims {:?} vs {:?}", &s[1..], tail),
                });
            }
            lead += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let rg = self.any_grad(parts);
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat(parts.to_vec()), rg))
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a)?.to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(TensorError::DimensionMismatch {
                op: "slice",
                detail: format!("axis {axis} range {start}..{} of {shape:?}", start + len),
            });
        }
        let (outer, dim, inner) = axis_view(&shape, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let rg = self.any_grad(&[a]);
        let op = Op::Slice {
            a,
            outer,
            dim,
            inner,
            start,
            len,
        };
        Ok(self.push(Tensor::new(out_shape, data)?, op, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.node(a)?.value.clone().reshaped(shape.to_vec())?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.node(a)?.value.data().iter().sum();
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::scalar(total), Op::Sum(a), rg))
    }

    /// 1-D max-pooling into `buckets` windows; the subgradient goes to the
    /// first argmax of each window.
    pub fn maxpool(&mut self, a: Var, buckets: usize) -> Result<Var> {
        let v = &self.node(a)?.value;
        if v.rank() != 1 {
            return Err(TensorError::DimensionMismatch {
                op: "maxpool",
                detail: format!("expected a vector, got {:?}", v.shape()),
            });
        }
        let (values, argmax) = maxpool1d_with_argmax(v.data(), buckets)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::vector(values)?, Op::MaxPool { a, argmax }, rg))
    }

    /// `−Σ target · log softmax(logits)` against a constant target distribution.
    pub fn cross_entropy(&mut self, logits: Var, target: &[f64]) -> Result<Var> {
        let v = &self.node(logits)?.value;
        if v.rank() != 1 || v.len() != target.len() {
            return Err(TensorError::DimensionMismatch {
                op: "cross_entropy",
                detail: format!("logits {:?} vs target length {}", v.shape(), target.len()),
            });
        }
        if target.iter().any(|&t| t < 0.0 || !t.is_finite()) {
            return Err(TensorError::InvalidTarget(
                "negative or non-finite entry".into(),
            ));
        }
        let total: f64 = target.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(TensorError::InvalidTarget(format!("sums to {total}")));
        }
        let lse = log_sum_exp(v.data());
        let loss: f64 = v
            .data()
            .iter()
            .zip(target)
            .filter(|(_, &t)| t > 0.0)
            .map(|(&x, &t)| -t * (x - lse))
            .sum();
        let rg = self.any_grad(&[logits]);
        let op = Op::CrossEntropy {
            logits,
            target: target.to_vec(),
        };
        Ok(self.push(Tensor::scalar(loss), op, rg))
    }

    /// Reverse pass from a scalar `loss`. Populates gradients on every node
    /// that depends on a parameter; earlier gradients are cleared.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(TensorError::EmptyTape);
        }
        let root = self.node(loss)?;
        if !root.value.is_scalar() {
            return Err(TensorError::NotScalar(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            node.grad = if node.requires_grad { g } else { None };
        }
        Ok(())
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: &Var| self.nodes[v.0].value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if self.nodes[v.0].requires_grad {
                let len = self.nodes[v.0].value.len();
                let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
                f(slot);
            }
        };
        match op {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let (av, bv) = (val(a), val(b));
                acc(*a, &mut |da| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g[i * n + j] * bv[p * n + j];
                            }
                            da[i * k + p] += s;
                        }
                    }
                });
                acc(*b, &mut |db| {
                    for i in 0..m {
                        for p in 0..k {
                            let aip = av[i * k + p];
                            for j in 0..n {
                                db[p * n + j] += aip * g[i * n + j];
                            }
                        }
                    }
                });
            }
            Op::NMode { t, m, axis, cols } => {
                let tshape = self.nodes[t.0].value.shape();
                let (outer, d, inner) = axis_view(tshape, *axis);
                let cols = *cols;
                let (tv, mv) = (val(t), val(m));
                acc(*t, &mut |dt| {
                    for a in 0..outer {
                        for r in 0..d {
                            for c in 0..cols {
                                let w = mv[r * cols + c];
                                let go = (a * cols + c) * inner;
                                let to = (a * d + r) * inner;
                                for b in 0..inner {
                                    dt[to + b] += g[go + b] * w;
                                }
                            }
                        }
                    }
                });
                acc(*m, &mut |dm| {
                    for a in 0..outer {
                        for r in 0..d {
                            let to = (a * d + r) * inner;
                            for c in 0..cols {
                                let go = (a * cols + c) * inner;
                                let mut s = 0.0;
                                for b in 0..inner {
                                    s += tv[to + b] * g[go + b];
                                }
                                dm[r * cols + c] += s;
                            }
                        }
                    }
                });
            }
            Op::Add { a, b } => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| add_into(d, g));
            }
            Op::AddRow { a, b } => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| {
                    let n = d.len();
                    for row in g.chunks(n) {
                        add_into(d, row);
                    }
                });
            }
            Op::Sub { a, b } => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| d.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul { a, b } => {
                let (av, bv) = (val(a), val(b));
                acc(*a, &mut |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * bv[i];
                    }
                });
                acc(*b, &mut |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * av[i];
                    }
                });
            }
            Op::Scale { a, c } => acc(*a, &mut |d| {
                d.iter_mut().zip(g).for_each(|(x, y)| *x += c * y)
            }),
            Op::Tanh(a) => {
                let y = out.data();
                acc(*a, &mut |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = out.data();
                acc(*a, &mut |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                });
            }
            Op::Softmax { a, cols } => {
                let y = out.data();
                acc(*a, &mut |d| {
                    for ((drow, yrow), grow) in d
                        .chunks_mut(*cols)
                        .zip(y.chunks(*cols))
                        .zip(g.chunks(*cols))
                    {
                        let dot: f64 = yrow.iter().zip(grow).map(|(p, q)| p * q).sum();
                        for i in 0..drow.len() {
                            drow[i] += yrow[i] * (grow[i] - dot);
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.nodes[p.0].value.len();
                    acc(*p, &mut |d| add_into(d, &g[off..off + len]));
                    off += len;
                }
            }
            Op::Slice {
                a,
                outer,
                dim,
                inner,
                start,
                len,
            } => {
                acc(*a, &mut |d| {
                    for o in 0..*outer {
                        let src = o * len * inner;
                        let dst = (o * dim + start) * inner;
                        add_into(&mut d[dst..dst + len * inner], &g[src..src + len * inner]);
                    }
                });
            }
            Op::Reshape(a) => acc(*a, &mut |d| add_into(d, g)),
            Op::Sum(a) => acc(*a, &mut |d| d.iter_mut().for_each(|x| *x += g[0])),
            Op::MaxPool { a, argmax } => acc(*a, &mut |d| {
                for (i, &j) in argmax.iter().enumerate() {
                    d[j] += g[i];
                }
            }),
            Op::CrossEntropy { logits, target } => {
                let p = softmax_unchecked(val(logits));
                let total: f64 = target.iter().sum();
                acc(*logits, &mut |d| {
                    for i in 0..d.len() {
                        d[i] += g[0] * (p[i] * total - target[i]);
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
