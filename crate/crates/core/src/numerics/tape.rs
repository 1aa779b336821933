//! Dynamically recorded reverse-mode autodiff.
//!
//! Every op appends a node holding its output value; node indices are a
//! topological order, so `backward` is a single reverse sweep. Leaves may
//! borrow their tensors (model weights are not copied per pass); leaf
//! gradients live on the tape and accumulate across `backward` calls until
//! [`Tape::zero_grad`].

use std::borrow::Cow;

use super::kernels::{self, AttnGeom, ConvGeom, RopeTable};
use super::{Scalar, Tensor};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    Sum(Var),
    Gelu(Var),
    Silu(Var),
    Tanh(Var),
    Softmax(Var),
    RmsNorm { x: Var, gain: Var, inv: Vec<S> },
    Conv1d { input: Var, kernel: Var, geom: ConvGeom },
    Rope { x: Var, heads: usize, table: RopeTable<S> },
    Attention { q: Var, k: Var, v: Var, geom: AttnGeom, probs: Vec<S> },
    Embedding { table: Var, ids: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<S> },
}

#[derive(Debug)]
struct Node<'a, S: Scalar> {
    value: Cow<'a, Tensor<S>>,
    op: Op<S>,
    tracked: bool,
    grad: Option<Vec<S>>,
}

#[derive(Debug)]
pub struct Tape<'a, S: Scalar> {
    nodes: Vec<Node<'a, S>>,
    norm_eps: f64,
}

impl<S: Scalar> Default for Tape<'_, S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, S: Scalar> Tape<'a, S> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            norm_eps: 1e-6,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives gradients iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor<S>) -> Var {
        let tracked = tensor.requires_grad();
        self.push(Cow::Owned(tensor), Op::Leaf, tracked)
    }

    /// Borrowed leaf; `tracked` decides whether it receives a gradient.
    pub fn leaf_ref(&mut self, tensor: &'a Tensor<S>, tracked: bool) -> Var {
        self.push(Cow::Borrowed(tensor), Op::Leaf, tracked)
    }

    pub fn param(&mut self, tensor: Tensor<S>) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    pub fn constant(&mut self, tensor: Tensor<S>) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn take_value(&mut self, v: Var) -> Tensor<S> {
        std::mem::replace(&mut self.nodes[v.0].value, Cow::Owned(Tensor::zeros([0]))).into_owned()
    }

    /// Accumulated gradient of a leaf, if any reached it.
    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<S>> {
        self.nodes[v.0].grad.take()
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Cow<'a, Tensor<S>>, op: Op<S>, tracked: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            tracked,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, name: &str, shape: Vec<usize>, data: Vec<S>, op: Op<S>, inputs: &[Var]) -> Result<Var> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name.to_string()));
        }
        let tracked = self.any_tracked(inputs);
        Ok(self.push(Cow::Owned(Tensor::from_parts(shape, data)), op, tracked))
    }

    fn any_tracked(&self, inputs: &[Var]) -> bool {
        inputs.iter().any(|v| self.nodes[v.0].tracked)
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.value(v).dims2(op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m},{k}] x [{k2},{n}]")));
        }
        let mut out = vec![S::zero(); m * n];
        kernels::gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.record("matmul", vec![m, n], out, Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ` for `a: [m,k]`, `b: [n,k]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul_bt")?;
        let (n, k2) = self.dims2(b, "matmul_bt")?;
        if k != k2 {
            return Err(Error::shape("matmul_bt", format!("[{m},{k}] x [{n},{k2}]ᵀ")));
        }
        let mut out = vec![S::zero(); m * n];
        kernels::gemm_bt_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.record("matmul_bt", vec![m, n], out, Op::MatMulBt(a, b), &[a, b])
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        self.record("add", self.value(a).shape().to_vec(), out, Op::Add(a, b), &[a, b])
    }

    /// Adds a `[n]` row vector to every row of `a: [m, n]`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (_, n) = self.dims2(a, "add_row")?;
        if self.value(bias).shape() != [n] {
            return Err(Error::shape("add_row", format!("bias {:?} for {n} columns", self.value(bias).shape())));
        }
        let b = self.value(bias).data();
        let out = self.value(a).data().chunks(n).flat_map(|r| r.iter().zip(b).map(|(&x, &y)| x + y)).collect();
        self.record("add_row", self.value(a).shape().to_vec(), out, Op::AddRow(a, bias), &[a, bias])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        self.record("mul", self.value(a).shape().to_vec(), out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: S) -> Result<Var> {
        let out = self.value(a).data().iter().map(|&x| x * factor).collect();
        self.record("scale", self.value(a).shape().to_vec(), out, Op::Scale(a, factor), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).data().iter().copied().sum();
        self.record("sum", vec![], vec![total], Op::Sum(a), &[a])
    }

    fn unary(&mut self, a: Var, name: &str, f: impl Fn(S) -> S, op: Op<S>) -> Result<Var> {
        let out = self.value(a).data().iter().map(|&x| f(x)).collect();
        self.record(name, self.value(a).shape().to_vec(), out, op, &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "gelu", kernels::gelu, Op::Gelu(a))
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "silu", kernels::silu, Op::Silu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "tanh", |x| x.tanh(), Op::Tanh(a))
    }

    /// Row-wise softmax over the last axis of a rank-2 tensor.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let (_, n) = self.dims2(a, "softmax")?;
        let mut out = self.value(a).data().to_vec();
        out.chunks_mut(n).for_each(kernels::softmax_in_place);
        self.record("softmax", self.value(a).shape().to_vec(), out, Op::Softmax(a), &[a])
    }

    pub fn set_norm_eps(&mut self, eps: f64) {
        self.norm_eps = eps;
    }

    pub fn rms_norm(&mut self, x: Var, gain: Var) -> Result<Var> {
        let (_, n) = self.dims2(x, "rms_norm")?;
        if self.value(gain).shape() != [n] {
            return Err(Error::shape("rms_norm", format!("gain {:?} for {n} columns", self.value(gain).shape())));
        }
        let (y, inv) = kernels::rms_norm(self.value(x).data(), self.value(gain).data(), n, S::lit(self.norm_eps));
        self.record("rms_norm", self.value(x).shape().to_vec(), y, Op::RmsNorm { x, gain, inv }, &[x, gain])
    }

    /// Valid strided convolution: `input: [time, c_in]`, `kernel: [width, c_in, c_out]`.
    pub fn conv1d(&mut self, input: Var, kernel: Var, stride: usize) -> Result<Var> {
        let (time, c_in) = self.dims2(input, "conv1d")?;
        let (width, kc_in, c_out) = match self.value(kernel).shape()[..] {
            [w, ci, co] => (w, ci, co),
            ref s => return Err(Error::shape("conv1d", format!("kernel must be rank 3, got {s:?}"))),
        };
        if kc_in != c_in {
            return Err(Error::shape("conv1d", format!("input has {c_in} channels, kernel expects {kc_in}")));
        }
        if stride == 0 {
            return Err(Error::Argument("conv1d stride must be positive".into()));
        }
        if time < width {
            return Err(Error::InputTooShort { min_samples: width, got: time });
        }
        let geom = ConvGeom {
            time,
            c_in,
            width,
            c_out,
            stride,
            time_out: (time - width) / stride + 1,
        };
        let out = kernels::conv1d_forward(self.value(input).data(), self.value(kernel).data(), geom);
        self.record("conv1d", vec![geom.time_out, c_out], out, Op::Conv1d { input, kernel, geom }, &[input, kernel])
    }

    /// Rotary embedding on `x: [seq, heads*head_dim]`, one position per row.
    pub fn rope(&mut self, x: Var, heads: usize, positions: &[usize], theta: f64) -> Result<Var> {
        let (seq, width) = self.dims2(x, "rope")?;
        if heads == 0 || width % heads != 0 || !(width / heads).is_multiple_of(2) {
            return Err(Error::Config(format!("rope needs an even head_dim; width {width}, heads {heads}")));
        }
        if positions.len() != seq {
            return Err(Error::shape("rope", format!("{} positions for {seq} rows", positions.len())));
        }
        let table = RopeTable::new(positions, width / heads, theta);
        let mut out = self.value(x).data().to_vec();
        table.rotate(&mut out, heads, false);
        self.record("rope", vec![seq, width], out, Op::Rope { x, heads, table }, &[x])
    }

    /// Multi-head scaled dot-product attention over `[len, dim]` inputs.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, causal: bool) -> Result<Var> {
        let (lq, dim) = self.dims2(q, "attention")?;
        let (lk, dk) = self.dims2(k, "attention")?;
        if self.value(v).shape() != [lk, dk] || dk != dim {
            return Err(Error::shape("attention", "q/k/v widths or k/v lengths disagree"));
        }
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!("{dim} not divisible by {heads} heads")));
        }
        if causal && lq > lk {
            return Err(Error::shape("attention", "causal attention needs lq <= lk"));
        }
        let geom = AttnGeom { lq, lk, dim, heads, causal };
        let (out, mut probs) = kernels::attention_forward(self.value(q).data(), self.value(k).data(), self.value(v).data(), geom);
        if !self.any_tracked(&[q, k, v]) {
            probs = Vec::new();
        }
        self.record("attention", vec![lq, dim], out, Op::Attention { q, k, v, geom, probs }, &[q, k, v])
    }

    /// Gathers rows of `table: [vocab, dim]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (vocab, dim) = self.dims2(table, "embedding")?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::Index(format!("token id {bad} >= vocab size {vocab}")));
        }
        let t = self.value(table);
        let out = ids.iter().flat_map(|&i| t.row(i).iter().copied()).collect();
        self.record("embedding", vec![ids.len(), dim], out, Op::Embedding { table, ids: ids.to_vec() }, &[table])
    }

    /// Mean negative log-likelihood over rows; a scalar node.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (rows, vocab) = self.dims2(logits, "cross_entropy")?;
        if targets.len() != rows {
            return Err(Error::shape("cross_entropy", format!("{} targets for {rows} rows", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= vocab) {
            return Err(Error::Index(format!("target id {bad} >= vocab size {vocab}")));
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut loss = S::zero();
        for (r, row) in probs.chunks_mut(vocab).enumerate() {
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let lse = row.iter().map(|&z| (z - max).exp()).sum::<S>().ln() + max;
            loss += lse - row[targets[r]];
            kernels::softmax_in_place(row);
        }
        let loss = loss / S::lit(rows.max(1) as f64);
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), probs };
        self.record("cross_entropy", vec![], vec![loss], op, &[logits])
    }

    /// Populates gradients of `loss` on every tracked leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        if !self.nodes[loss.0].tracked {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<S>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![S::one()]);
        let mut leaf_grads = Vec::new();
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                leaf_grads.push((i, g));
            } else {
                self.propagate(i, &g, &mut grads);
            }
        }
        for (i, g) in leaf_grads {
            match &mut self.nodes[i].grad {
                Some(buf) => kernels::axpy(S::one(), &g, buf),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.data();
        // Run `f` against the gradient buffer of `v` if `v` is tracked.
        let mut with = |v: Var, f: &mut dyn FnMut(&mut [S])| {
            if nodes[v.0].tracked {
                let buf = grads[v.0].get_or_insert_with(|| vec![S::zero(); nodes[v.0].value.numel()]);
                f(buf);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
                let n = nodes[b.0].value.shape()[1];
                with(*a, &mut |da| kernels::gemm_bt_acc(g, val(*b), da, m, n, k));
                with(*b, &mut |db| kernels::gemm_at_acc(val(*a), g, db, m, k, n));
            }
            Op::MatMulBt(a, b) => {
                let (m, k) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
                let n = nodes[b.0].value.shape()[0];
                // out = a·bᵀ: da = g·b, db = gᵀ·a
                with(*a, &mut |da| kernels::gemm_acc(g, val(*b), da, m, n, k));
                with(*b, &mut |db| kernels::gemm_at_acc(g, val(*a), db, m, n, k));
            }
            Op::Add(a, b) => {
                with(*a, &mut |da| kernels::axpy(S::one(), g, da));
                with(*b, &mut |db| kernels::axpy(S::one(), g, db));
            }
            Op::AddRow(a, bias) => {
                with(*a, &mut |da| kernels::axpy(S::one(), g, da));
                with(*bias, &mut |db| {
                    let n = db.len();
                    g.chunks(n).for_each(|r| kernels::axpy(S::one(), r, db));
                });
            }
            Op::Mul(a, b) => {
                with(*a, &mut |da| da.iter_mut().zip(g).zip(val(*b)).for_each(|((d, &gi), &y)| *d += gi * y));
                with(*b, &mut |db| db.iter_mut().zip(g).zip(val(*a)).for_each(|((d, &gi), &x)| *d += gi * x));
            }
            Op::Scale(a, f) => with(*a, &mut |da| kernels::axpy(*f, g, da)),
            Op::Sum(a) => with(*a, &mut |da| da.iter_mut().for_each(|d| *d += g[0])),
            Op::Gelu(a) => with(*a, &mut |da| {
                da.iter_mut().zip(g).zip(val(*a)).for_each(|((d, &gi), &x)| *d += gi * kernels::gelu_grad(x))
            }),
            Op::Silu(a) => with(*a, &mut |da| {
                da.iter_mut().zip(g).zip(val(*a)).for_each(|((d, &gi), &x)| *d += gi * kernels::silu_grad(x))
            }),
            Op::Tanh(a) => with(*a, &mut |da| {
                da.iter_mut().zip(g).zip(node.value.data()).for_each(|((d, &gi), &y)| *d += gi * (S::one() - y * y))
            }),
            Op::Softmax(a) => {
                let n = node.value.shape()[1];
                with(*a, &mut |da| {
                    for ((dr, gr), yr) in da.chunks_mut(n).zip(g.chunks(n)).zip(node.value.data().chunks(n)) {
                        let s = kernels::dot(gr, yr);
                        for j in 0..n {
                            dr[j] += yr[j] * (gr[j] - s);
                        }
                    }
                })
            }
            Op::RmsNorm { x, gain, inv } => {
                let n = node.value.shape()[1];
                let (xs, gs) = (val(*x), val(*gain));
                let mut dx = nodes[x.0].tracked.then(|| vec![S::zero(); xs.len()]);
                let mut dg = nodes[gain.0].tracked.then(|| vec![S::zero(); n]);
                kernels::rms_norm_backward(xs, gs, inv, g, n, dx.as_deref_mut(), dg.as_deref_mut());
                if let Some(d) = dx {
                    with(*x, &mut |buf| kernels::axpy(S::one(), &d, buf));
                }
                if let Some(d) = dg {
                    with(*gain, &mut |buf| kernels::axpy(S::one(), &d, buf));
                }
            }
            Op::Conv1d { input, kernel, geom } => {
                let mut di = nodes[input.0].tracked.then(|| vec![S::zero(); geom.time * geom.c_in]);
                let mut dk = nodes[kernel.0].tracked.then(|| vec![S::zero(); geom.width * geom.c_in * geom.c_out]);
                kernels::conv1d_backward(val(*input), val(*kernel), g, *geom, di.as_deref_mut(), dk.as_deref_mut());
                if let Some(d) = di {
                    with(*input, &mut |buf| kernels::axpy(S::one(), &d, buf));
                }
                if let Some(d) = dk {
                    with(*kernel, &mut |buf| kernels::axpy(S::one(), &d, buf));
                }
            }
            Op::Rope { x, heads, table } => with(*x, &mut |dx| {
                let mut back = g.to_vec();
                table.rotate(&mut back, *heads, true);
                kernels::axpy(S::one(), &back, dx);
            }),
            Op::Attention { q, k, v, geom, probs } => {
                let mut dq = vec![S::zero(); geom.lq * geom.dim];
                let mut dk = vec![S::zero(); geom.lk * geom.dim];
                let mut dv = vec![S::zero(); geom.lk * geom.dim];
                kernels::attention_backward(val(*q), val(*k), val(*v), probs, g, *geom, &mut dq, &mut dk, &mut dv);
                with(*q, &mut |buf| kernels::axpy(S::one(), &dq, buf));
                with(*k, &mut |buf| kernels::axpy(S::one(), &dk, buf));
                with(*v, &mut |buf| kernels::axpy(S::one(), &dv, buf));
            }
            Op::Embedding { table, ids } => {
                let dim = node.value.shape()[1];
                with(*table, &mut |dt| {
                    for (r, &id) in ids.iter().enumerate() {
                        kernels::axpy(S::one(), &g[r * dim..(r + 1) * dim], &mut dt[id * dim..(id + 1) * dim]);
                    }
                })
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let rows = targets.len();
                let vocab = probs.len() / rows.max(1);
                let s = g[0] / S::lit(rows.max(1) as f64);
                with(*logits, &mut |dl| {
                    for (r, &t) in targets.iter().enumerate() {
                        let row = &mut dl[r * vocab..(r + 1) * vocab];
                        kernels::axpy(s, &probs[r * vocab..(r + 1) * vocab], row);
                        row[t] -= s;
                    }
                })
            }
        }
    }
}
