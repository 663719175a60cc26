//! The tape: an append-only list of nodes built during the forward pass.
//!
//! Nodes are pushed in evaluation order, so every node's inputs precede it and
//! a single reverse sweep visits each node once. Activations are stored with
//! the node; no intermediate is recomputed during backward.

use crate::autodiff::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative at `x`, with the relu derivative at 0 fixed to 0.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Param,
    /// `a · b` or `a · bᵀ`.
    MatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Adds a vector to every row.
    AddRow(Var, Var),
    /// Multiplies every row componentwise by a vector.
    MulRow(Var, Var),
    /// Scales row `i` of `x` by `d[i]`.
    DiagScale {
        d: Var,
        x: Var,
    },
    Scale(Var, f64),
    Act(Activation, Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Sum(Var),
    Mean(Var),
    Mse(Var, Var),
    /// Mean over rows of `-log softmax(row)[target]`; stores the softmax.
    SoftmaxXent {
        logits: Var,
        targets: Vec<usize>,
        probs: Tensor,
    },
    /// Row lookup into a table.
    Gather {
        table: Var,
        rows: Vec<usize>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Tensor>,
}

impl Gradients {
    /// Gradient of a parameter; zero when the loss does not reach it.
    pub fn param(&self, id: ParamId) -> &Tensor {
        &self.params[id.index()]
    }

    /// Gradient of a leaf node (input or parameter), if the loss reaches it.
    pub fn var(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].as_ref()
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn into_params(self) -> Vec<Tensor> {
        self.params
    }
}

/// `[outer, axis_len, inner]` view of a shape around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant input.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, false)
    }

    /// An input whose gradient is recorded.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, true)
    }

    /// The node for a parameter. Repeated calls return the same node, so all
    /// uses accumulate into one gradient.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        let value = self.store.value(id).clone();
        let v = self.push(value, Op::Param, true);
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ`, the usual `x Wᵀ` of a batched linear map.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() > 2 || bv.shape().len() != 2 {
            return Err(Error::shape("matmul", av.shape(), bv.shape()));
        }
        let (m, k) = (av.rows(), av.cols());
        let (k2, n) = if trans_b {
            (bv.cols(), bv.rows())
        } else {
            (bv.rows(), bv.cols())
        };
        if k != k2 {
            return Err(Error::shape("matmul", av.shape(), bv.shape()));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), trans_b, &mut out, 0.0);
        let shape: Vec<usize> = if av.shape().len() == 1 { vec![n] } else { vec![m, n] };
        let value = Tensor::new(&shape, out)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::MatMul { a, b, trans_b }, ng))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Sub(a, b), ng))
    }

    /// Hadamard product of equal shapes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Mul(a, b), ng))
    }

    fn row_broadcast(&self, op: &'static str, a: Var, r: Var) -> Result<()> {
        let (av, rv) = (self.value(a), self.value(r));
        if rv.shape().len() != 1 || av.cols() != rv.numel() {
            return Err(Error::shape(op, av.shape(), rv.shape()));
        }
        Ok(())
    }

    /// Adds vector `r` to every row of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Result<Var> {
        self.row_broadcast("add_row", a, r)?;
        let rv = self.value(r).data().to_vec();
        let mut value = self.value(a).clone();
        for chunk in value.data_mut().chunks_mut(rv.len()) {
            for (x, y) in chunk.iter_mut().zip(&rv) {
                *x += y;
            }
        }
        let ng = self.ng(a) || self.ng(r);
        Ok(self.push(value, Op::AddRow(a, r), ng))
    }

    /// Multiplies every row of `a` componentwise by vector `r`.
    pub fn mul_row(&mut self, a: Var, r: Var) -> Result<Var> {
        self.row_broadcast("mul_row", a, r)?;
        let rv = self.value(r).data().to_vec();
        let mut value = self.value(a).clone();
        for chunk in value.data_mut().chunks_mut(rv.len()) {
            for (x, y) in chunk.iter_mut().zip(&rv) {
                *x *= y;
            }
        }
        let ng = self.ng(a) || self.ng(r);
        Ok(self.push(value, Op::MulRow(a, r), ng))
    }

    /// `diag(d) · x`: scales row `i` of `x` by `d[i]`. A vector `x` is
    /// treated as a column.
    pub fn diag_scale(&mut self, d: Var, x: Var) -> Result<Var> {
        let (dv, xv) = (self.value(d), self.value(x));
        let rows = if xv.shape().len() == 1 { xv.numel() } else { xv.rows() };
        if dv.shape().len() != 1 || dv.numel() != rows {
            return Err(Error::shape("diag_scale", dv.shape(), xv.shape()));
        }
        let inner = xv.numel() / rows;
        let mut value = xv.clone();
        for (i, &s) in dv.data().iter().enumerate() {
            for v in &mut value.data_mut()[i * inner..(i + 1) * inner] {
                *v *= s;
            }
        }
        let ng = self.ng(d) || self.ng(x);
        Ok(self.push(value, Op::DiagScale { d, x }, ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        let ng = self.ng(a);
        self.push(value, Op::Scale(a, c), ng)
    }

    pub fn activation(&mut self, kind: Activation, a: Var) -> Var {
        if kind == Activation::Identity {
            return a;
        }
        let value = self.value(a).map(|x| kind.apply(x));
        let ng = self.ng(a);
        self.push(value, Op::Act(kind, a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(Activation::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(Activation::Tanh, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(Activation::Relu, a)
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.value(parts[0]).shape().to_vec();
        if axis >= first.len() {
            return Err(Error::extent("concat", format!("axis {axis} for shape {first:?}")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.value(p).shape();
            let agrees =
                s.len() == first.len() && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !agrees {
                return Err(Error::shape("concat", &first, s));
            }
            total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&first, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let pv = self.value(p);
                let block = pv.shape()[axis] * inner;
                data.extend_from_slice(&pv.data()[o * block..(o + 1) * block]);
            }
        }
        let value = Tensor::new(&shape, data)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            ng,
        ))
    }

    /// Slice `start..start + len` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.value(x).shape().to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::extent("narrow", format!("range {start}..{} on axis {axis} of {s:?}", start + len)));
        }
        let (outer, ext, inner) = split_axis(&s, axis);
        let xv = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * ext * inner + start * inner;
            data.extend_from_slice(&xv[base..base + len * inner]);
        }
        let mut shape = s.clone();
        shape[axis] = len;
        let value = Tensor::new(&shape, data)?;
        let ng = self.ng(x);
        Ok(self.push(value, Op::Narrow { x, axis, start }, ng))
    }

    /// Splits along `axis` into consecutive pieces of the given sizes.
    pub fn split(&mut self, x: Var, axis: usize, sizes: &[usize]) -> Result<Vec<Var>> {
        let ext = self.value(x).shape().get(axis).copied().unwrap_or(0);
        if sizes.iter().sum::<usize>() != ext {
            return Err(Error::extent("split", format!("sizes {sizes:?} do not cover extent {ext}")));
        }
        let mut start = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &n in sizes {
            out.push(self.narrow(x, axis, start, n)?);
            start += n;
        }
        Ok(out)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(value, Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let value = Tensor::scalar(v.sum() / v.numel() as f64);
        let ng = self.ng(a);
        self.push(value, Op::Mean(a), ng)
    }

    /// Mean squared difference.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape("mse", pred, target)?;
        let (p, t) = (self.value(pred), self.value(target));
        let n = p.numel() as f64;
        let s: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b).powi(2)).sum();
        let ng = self.ng(pred) || self.ng(target);
        Ok(self.push(Tensor::scalar(s / n), Op::Mse(pred, target), ng))
    }

    /// Mean over rows of `-log softmax(logits_row)[target_row]`. A vector of
    /// logits is a single row.
    pub fn softmax_xent(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let (rows, cols) = (lv.rows(), lv.cols());
        if targets.len() != rows {
            return Err(Error::extent("softmax_xent", format!("{} targets for {rows} rows", targets.len())));
        }
        let mut probs = vec![0.0; rows * cols];
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            if t >= cols {
                return Err(Error::IndexOutOfRange { index: t, extent: cols });
            }
            let row = lv.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + z.ln();
            loss += log_z - row[t];
            for (p, v) in probs[r * cols..(r + 1) * cols].iter_mut().zip(row) {
                *p = (v - log_z).exp();
            }
        }
        let probs = Tensor::new(&[rows, cols], probs)?;
        let ng = self.ng(logits);
        Ok(self.push(
            Tensor::scalar(loss / rows as f64),
            Op::SoftmaxXent {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            ng,
        ))
    }

    /// Selects rows of a `[n × d]` table.
    pub fn gather(&mut self, table: Var, rows: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if tv.shape().len() != 2 || rows.is_empty() {
            return Err(Error::extent("gather", format!("table shape {:?}", tv.shape())));
        }
        let (n, d) = (tv.rows(), tv.cols());
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            if r >= n {
                return Err(Error::IndexOutOfRange { index: r, extent: n });
            }
            data.extend_from_slice(tv.row(r));
        }
        let value = Tensor::new(&[rows.len(), d], data)?;
        let ng = self.ng(table);
        Ok(self.push(
            value,
            Op::Gather {
                table,
                rows: rows.to_vec(),
            },
            ng,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let is_leaf = matches!(node.op, Op::Input | Op::Param);
            let g = if is_leaf {
                continue;
            } else {
                match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                }
            };
            self.propagate(i, &g, &mut grads)?;
        }

        let mut params: Vec<Tensor> = self.store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        for (pid, slot) in self.param_vars.iter().enumerate() {
            if let Some(v) = slot {
                if let Some(g) = &grads[v.0] {
                    params[pid] = g.clone();
                }
            }
        }
        Ok(Gradients { nodes: grads, params })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Input | Op::Param => {}
            Op::MatMul { a, b, trans_b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.rows(), av.cols());
                let n = g.cols();
                if self.ng(*a) {
                    // dA = dC · op(B)ᵀ
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, bv.data(), !trans_b, &mut da, 0.0);
                    self.accumulate(grads, *a, Tensor::new(av.shape(), da)?);
                }
                if self.ng(*b) {
                    let mut db = vec![0.0; k * n];
                    if *trans_b {
                        // B is n×k: dB = dCᵀ · A
                        gemm(n, m, k, g.data(), true, av.data(), false, &mut db, 0.0);
                    } else {
                        // dB = Aᵀ · dC
                        gemm(k, m, n, av.data(), true, g.data(), false, &mut db, 0.0);
                    }
                    self.accumulate(grads, *b, Tensor::new(bv.shape(), db)?);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    self.accumulate(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if self.ng(*b) {
                    self.accumulate(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::AddRow(a, r) => {
                self.accumulate(grads, *a, g.clone());
                if self.ng(*r) {
                    let n = self.value(*r).numel();
                    let mut dr = vec![0.0; n];
                    for chunk in g.data().chunks(n) {
                        for (d, x) in dr.iter_mut().zip(chunk) {
                            *d += x;
                        }
                    }
                    self.accumulate(grads, *r, Tensor::new(&[n], dr)?);
                }
            }
            Op::MulRow(a, r) => {
                let rv = self.value(*r).data();
                let n = rv.len();
                if self.ng(*a) {
                    let mut da = g.clone();
                    for chunk in da.data_mut().chunks_mut(n) {
                        for (x, y) in chunk.iter_mut().zip(rv) {
                            *x *= y;
                        }
                    }
                    self.accumulate(grads, *a, da);
                }
                if self.ng(*r) {
                    let av = self.value(*a).data();
                    let mut dr = vec![0.0; n];
                    for (gc, ac) in g.data().chunks(n).zip(av.chunks(n)) {
                        for j in 0..n {
                            dr[j] += gc[j] * ac[j];
                        }
                    }
                    self.accumulate(grads, *r, Tensor::new(&[n], dr)?);
                }
            }
            Op::DiagScale { d, x } => {
                let dv = self.value(*d).data();
                let xv = self.value(*x);
                let inner = xv.numel() / dv.len();
                if self.ng(*x) {
                    let mut dx = g.clone();
                    for (i, &s) in dv.iter().enumerate() {
                        for v in &mut dx.data_mut()[i * inner..(i + 1) * inner] {
                            *v *= s;
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                if self.ng(*d) {
                    let dd: Vec<f64> = (0..dv.len())
                        .map(|i| {
                            let r = i * inner..(i + 1) * inner;
                            g.data()[r.clone()].iter().zip(&xv.data()[r]).map(|(a, b)| a * b).sum()
                        })
                        .collect();
                    self.accumulate(grads, *d, Tensor::new(&[dv.len()], dd)?);
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.scale(*c)),
            Op::Act(kind, a) => {
                let y = &node.value;
                let da = match kind {
                    Activation::Identity => g.clone(),
                    Activation::Sigmoid => g.zip_map(y, |gv, s| gv * s * (1.0 - s)),
                    Activation::Tanh => g.zip_map(y, |gv, t| gv * (1.0 - t * t)),
                    Activation::Relu => g.zip_map(y, |gv, r| if r > 0.0 { gv } else { 0.0 }),
                };
                self.accumulate(grads, *a, da);
            }
            Op::Concat { parts, axis } => {
                let shape = node.value.shape();
                let (outer, total, inner) = split_axis(shape, *axis);
                let mut offset = 0;
                for &p in parts {
                    let ps = self.value(p).shape().to_vec();
                    let len = ps[*axis];
                    if self.ng(p) {
                        let mut data = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let base = o * total * inner + offset * inner;
                            data.extend_from_slice(&g.data()[base..base + len * inner]);
                        }
                        self.accumulate(grads, p, Tensor::new(&ps, data)?);
                    }
                    offset += len;
                }
            }
            Op::Narrow { x, axis, start } => {
                let xs = self.value(*x).shape().to_vec();
                let (outer, ext, inner) = split_axis(&xs, *axis);
                let len = node.value.shape()[*axis];
                let mut dx = Tensor::zeros(&xs);
                for o in 0..outer {
                    let base = o * ext * inner + start * inner;
                    let src = &g.data()[o * len * inner..(o + 1) * len * inner];
                    dx.data_mut()[base..base + len * inner].copy_from_slice(src);
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Sum(a) => {
                let s = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, Tensor::full(&s, g.item()));
            }
            Op::Mean(a) => {
                let av = self.value(*a);
                let c = g.item() / av.numel() as f64;
                self.accumulate(grads, *a, Tensor::full(av.shape(), c));
            }
            Op::Mse(p, t) => {
                let (pv, tv) = (self.value(*p), self.value(*t));
                let c = 2.0 * g.item() / pv.numel() as f64;
                let dp = pv.zip_map(tv, |a, b| c * (a - b));
                if self.ng(*t) {
                    self.accumulate(grads, *t, dp.scale(-1.0));
                }
                self.accumulate(grads, *p, dp);
            }
            Op::SoftmaxXent { logits, targets, probs } => {
                let rows = targets.len();
                let c = g.item() / rows as f64;
                let cols = probs.cols();
                let mut dl = probs.scale(c);
                for (r, &t) in targets.iter().enumerate() {
                    dl.data_mut()[r * cols + t] -= c;
                }
                let dl = dl.reshape(self.value(*logits).shape())?;
                self.accumulate(grads, *logits, dl);
            }
            Op::Gather { table, rows } => {
                let tv = self.value(*table);
                let d = tv.cols();
                let mut dt = Tensor::zeros(tv.shape());
                for (k, &r) in rows.iter().enumerate() {
                    let src = &g.data()[k * d..(k + 1) * d];
                    for (x, y) in dt.data_mut()[r * d..(r + 1) * d].iter_mut().zip(src) {
                        *x += y;
                    }
                }
                self.accumulate(grads, *table, dt);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        ParamStore::new()
    }

    #[test]
    fn matmul_examples() {
        let s = store();
        let mut g = Graph::new(&s);
        let i2 = g.input(Tensor::eye(2));
        let b = g.input(Tensor::matrix(&[[3.0], [4.0]]));
        let c = g.matmul(i2, b).unwrap();
        assert_eq!(g.value(c).data(), &[3.0, 4.0]);

        let a = g.input(Tensor::matrix(&[[1.0, 2.0], [3.0, 4.0]]));
        let b = g.leaf(Tensor::matrix(&[[1.0], [1.0]]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[3.0, 7.0]);
        let loss = g.sum(c);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.var(b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let s = store();
        let mut g = Graph::new(&s);
        let a = g.input(Tensor::zeros(&[2, 3]));
        let b = g.input(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("matmul"), "{err}");
    }

    #[test]
    fn activations_at_known_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert_eq!(Activation::Relu.apply(0.0), 0.0);
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert!((Activation::Tanh.derivative(1.0) - 0.41997).abs() < 1e-5);
        assert!(sigmoid(-800.0).is_finite() && sigmoid(800.0) == 1.0);
    }

    #[test]
    fn diag_scale_examples() {
        let s = store();
        let mut g = Graph::new(&s);
        let d = g.input(Tensor::vector(&[2.0, 3.0]));
        let x = g.leaf(Tensor::vector(&[5.0, 7.0]));
        let y = g.diag_scale(d, x).unwrap();
        assert_eq!(g.value(y).data(), &[10.0, 21.0]);

        let zero = g.input(Tensor::zeros(&[2]));
        let y0 = g.diag_scale(zero, x).unwrap();
        assert_eq!(g.value(y0).data(), &[0.0, 0.0]);
        let l = g.sum(y0);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.var(x).unwrap().data(), &[0.0, 0.0]);

        let bad = g.input(Tensor::zeros(&[3]));
        assert!(g.diag_scale(bad, x).is_err());
    }

    #[test]
    fn concat_and_split() {
        let s = store();
        let mut g = Graph::new(&s);
        let a = g.input(Tensor::vector(&[1.0, 2.0]));
        let b = g.input(Tensor::vector(&[3.0]));
        let c = g.concat(&[a, b], 0).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0]);
        let single = g.concat(&[a], 0).unwrap();
        assert_eq!(g.value(single), g.value(a));
        let m1 = g.input(Tensor::zeros(&[2, 3]));
        let m2 = g.input(Tensor::zeros(&[3, 3]));
        assert!(g.concat(&[m1, m2], 1).is_err());
        assert!(g.split(c, 0, &[1, 1]).is_err());
    }

    #[test]
    fn losses() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.input(Tensor::vector(&[1.0, 2.0]));
        let z = g.input(Tensor::vector(&[0.0, 0.0]));
        let l = g.mse(x, x).unwrap();
        assert_eq!(g.value(l).item(), 0.0);
        let l = g.mse(x, z).unwrap();
        assert_eq!(g.value(l).item(), 2.5);

        let logits = g.input(Tensor::zeros(&[7]));
        for idx in 0..7 {
            let l = g.softmax_xent(logits, &[idx]).unwrap();
            assert!((g.value(l).item() - 7f64.ln()).abs() < 1e-14);
        }
        assert!(matches!(g.softmax_xent(logits, &[7]), Err(Error::IndexOutOfRange { index: 7, extent: 7 })));
    }

    #[test]
    fn backward_simple_cases() {
        let mut s = store();
        let w = s.insert("w", Tensor::vector(&[0.5, -1.5, 2.0]), crate::Init::Zeros);
        let unused = s.insert("unused", Tensor::vector(&[1.0]), crate::Init::Zeros);
        let mut g = Graph::new(&s);
        let wv = g.param(w);
        let l = g.sum(wv);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.param(w).data(), &[1.0, 1.0, 1.0]);
        assert_eq!(grads.param(unused).data(), &[0.0]);

        let mut g = Graph::new(&s);
        let wv = g.param(w);
        let sq = g.mul(wv, wv).unwrap();
        let sum = g.sum(sq);
        let l = g.scale(sum, 0.5);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.param(w).data(), s.value(w).data());

        assert!(matches!(g.backward(wv), Err(Error::NonScalarLoss(_))));
    }
}
