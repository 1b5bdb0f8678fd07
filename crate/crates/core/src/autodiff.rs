//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied to its nodes in execution
//! order, so the node list is already a topological order. Parameters live in
//! a [`ParamStore`] and are borrowed by the graph rather than copied;
//! [`Graph::backward`] returns one gradient tensor per stored parameter.

use alloc::borrow::Cow;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::{all_finite, exp_shifted_in_place, gemm, max_of, softmax_rows_in_place, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named collection of learnable tensors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    /// Replaces a parameter, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        if self.tensors[id.0].shape() != value.shape() {
            return shape_err("ParamStore::set", format!("{:?} vs {:?}", self.tensors[id.0].shape(), value.shape()));
        }
        self.tensors[id.0] = value;
        Ok(())
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }
}

/// Gradients aligned with the parameters of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self { grads: store.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect() }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.grads
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn global_norm(&self) -> f32 {
        let sq: f64 = self.grads.iter().flat_map(|g| g.data().iter()).map(|&v| f64::from(v) * f64::from(v)).sum();
        libm::sqrt(sq) as f32
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f32) {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for g in &mut self.grads {
                g.data_mut().iter_mut().for_each(|v| *v *= s);
            }
        }
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul { a: usize, b: usize, tb: bool },
    Affine { x: usize, w: usize, b: usize },
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f32),
    AddScalar(usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    SoftmaxRows(usize),
    CrossEntropy { logits: usize, targets: Vec<usize>, probs: Vec<f32> },
    Gather { table: usize, ids: Vec<usize> },
    SliceCols { a: usize, start: usize },
    SliceRows { a: usize, start: usize },
    ConcatRows(Vec<usize>),
    GroupDot { q: usize, c: usize, group: usize },
    Sum(usize),
    Mean(usize),
    Reshape(usize),
}

#[derive(Debug)]
struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// A computation tape over parameters borrowed from a [`ParamStore`].
#[derive(Debug)]
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node<'p>>,
    param_nodes: BTreeMap<ParamId, usize>,
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self { store, nodes: Vec::new(), param_nodes: BTreeMap::new() }
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

    fn push(&mut self, op: &'static str, value: Tensor, node: Op, requires_grad: bool) -> Result<Var> {
        check_finite(op, &value)?;
        self.nodes.push(Node { value: Cow::Owned(value), op: node, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// The node for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&n) = self.param_nodes.get(&id) {
            return Var(n);
        }
        let store = self.store;
        self.nodes.push(Node { value: Cow::Borrowed(store.get(id)), op: Op::Param(id), requires_grad: true });
        let n = self.nodes.len() - 1;
        self.param_nodes.insert(id, n);
        Var(n)
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push("constant", t, Op::Constant, false)
    }

    /// `a · b`, or `a · bᵀ` when `transpose_b` is set.
    fn matmul_impl(&mut self, a: Var, b: Var, tb: bool) -> Result<Var> {
        let (ta, tbv) = (self.value(a), self.value(b));
        let (m, k) = (ta.rows(), ta.cols());
        let (bk, n) = if tb { (tbv.cols(), tbv.rows()) } else { (tbv.rows(), tbv.cols()) };
        if k != bk {
            return shape_err("matmul", format!("{:?} x {:?} (transpose_b={tb})", ta.shape(), tbv.shape()));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tbv.data(), tb, &mut out, 1.0, 0.0);
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul { a: a.0, b: b.0, tb }, rg)
    }

    /// `x · w + b` with `b` a row broadcast over the rows of `x`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (tx, tw, tbias) = (self.value(x), self.value(w), self.value(b));
        let (m, k, n) = (tx.rows(), tx.cols(), tw.cols());
        if tw.rows() != k || tbias.len() != n {
            return shape_err("affine", format!("{:?} x {:?} + {:?}", tx.shape(), tw.shape(), tbias.shape()));
        }
        let mut out = Vec::with_capacity(m * n);
        for _ in 0..m {
            out.extend_from_slice(tbias.data());
        }
        gemm(m, k, n, tx.data(), false, tw.data(), false, &mut out, 1.0, 1.0);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        self.push("affine", Tensor::from_parts(vec![m, n], out), Op::Affine { x: x.0, w: w.0, b: b.0 }, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return shape_err(op, format!("{:?} vs {:?}", x.shape(), y.shape()));
        }
        Ok(())
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, node: Op, f: impl Fn(f32, f32) -> f32) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let t = Tensor::from_parts(x.shape().to_vec(), data);
        let rg = self.rg(a) || self.rg(b);
        self.push(op, t, node, rg)
    }

    fn map(&mut self, op: &'static str, a: Var, node: Op, f: impl Fn(f32) -> f32) -> Result<Var> {
        let x = self.value(a);
        let t = Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect());
        let rg = self.rg(a);
        self.push(op, t, node, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, Op::Add(a.0, b.0), |p, q| p + q)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, Op::Sub(a.0, b.0), |p, q| p - q)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, Op::Mul(a.0, b.0), |p, q| p * q)
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        let n = x.cols();
        if b.len() != n {
            return shape_err("add_row", format!("{:?} + row {:?}", x.shape(), b.shape()));
        }
        let mut data = x.data().to_vec();
        for row in data.chunks_exact_mut(n) {
            row.iter_mut().zip(b.data()).for_each(|(v, &c)| *v += c);
        }
        let t = Tensor::from_parts(x.shape().to_vec(), data);
        let rg = self.rg(a) || self.rg(bias);
        self.push("add_row", t, Op::AddRow(a.0, bias.0), rg)
    }

    pub fn scale(&mut self, a: Var, c: f32) -> Result<Var> {
        self.map("scale", a, Op::Scale(a.0, c), |v| v * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: f32) -> Result<Var> {
        self.map("add_scalar", a, Op::AddScalar(a.0), |v| v + c)
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let n = self.scale(a, -1.0)?;
        self.add_scalar(n, 1.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, Op::Sigmoid(a.0), |v| 1.0 / (1.0 + libm::expf(-v)))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map("tanh", a, Op::Tanh(a.0), libm::tanhf)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map("relu", a, Op::Relu(a.0), |v| v.max(0.0))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let mut data = x.data().to_vec();
        softmax_rows_in_place(&mut data, x.cols());
        let t = Tensor::from_parts(x.shape().to_vec(), data);
        let rg = self.rg(a);
        self.push("softmax_rows", t, Op::SoftmaxRows(a.0), rg)
    }

    /// Mean over rows of `-log softmax(logits)[target]`, as a scalar.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let x = self.value(logits);
        let (n, k) = (x.rows(), x.cols());
        if targets.len() != n || targets.iter().any(|&t| t >= k) {
            return shape_err("cross_entropy", format!("{} targets for {:?} logits", targets.len(), x.shape()));
        }
        let mut probs = x.data().to_vec();
        let mut total = 0.0f64;
        for (row, (p, &t)) in x.data().chunks_exact(k).zip(probs.chunks_exact_mut(k).zip(targets)) {
            let max = max_of(row);
            let sum = exp_shifted_in_place(p, max);
            let inv = 1.0 / sum;
            p.iter_mut().for_each(|q| *q *= inv);
            total += f64::from(max + libm::logf(sum) - row[t]);
        }
        let loss = (total / n as f64) as f32;
        let rg = self.rg(logits);
        self.push(
            "cross_entropy",
            Tensor::scalar(loss),
            Op::CrossEntropy { logits: logits.0, targets: targets.to_vec(), probs },
            rg,
        )
    }

    /// Softmax probabilities computed by a cross-entropy node.
    pub fn cross_entropy_probs(&self, v: Var) -> Option<&[f32]> {
        match &self.nodes[v.0].op {
            Op::CrossEntropy { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Rows `ids` of `table`, stacked.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (v, d) = (t.rows(), t.cols());
        if ids.is_empty() || ids.iter().any(|&i| i >= v) {
            return shape_err("gather", format!("ids out of range for table {:?}", t.shape()));
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::from_parts(vec![ids.len(), d], data);
        let rg = self.rg(table);
        self.push("gather", out, Op::Gather { table: table.0, ids: ids.to_vec() }, rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = (x.rows(), x.cols());
        if len == 0 || start + len > c {
            return shape_err("slice_cols", format!("[{start}, {}) of {c} columns", start + len));
        }
        let mut data = Vec::with_capacity(r * len);
        for row in x.data().chunks_exact(c) {
            data.extend_from_slice(&row[start..start + len]);
        }
        let t = Tensor::from_parts(vec![r, len], data);
        let rg = self.rg(a);
        self.push("slice_cols", t, Op::SliceCols { a: a.0, start }, rg)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = (x.rows(), x.cols());
        if len == 0 || start + len > r {
            return shape_err("slice_rows", format!("[{start}, {}) of {r} rows", start + len));
        }
        let t = Tensor::from_parts(vec![len, c], x.data()[start * c..(start + len) * c].to_vec());
        let rg = self.rg(a);
        self.push("slice_rows", t, Op::SliceRows { a: a.0, start }, rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat_rows", "no inputs".into());
        };
        let c = self.value(first).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let x = self.value(p);
            if x.cols() != c {
                return shape_err("concat_rows", format!("column mismatch {} vs {c}", x.cols()));
            }
            rows += x.rows();
            data.extend_from_slice(x.data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let t = Tensor::from_parts(vec![rows, c], data);
        self.push("concat_rows", t, Op::ConcatRows(parts.iter().map(|p| p.0).collect()), rg)
    }

    /// Grouped dot products: `out[b, j] = q[b] · c[b * group + j]`.
    pub fn group_dot(&mut self, q: Var, c: Var, group: usize) -> Result<Var> {
        let (x, y) = (self.value(q), self.value(c));
        let (b, d) = (x.rows(), x.cols());
        if group == 0 || y.rows() != b * group || y.cols() != d {
            return shape_err("group_dot", format!("{:?} against {:?} in groups of {group}", x.shape(), y.shape()));
        }
        let mut data = vec![0.0; b * group];
        for i in 0..b {
            let qi = x.row(i);
            for j in 0..group {
                data[i * group + j] = dot(qi, y.row(i * group + j));
            }
        }
        let rg = self.rg(q) || self.rg(c);
        self.push("group_dot", Tensor::from_parts(vec![b, group], data), Op::GroupDot { q: q.0, c: c.0, group }, rg)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f32 = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push("sum", Tensor::scalar(s), Op::Sum(a.0), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let s = x.data().iter().sum::<f32>() / x.len() as f32;
        let rg = self.rg(a);
        self.push("mean", Tensor::scalar(s), Op::Mean(a.0), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        self.push("reshape", t, Op::Reshape(a.0), rg)
    }

    /// Relaxed categorical sample `softmax((logits + noise) / temperature)`.
    ///
    /// `noise` holds standard Gumbel draws, or zeros for a deterministic
    /// relaxation.
    pub fn gumbel_softmax(&mut self, logits: Var, noise: &Tensor, temperature: f32) -> Result<Var> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidConfig(format!("temperature must be positive, got {temperature}")));
        }
        let n = self.constant(noise.clone())?;
        let perturbed = self.add(logits, n)?;
        let scaled = self.scale(perturbed, 1.0 / temperature)?;
        self.softmax_rows(scaled)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return shape_err("backward", format!("loss must be scalar, got {:?}", self.value(loss).shape()));
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::zeros_like(self.store);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if !all_finite(&g) {
                return Err(Error::NonFinite("backward"));
            }
            let y = &node.value;
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    out.grads[id.0].data_mut().iter_mut().zip(&g).for_each(|(o, v)| *o += v);
                }
                &Op::MatMul { a, b, tb } => {
                    let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
                    let (m, k) = (va.rows(), va.cols());
                    let n = y.cols();
                    if self.nodes[a].requires_grad {
                        let da = acc(&mut grads, a, m * k);
                        // dA = dC · op(B)ᵀ
                        gemm(m, n, k, &g, false, vb.data(), !tb, da, 1.0, 1.0);
                    }
                    if self.nodes[b].requires_grad {
                        let db = acc(&mut grads, b, k * n);
                        if tb {
                            gemm(n, m, k, &g, true, va.data(), false, db, 1.0, 1.0);
                        } else {
                            gemm(k, m, n, va.data(), true, &g, false, db, 1.0, 1.0);
                        }
                    }
                }
                &Op::Affine { x, w, b } => {
                    let (vx, vw) = (&self.nodes[x].value, &self.nodes[w].value);
                    let (m, k, n) = (vx.rows(), vx.cols(), vw.cols());
                    if self.nodes[x].requires_grad {
                        let dx = acc(&mut grads, x, m * k);
                        gemm(m, n, k, &g, false, vw.data(), true, dx, 1.0, 1.0);
                    }
                    if self.nodes[w].requires_grad {
                        let dw = acc(&mut grads, w, k * n);
                        gemm(k, m, n, vx.data(), true, &g, false, dw, 1.0, 1.0);
                    }
                    if self.nodes[b].requires_grad {
                        let db = acc(&mut grads, b, n);
                        for row in g.chunks_exact(n) {
                            db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                        }
                    }
                }
                &Op::Add(a, b) => {
                    self.acc_add(&mut grads, a, &g, 1.0);
                    self.acc_add(&mut grads, b, &g, 1.0);
                }
                &Op::Sub(a, b) => {
                    self.acc_add(&mut grads, a, &g, 1.0);
                    self.acc_add(&mut grads, b, &g, -1.0);
                }
                &Op::Mul(a, b) => {
                    if self.nodes[a].requires_grad {
                        let vb = self.nodes[b].value.data();
                        let da = acc(&mut grads, a, g.len());
                        da.iter_mut().zip(g.iter().zip(vb)).for_each(|(d, (gv, bv))| *d += gv * bv);
                    }
                    if self.nodes[b].requires_grad {
                        let va = self.nodes[a].value.data();
                        let db = acc(&mut grads, b, g.len());
                        db.iter_mut().zip(g.iter().zip(va)).for_each(|(d, (gv, av))| *d += gv * av);
                    }
                }
                &Op::AddRow(a, bias) => {
                    self.acc_add(&mut grads, a, &g, 1.0);
                    if self.nodes[bias].requires_grad {
                        let n = y.cols();
                        let db = acc(&mut grads, bias, n);
                        for row in g.chunks_exact(n) {
                            db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                        }
                    }
                }
                &Op::Scale(a, c) => self.acc_add(&mut grads, a, &g, c),
                &Op::AddScalar(a) | &Op::Reshape(a) => self.acc_add(&mut grads, a, &g, 1.0),
                &Op::Sigmoid(a) => {
                    let da = acc(&mut grads, a, g.len());
                    for ((d, gv), yv) in da.iter_mut().zip(&g).zip(y.data()) {
                        *d += gv * yv * (1.0 - yv);
                    }
                }
                &Op::Tanh(a) => {
                    let da = acc(&mut grads, a, g.len());
                    for ((d, gv), yv) in da.iter_mut().zip(&g).zip(y.data()) {
                        *d += gv * (1.0 - yv * yv);
                    }
                }
                &Op::Relu(a) => {
                    let da = acc(&mut grads, a, g.len());
                    for ((d, gv), yv) in da.iter_mut().zip(&g).zip(y.data()) {
                        if *yv > 0.0 {
                            *d += gv;
                        }
                    }
                }
                &Op::SoftmaxRows(a) => {
                    let c = y.cols();
                    let da = acc(&mut grads, a, g.len());
                    for ((drow, grow), yrow) in
                        da.chunks_exact_mut(c).zip(g.chunks_exact(c)).zip(y.data().chunks_exact(c))
                    {
                        let s = dot(grow, yrow);
                        for ((d, gv), yv) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += yv * (gv - s);
                        }
                    }
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let k = probs.len() / targets.len();
                    let scale = g[0] / targets.len() as f32;
                    let dl = acc(&mut grads, *logits, probs.len());
                    for (r, &t) in targets.iter().enumerate() {
                        let row = &mut dl[r * k..(r + 1) * k];
                        for (d, p) in row.iter_mut().zip(&probs[r * k..(r + 1) * k]) {
                            *d += scale * p;
                        }
                        row[t] -= scale;
                    }
                }
                Op::Gather { table, ids } => {
                    let tv = &self.nodes[*table].value;
                    let d = tv.cols();
                    let dt = acc(&mut grads, *table, tv.len());
                    for (r, &id) in ids.iter().enumerate() {
                        let dst = &mut dt[id * d..(id + 1) * d];
                        dst.iter_mut().zip(&g[r * d..(r + 1) * d]).for_each(|(o, v)| *o += v);
                    }
                }
                &Op::SliceCols { a, start } => {
                    let src_cols = self.nodes[a].value.cols();
                    let len = y.cols();
                    let da = acc(&mut grads, a, self.nodes[a].value.len());
                    for (drow, grow) in da.chunks_exact_mut(src_cols).zip(g.chunks_exact(len)) {
                        drow[start..start + len].iter_mut().zip(grow).for_each(|(o, v)| *o += v);
                    }
                }
                &Op::SliceRows { a, start } => {
                    let c = y.cols();
                    let da = acc(&mut grads, a, self.nodes[a].value.len());
                    da[start * c..start * c + g.len()].iter_mut().zip(&g).for_each(|(o, v)| *o += v);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.nodes[p].value.len();
                        self.acc_add(&mut grads, p, &g[off..off + n], 1.0);
                        off += n;
                    }
                }
                &Op::GroupDot { q, c, group } => {
                    let (vq, vc) = (&self.nodes[q].value, &self.nodes[c].value);
                    let d = vq.cols();
                    if self.nodes[q].requires_grad {
                        let dq = acc(&mut grads, q, vq.len());
                        for (b, dqb) in dq.chunks_exact_mut(d).enumerate() {
                            for j in 0..group {
                                let w = g[b * group + j];
                                dqb.iter_mut().zip(vc.row(b * group + j)).for_each(|(o, v)| *o += w * v);
                            }
                        }
                    }
                    if self.nodes[c].requires_grad {
                        let dc = acc(&mut grads, c, vc.len());
                        for (r, dcr) in dc.chunks_exact_mut(d).enumerate() {
                            let w = g[r];
                            dcr.iter_mut().zip(vq.row(r / group)).for_each(|(o, v)| *o += w * v);
                        }
                    }
                }
                &Op::Sum(a) => {
                    let n = self.nodes[a].value.len();
                    acc(&mut grads, a, n).iter_mut().for_each(|o| *o += g[0]);
                }
                &Op::Mean(a) => {
                    let n = self.nodes[a].value.len();
                    let v = g[0] / n as f32;
                    acc(&mut grads, a, n).iter_mut().for_each(|o| *o += v);
                }
            }
        }
        if out.grads.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("backward"));
        }
        Ok(out)
    }

    fn acc_add(&self, grads: &mut [Option<Vec<f32>>], idx: usize, g: &[f32], c: f32) {
        if !self.nodes[idx].requires_grad {
            return;
        }
        let d = acc(grads, idx, g.len());
        if c == 1.0 {
            d.iter_mut().zip(g).for_each(|(o, v)| *o += v);
        } else {
            d.iter_mut().zip(g).for_each(|(o, v)| *o += c * v);
        }
    }
}

fn acc(grads: &mut [Option<Vec<f32>>], idx: usize, len: usize) -> &mut [f32] {
    grads[idx].get_or_insert_with(|| vec![0.0; len])
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
