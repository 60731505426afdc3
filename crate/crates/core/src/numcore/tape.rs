//! Reverse-mode differentiation over a linear tape of matrix operations.
//!
//! Every operation appends a node holding its value and the inputs needed by
//! its backward rule. [`Tape::backward`] walks the tape once in reverse from a
//! scalar output, accumulating gradients into every node that (transitively)
//! depends on a leaf created with `requires_grad`.

use std::sync::Arc;

use rand::Rng;

use super::adjacency::Adjacency;
use super::functional::{check_dropout_rate, dropout_mask, sigmoid, Activation};
use super::tensor::{matmul_at, matmul_bt, matmul_raw, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum EdgeWeights {
    Const(Arc<Vec<f64>>),
    Var(Var),
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Arc<Vec<f64>>),
    Act(Var, Activation),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Arc<Vec<usize>>),
    PadRows(Var),
    Aggregate {
        x: Var,
        weights: EdgeWeights,
        adj: Arc<Adjacency>,
    },
    RowDot(Var, Var),
    SegmentSoftmax(Var, Arc<Adjacency>),
    SoftmaxRows(Var),
    BceLogits(Var, Arc<Vec<f64>>),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of a leaf. `None` when the leaf does not influence the output
    /// or was created without `requires_grad`.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Records an input. Gradients flow to it iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let needs_grad = t.requires_grad();
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.set_requires_grad(false);
        self.leaf(t)
    }

    /// Records a trainable copy of `t`.
    pub fn param(&mut self, t: &Tensor) -> Var {
        let mut t = t.clone();
        t.zero_grad();
        t.set_requires_grad(true);
        self.leaf(t)
    }

    fn push(&mut self, name: &'static str, rows: usize, cols: usize, values: Vec<f64>, op: Op) -> Result<Var> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite output from {name}")));
        }
        let needs_grad = self.inputs_need_grad(&op);
        self.nodes.push(Node {
            value: Tensor::from_parts(rows, cols, values),
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn inputs_need_grad(&self, op: &Op) -> bool {
        let ng = |v: &Var| self.nodes[v.0].needs_grad;
        match op {
            Op::Leaf => false,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) | Op::RowDot(a, b) => {
                ng(a) || ng(b)
            }
            Op::Scale(a, _)
            | Op::MulConst(a, _)
            | Op::Act(a, _)
            | Op::SliceCols(a, _)
            | Op::GatherRows(a, _)
            | Op::PadRows(a)
            | Op::SegmentSoftmax(a, _)
            | Op::SoftmaxRows(a)
            | Op::BceLogits(a, _)
            | Op::Sum(a)
            | Op::Mean(a) => ng(a),
            Op::ConcatCols(vs) | Op::ConcatRows(vs) => vs.iter().any(ng),
            Op::Aggregate { x, weights, .. } => ng(x) || matches!(weights, EdgeWeights::Var(w) if ng(w)),
        }
    }

    fn same_dims(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (ta, tb) = (self.value(a), self.value(b));
        if dims(ta) != dims(tb) {
            return Err(Error::shape(op, ta.shape(), tb.shape()));
        }
        Ok(dims(ta))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = dims(ta);
        let (k2, n) = dims(tb);
        if k != k2 {
            return Err(Error::shape("matmul", ta.shape(), tb.shape()));
        }
        let out = matmul_raw(ta.values(), tb.values(), m, k, n);
        self.push("matmul", m, n, out, Op::MatMul(a, b))
    }

    fn zip_with(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (r, c) = self.same_dims(name, a, b)?;
        let out = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(x, y)| f(*x, *y))
            .collect();
        self.push(name, r, c, out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a `1 × cols` bias to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let (r, c) = dims(tx);
        if tb.rows() != 1 || tb.cols() != c {
            return Err(Error::shape("add_row", tx.shape(), tb.shape()));
        }
        let b = tb.values();
        let out = tx
            .values()
            .chunks(c)
            .flat_map(|row| row.iter().zip(b).map(|(v, w)| v + w))
            .collect();
        self.push("add_row", r, c, out, Op::AddRow(x, bias))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let (r, c) = dims(self.value(x));
        let out = self.value(x).values().iter().map(|v| v * factor).collect();
        self.push("scale", r, c, out, Op::Scale(x, factor))
    }

    /// Elementwise product with a constant of the same size (masks).
    pub fn mul_const(&mut self, x: Var, factors: Arc<Vec<f64>>) -> Result<Var> {
        let tx = self.value(x);
        if factors.len() != tx.len() {
            return Err(Error::shape("mul_const", tx.shape(), &[factors.len()]));
        }
        let (r, c) = dims(tx);
        let out = tx.values().iter().zip(factors.iter()).map(|(v, f)| v * f).collect();
        self.push("mul_const", r, c, out, Op::MulConst(x, factors))
    }

    pub fn activate(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let (r, c) = dims(self.value(x));
        let out = self.value(x).values().iter().map(|&v| kind.apply(v)).collect();
        self.push("activate", r, c, out, Op::Act(x, kind))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activate(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.activate(x, Activation::Tanh)
    }

    /// Inverted dropout; the identity (no new node) when not training or when
    /// `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        check_dropout_rate(rate)?;
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let mask = dropout_mask(self.value(x).len(), rate, rng);
        self.mul_const(x, Arc::new(mask))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        let (r, c) = dims(tx);
        if len == 0 || start + len > c {
            return Err(Error::shape("slice_cols", tx.shape(), &[start, len]));
        }
        let out = tx
            .values()
            .chunks(c)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        self.push("slice_cols", r, len, out, Op::SliceCols(x, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Domain("concat_cols of nothing".into()))?;
        let r = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != r {
                return Err(Error::shape(
                    "concat_cols",
                    self.value(first).shape(),
                    self.value(p).shape(),
                ));
            }
        }
        let c: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        self.push("concat_cols", r, c, out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Domain("concat_rows of nothing".into()))?;
        let c = self.value(first).cols();
        for &p in parts {
            if self.value(p).cols() != c {
                return Err(Error::shape(
                    "concat_rows",
                    self.value(first).shape(),
                    self.value(p).shape(),
                ));
            }
        }
        let r: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut out = Vec::with_capacity(r * c);
        for &p in parts {
            out.extend_from_slice(self.value(p).values());
        }
        self.push("concat_rows", r, c, out, Op::ConcatRows(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let tx = self.value(x);
        let (r, c) = dims(tx);
        if idx.is_empty() {
            return Err(Error::Domain("gather_rows with no indices".into()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::Index(format!("gather_rows index {bad} >= {r} rows")));
        }
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx.iter() {
            out.extend_from_slice(tx.row(i));
        }
        let n = idx.len();
        self.push("gather_rows", n, c, out, Op::GatherRows(x, idx))
    }

    /// Appends zero rows so the result has `total` rows.
    pub fn pad_rows(&mut self, x: Var, total: usize) -> Result<Var> {
        let tx = self.value(x);
        let (r, c) = dims(tx);
        if total < r {
            return Err(Error::shape("pad_rows", tx.shape(), &[total, c]));
        }
        if total == r {
            return Ok(x);
        }
        let mut out = tx.values().to_vec();
        out.resize(total * c, 0.0);
        self.push("pad_rows", total, c, out, Op::PadRows(x))
    }

    fn check_aggregate(&self, x: Var, adj: &Adjacency) -> Result<(usize, usize)> {
        let tx = self.value(x);
        if tx.rows() != adj.n_src() {
            return Err(Error::shape("aggregate", tx.shape(), &[adj.n_src(), adj.n_dst()]));
        }
        Ok((adj.n_dst(), tx.cols()))
    }

    fn aggregate_values(&self, x: Var, w: &[f64], adj: &Adjacency) -> Vec<f64> {
        let tx = self.value(x);
        let c = tx.cols();
        let mut out = vec![0.0; adj.n_dst() * c];
        for (e, (&s, &d)) in adj.src().iter().zip(adj.dst()).enumerate() {
            let src_row = tx.row(s);
            let dst_row = &mut out[d * c..(d + 1) * c];
            for (o, v) in dst_row.iter_mut().zip(src_row) {
                *o += w[e] * v;
            }
        }
        out
    }

    /// `out[dst] += w_e · x[src]` with fixed per-entry weights.
    pub fn aggregate_const(&mut self, x: Var, adj: Arc<Adjacency>, weights: Arc<Vec<f64>>) -> Result<Var> {
        let (r, c) = self.check_aggregate(x, &adj)?;
        if weights.len() != adj.len() {
            return Err(Error::shape("aggregate_const", &[adj.len()], &[weights.len()]));
        }
        let out = self.aggregate_values(x, &weights, &adj);
        let op = Op::Aggregate {
            x,
            weights: EdgeWeights::Const(weights),
            adj,
        };
        self.push("aggregate_const", r, c, out, op)
    }

    /// `out[dst] += alpha_e · x[src]` with learned weights `alpha` (`E × 1`).
    pub fn aggregate(&mut self, x: Var, alpha: Var, adj: Arc<Adjacency>) -> Result<Var> {
        let (r, c) = self.check_aggregate(x, &adj)?;
        let ta = self.value(alpha);
        if dims(ta) != (adj.len(), 1) {
            return Err(Error::shape("aggregate", ta.shape(), &[adj.len(), 1]));
        }
        let w = ta.values().to_vec();
        let out = self.aggregate_values(x, &w, &adj);
        let op = Op::Aggregate {
            x,
            weights: EdgeWeights::Var(alpha),
            adj,
        };
        self.push("aggregate", r, c, out, op)
    }

    /// Per-row dot product of `x` (`n × d`) with the row vector `v` (`1 × d`).
    pub fn row_dot(&mut self, x: Var, v: Var) -> Result<Var> {
        let (tx, tv) = (self.value(x), self.value(v));
        let (r, c) = dims(tx);
        if tv.rows() != 1 || tv.cols() != c {
            return Err(Error::shape("row_dot", tx.shape(), tv.shape()));
        }
        let w = tv.values();
        let out = tx
            .values()
            .chunks(c)
            .map(|row| row.iter().zip(w).map(|(a, b)| a * b).sum())
            .collect();
        self.push("row_dot", r, 1, out, Op::RowDot(x, v))
    }

    /// Softmax of the `E × 1` logits within each destination segment of `adj`.
    pub fn segment_softmax(&mut self, logits: Var, adj: Arc<Adjacency>) -> Result<Var> {
        let tl = self.value(logits);
        if dims(tl) != (adj.len(), 1) {
            return Err(Error::shape("segment_softmax", tl.shape(), &[adj.len(), 1]));
        }
        let e = tl.values();
        let mut out = vec![0.0; e.len()];
        for d in 0..adj.n_dst() {
            let seg = adj.segment(d);
            if seg.is_empty() {
                continue;
            }
            let max = e[seg.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in seg.clone() {
                out[k] = (e[k] - max).exp();
                total += out[k];
            }
            for k in seg {
                out[k] /= total;
            }
        }
        let n = out.len();
        self.push("segment_softmax", n, 1, out, Op::SegmentSoftmax(logits, adj))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let (r, c) = dims(tx);
        let mut out = Vec::with_capacity(r * c);
        for row in tx.values().chunks(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let start = out.len();
            out.extend(row.iter().map(|v| (v - max).exp()));
            let total: f64 = out[start..].iter().sum();
            out[start..].iter_mut().for_each(|v| *v /= total);
        }
        self.push("softmax_rows", r, c, out, Op::SoftmaxRows(x))
    }

    /// Mean binary cross-entropy of logits `z` (`n × 1`) against targets in
    /// `[0, 1]`, evaluated in the overflow-free form.
    pub fn bce_with_logits(&mut self, z: Var, targets: Arc<Vec<f64>>) -> Result<Var> {
        let tz = self.value(z);
        if tz.cols() != 1 || tz.rows() != targets.len() {
            return Err(Error::shape("bce_with_logits", tz.shape(), &[targets.len(), 1]));
        }
        let n = targets.len() as f64;
        let loss: f64 = tz
            .values()
            .iter()
            .zip(targets.iter())
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        self.push("bce_with_logits", 1, 1, vec![loss], Op::BceLogits(z, targets))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push("sum", 1, 1, vec![s], Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let s = t.sum() / t.len() as f64;
        self.push("mean", 1, 1, vec![s], Op::Mean(x))
    }

    /// Backpropagates from the scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out_val = self.value(output);
        if out_val.len() != 1 {
            return Err(Error::shape("backward", out_val.shape(), &[1, 1]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.backward_node(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let target = &self.nodes[v.0];
            if !target.needs_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; target.value.len()]);
            f(buf);
        };
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = dims(ta);
                let n = tb.cols();
                acc(*a, &mut |buf| add_into(buf, &matmul_bt(g, tb.values(), m, n, k)));
                acc(*b, &mut |buf| add_into(buf, &matmul_at(ta.values(), g, m, k, n)));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |buf| add_into(buf, g));
                acc(*b, &mut |buf| add_into(buf, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |buf| add_into(buf, g));
                acc(*b, &mut |buf| buf.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).values(), self.value(*b).values());
                acc(*a, &mut |buf| {
                    for k in 0..buf.len() {
                        buf[k] += g[k] * vb[k];
                    }
                });
                acc(*b, &mut |buf| {
                    for k in 0..buf.len() {
                        buf[k] += g[k] * va[k];
                    }
                });
            }
            Op::AddRow(x, bias) => {
                acc(*x, &mut |buf| add_into(buf, g));
                let c = out.cols();
                acc(*bias, &mut |buf| {
                    for row in g.chunks(c) {
                        add_into(buf, row);
                    }
                });
            }
            Op::Scale(x, f) => acc(*x, &mut |buf| buf.iter_mut().zip(g).for_each(|(b, v)| *b += f * v)),
            Op::MulConst(x, m) => acc(*x, &mut |buf| {
                for k in 0..buf.len() {
                    buf[k] += g[k] * m[k];
                }
            }),
            Op::Act(x, kind) => {
                let xin = self.value(*x).values();
                let y = out.values();
                acc(*x, &mut |buf| {
                    for k in 0..buf.len() {
                        buf[k] += g[k] * kind.derivative(xin[k], y[k]);
                    }
                });
            }
            Op::SliceCols(x, start) => {
                let c_in = self.value(*x).cols();
                let len = out.cols();
                acc(*x, &mut |buf| {
                    for (row, grow) in buf.chunks_mut(c_in).zip(g.chunks(len)) {
                        add_into(&mut row[*start..*start + len], grow);
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let c_out = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    acc(p, &mut |buf| {
                        for (row, grow) in buf.chunks_mut(c).zip(g.chunks(c_out)) {
                            add_into(row, &grow[offset..offset + c]);
                        }
                    });
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    acc(p, &mut |buf| add_into(buf, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::GatherRows(x, idx) => {
                let c = out.cols();
                acc(*x, &mut |buf| {
                    for (k, &i) in idx.iter().enumerate() {
                        add_into(&mut buf[i * c..(i + 1) * c], &g[k * c..(k + 1) * c]);
                    }
                });
            }
            Op::PadRows(x) => {
                let len = self.value(*x).len();
                acc(*x, &mut |buf| add_into(buf, &g[..len]));
            }
            Op::Aggregate { x, weights, adj } => {
                let c = out.cols();
                let w: &[f64] = match weights {
                    EdgeWeights::Const(w) => w,
                    EdgeWeights::Var(a) => self.value(*a).values(),
                };
                acc(*x, &mut |buf| {
                    for (e, (&s, &d)) in adj.src().iter().zip(adj.dst()).enumerate() {
                        let grow = &g[d * c..(d + 1) * c];
                        for (b, v) in buf[s * c..(s + 1) * c].iter_mut().zip(grow) {
                            *b += w[e] * v;
                        }
                    }
                });
                if let EdgeWeights::Var(a) = weights {
                    let tx = self.value(*x);
                    acc(*a, &mut |buf| {
                        for (e, (&s, &d)) in adj.src().iter().zip(adj.dst()).enumerate() {
                            let grow = &g[d * c..(d + 1) * c];
                            buf[e] += tx.row(s).iter().zip(grow).map(|(p, q)| p * q).sum::<f64>();
                        }
                    });
                }
            }
            Op::RowDot(x, v) => {
                let (tx, tv) = (self.value(*x), self.value(*v));
                let c = tx.cols();
                acc(*x, &mut |buf| {
                    for (i, row) in buf.chunks_mut(c).enumerate() {
                        for (b, w) in row.iter_mut().zip(tv.values()) {
                            *b += g[i] * w;
                        }
                    }
                });
                acc(*v, &mut |buf| {
                    for (i, row) in tx.values().chunks(c).enumerate() {
                        for (b, a) in buf.iter_mut().zip(row) {
                            *b += g[i] * a;
                        }
                    }
                });
            }
            Op::SegmentSoftmax(x, adj) => {
                let y = out.values();
                acc(*x, &mut |buf| {
                    for d in 0..adj.n_dst() {
                        let seg = adj.segment(d);
                        let dot: f64 = seg.clone().map(|k| y[k] * g[k]).sum();
                        for k in seg {
                            buf[k] += y[k] * (g[k] - dot);
                        }
                    }
                });
            }
            Op::SoftmaxRows(x) => {
                let c = out.cols();
                let y = out.values();
                acc(*x, &mut |buf| {
                    for ((brow, yrow), grow) in buf.chunks_mut(c).zip(y.chunks(c)).zip(g.chunks(c)) {
                        let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        for k in 0..c {
                            brow[k] += yrow[k] * (grow[k] - dot);
                        }
                    }
                });
            }
            Op::BceLogits(z, targets) => {
                let zv = self.value(*z).values();
                let n = targets.len() as f64;
                acc(*z, &mut |buf| {
                    for k in 0..buf.len() {
                        buf[k] += g[0] * (sigmoid(zv[k]) - targets[k]) / n;
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |buf| buf.iter_mut().for_each(|b| *b += g[0])),
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                acc(*x, &mut |buf| buf.iter_mut().for_each(|b| *b += g[0] / n));
            }
        }
    }
}
