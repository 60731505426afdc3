//! Layers as index sets into a model's parameter list.
//!
//! Each layer stores the positions of its tensors in the model's parameter
//! vector; forwards take the matching tape variables.

use std::sync::Arc;

use rand::Rng;

use super::data::GraphInput;
use crate::error::{Error, Result};
use crate::numcore::{Activation, Tape, Tensor, Var};

/// Slope of the leaky ReLU applied to attention logits.
pub const ATTENTION_SLOPE: f64 = 0.2;

fn check_rows(tape: &Tape, x: Var, g: &GraphInput, op: &'static str) -> Result<()> {
    let t = tape.value(x);
    if t.rows() != g.len() {
        return Err(Error::shape(op, t.shape(), &[g.len(), t.cols()]));
    }
    Ok(())
}

fn maybe_activate(tape: &mut Tape, x: Var, act: Option<Activation>) -> Result<Var> {
    match act {
        Some(a) => tape.activate(x, a),
        None => Ok(x),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    pub weight: usize,
    pub bias: usize,
    pub activation: Option<Activation>,
}

impl GcnLayer {
    /// `act(Â · dropout(x) · W + b)` with the normalised weighted adjacency `Â`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        x: Var,
        g: &GraphInput,
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        check_rows(tape, x, g, "gcn_forward")?;
        let x = tape.dropout(x, dropout, training, rng)?;
        let xw = tape.matmul(x, vars[self.weight])?;
        let agg = tape.aggregate_const(xw, Arc::clone(g.adjacency()), Arc::clone(g.gcn_weights()))?;
        let z = tape.add_row(agg, vars[self.bias])?;
        maybe_activate(tape, z, self.activation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatHead {
    pub weight: usize,
    /// `1 × 2d` vector; the first half scores the receiving node.
    pub attention: usize,
    pub bias: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    pub heads: Vec<GatHead>,
    /// Concatenate head outputs, otherwise average them.
    pub concat: bool,
    pub activation: Option<Activation>,
}

impl GatLayer {
    /// Multi-head attention over `N(i) ∪ {i}`. When `sink` is given, the
    /// normalised coefficients of every head (adjacency storage order, before
    /// attention dropout) are appended to it.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        x: Var,
        g: &GraphInput,
        dropout: f64,
        training: bool,
        rng: &mut R,
        mut sink: Option<&mut Vec<Vec<f64>>>,
    ) -> Result<Var> {
        check_rows(tape, x, g, "gat_forward")?;
        let x = tape.dropout(x, dropout, training, rng)?;
        let mut outs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let wx = tape.matmul(x, vars[head.weight])?;
            let a = vars[head.attention];
            let a_dst = tape.slice_cols(a, 0, head.dim)?;
            let a_src = tape.slice_cols(a, head.dim, head.dim)?;
            let s_dst = tape.row_dot(wx, a_dst)?;
            let s_src = tape.row_dot(wx, a_src)?;
            let e_dst = tape.gather_rows(s_dst, Arc::clone(g.dst()))?;
            let e_src = tape.gather_rows(s_src, Arc::clone(g.src()))?;
            let logits = tape.add(e_dst, e_src)?;
            let logits = tape.activate(logits, Activation::LeakyRelu(ATTENTION_SLOPE))?;
            let alpha = tape.segment_softmax(logits, Arc::clone(g.adjacency()))?;
            if let Some(s) = sink.as_deref_mut() {
                s.push(tape.value(alpha).values().to_vec());
            }
            let alpha = tape.dropout(alpha, dropout, training, rng)?;
            let h = tape.aggregate(wx, alpha, Arc::clone(g.adjacency()))?;
            outs.push(tape.add_row(h, vars[head.bias])?);
        }
        let combined = if self.concat {
            tape.concat_cols(&outs)?
        } else {
            let mut acc = outs[0];
            for &o in &outs[1..] {
                acc = tape.add(acc, o)?;
            }
            tape.scale(acc, 1.0 / outs.len() as f64)?
        };
        maybe_activate(tape, combined, self.activation)
    }
}

/// LSTM cell with fused gate blocks ordered input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// `in × 4h`
    pub wx: usize,
    /// `h × 4h`
    pub wh: usize,
    /// `4h`
    pub bias: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn step(&self, tape: &mut Tape, vars: &[Var], x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hd = self.hidden;
        let xw = tape.matmul(x, vars[self.wx])?;
        let hw = tape.matmul(h, vars[self.wh])?;
        let z = tape.add(xw, hw)?;
        let z = tape.add_row(z, vars[self.bias])?;
        let i = tape.slice_cols(z, 0, hd)?;
        let i = tape.sigmoid(i)?;
        let f = tape.slice_cols(z, hd, hd)?;
        let f = tape.sigmoid(f)?;
        let g = tape.slice_cols(z, 2 * hd, hd)?;
        let g = tape.tanh(g)?;
        let o = tape.slice_cols(z, 3 * hd, hd)?;
        let o = tape.sigmoid(o)?;
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_next = tape.add(fc, ig)?;
        let tc = tape.tanh(c_next)?;
        let h_next = tape.mul(o, tc)?;
        Ok((h_next, c_next))
    }
}

/// GRU cell; `h' = z ⊙ h + (1 − z) ⊙ h̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    /// `in × 2h`, update then reset gate.
    pub wx_gates: usize,
    /// `h × 2h`
    pub wh_gates: usize,
    /// `2h`
    pub b_gates: usize,
    pub wx_cand: usize,
    pub wh_cand: usize,
    pub b_cand: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn step(&self, tape: &mut Tape, vars: &[Var], x: Var, h: Var) -> Result<Var> {
        let hd = self.hidden;
        let xg = tape.matmul(x, vars[self.wx_gates])?;
        let hg = tape.matmul(h, vars[self.wh_gates])?;
        let gates = tape.add(xg, hg)?;
        let gates = tape.add_row(gates, vars[self.b_gates])?;
        let gates = tape.sigmoid(gates)?;
        let z = tape.slice_cols(gates, 0, hd)?;
        let r = tape.slice_cols(gates, hd, hd)?;
        let rh = tape.mul(r, h)?;
        let xc = tape.matmul(x, vars[self.wx_cand])?;
        let hc = tape.matmul(rh, vars[self.wh_cand])?;
        let cand = tape.add(xc, hc)?;
        let cand = tape.add_row(cand, vars[self.b_cand])?;
        let cand = tape.tanh(cand)?;
        // cand + z ⊙ (h − cand)
        let diff = tape.sub(h, cand)?;
        let keep = tape.mul(z, diff)?;
        tape.add(cand, keep)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RnnCell {
    Lstm(LstmCell),
    Gru(GruCell),
}

impl RnnCell {
    pub fn hidden(&self) -> usize {
        match self {
            RnnCell::Lstm(c) => c.hidden,
            RnnCell::Gru(c) => c.hidden,
        }
    }

    /// Unrolls over `steps` from a zero state. Step `k` may have more rows
    /// than step `k - 1`; the new rows start from zero state.
    pub fn unroll(&self, tape: &mut Tape, vars: &[Var], steps: &[Var]) -> Result<Var> {
        let Some(&first) = steps.first() else {
            return Err(Error::Config("cannot unroll an empty sequence".into()));
        };
        let zeros = |tape: &mut Tape, n: usize, h: usize| -> Result<Var> { Ok(tape.constant(Tensor::zeros(&[n, h])?)) };
        let n0 = tape.value(first).rows();
        let mut h = zeros(tape, n0, self.hidden())?;
        let mut c = match self {
            RnnCell::Lstm(_) => Some(zeros(tape, n0, self.hidden())?),
            RnnCell::Gru(_) => None,
        };
        for &x in steps {
            let n = tape.value(x).rows();
            h = tape.pad_rows(h, n)?;
            match self {
                RnnCell::Lstm(cell) => {
                    let c_prev = tape.pad_rows(c.expect("lstm state"), n)?;
                    let (hn, cn) = cell.step(tape, vars, x, h, c_prev)?;
                    h = hn;
                    c = Some(cn);
                }
                RnnCell::Gru(cell) => h = cell.step(tape, vars, x, h)?,
            }
        }
        Ok(h)
    }
}

/// Single linear unit producing logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub weight: usize,
    pub bias: usize,
}

impl Head {
    pub fn logits(&self, tape: &mut Tape, vars: &[Var], rep: Var) -> Result<Var> {
        let z = tape.matmul(rep, vars[self.weight])?;
        tape.add_row(z, vars[self.bias])
    }
}
