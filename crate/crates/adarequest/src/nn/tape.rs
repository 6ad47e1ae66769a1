//! Define-by-run computation tape with reverse-mode gradients.
//!
//! Nodes are appended in topological order, so one reverse sweep over the
//! node list propagates gradients. Recurrent and attention steps are fused
//! ops with hand-written backward rules to keep node counts small; all of
//! them are validated against central finite differences in the tests.

use super::params::{ParamId, ParamSet};
use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, sigmoid, softmax_row, Tensor};
use crate::{Error, Result};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Act {
    Linear,
    Sigmoid,
    Tanh,
}

/// Loss-probability clamp; avoids log(0) without measurable bias.
pub const PROB_EPS: f64 = 1e-12;

enum Op {
    Leaf { param: Option<ParamId> },
    MatMul { a: NodeId, b: NodeId },
    AddRow { a: NodeId, bias: NodeId },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Affine { a: NodeId, mul: f64 },
    Sigmoid { a: NodeId },
    Tanh { a: NodeId },
    ConcatCols { parts: Vec<NodeId> },
    StackRows { rows: Vec<NodeId> },
    SliceRows { a: NodeId, from: usize },
    SliceCols { a: NodeId, from: usize },
    MeanRows { a: NodeId },
    SumAll { a: NodeId },
    RowSoftmax { a: NodeId },
    Embed { table: NodeId, ids: Vec<usize> },
    GruStep { x: NodeId, h: NodeId, w: [NodeId; 9] },
    Attend { q: NodeId, k: NodeId, v: NodeId, scale: f64 },
    Dense { x: NodeId, w: NodeId, b: NodeId, act: Act },
    Bce { p: NodeId, y: f64 },
    StopGrad,
}

struct Node {
    op: Op,
    value: Tensor,
    /// Cached forward intermediates needed by the backward rule.
    aux: Vec<Tensor>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, value: Tensor, aux: Vec<Tensor>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, value, aux });
        id
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { param: None }, value, vec![])
    }

    /// Leaf for a parameter; memoized so every use shares one node and
    /// gradient contributions accumulate.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        let n = self.push(Op::Leaf { param: Some(id) }, params.value(id).clone(), vec![]);
        self.param_nodes.insert(id, n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", av.shape(), bv.shape()),
            ));
        }
        let mut out = Tensor::zeros(av.rows(), bv.cols());
        matmul_acc(av, bv, &mut out);
        Ok(self.push(Op::MatMul { a, b }, out, vec![]))
    }

    /// `a [m,n] + bias [1,n]` broadcast over rows.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + {:?}", av.shape(), bv.shape()),
            ));
        }
        let n = av.cols();
        let mut out = av.clone();
        for r in 0..out.rows() {
            let row = &mut out.data_mut()[r * n..(r + 1) * n];
            for (x, b) in row.iter_mut().zip(bv.data()) {
                *x += b;
            }
        }
        Ok(self.push(Op::AddRow { a, bias }, out, vec![]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} + {:?}", av.shape(), bv.shape()),
            ));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        Ok(self.push(Op::Add { a, b }, out, vec![]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                "mul",
                format!("{:?} * {:?}", av.shape(), bv.shape()),
            ));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(Op::Mul { a, b }, out, vec![]))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.affine(a, c, 0.0)
    }

    /// Elementwise `mul * x + add`.
    pub fn affine(&mut self, a: NodeId, mul: f64, add: f64) -> NodeId {
        let av = self.value(a);
        let data = av.data().iter().map(|x| mul * x + add).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(Op::Affine { a, mul }, out, vec![])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| sigmoid(x)).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(Op::Sigmoid { a }, out, vec![])
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x.tanh()).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(Op::Tanh { a }, out, vec![])
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::EmptySequence("concat_cols"));
        }
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(Error::shape("concat_cols", "row counts differ".to_string()));
            }
            cols += self.value(p).cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let pv = self.value(p);
            let pc = pv.cols();
            for r in 0..rows {
                let src = pv.row_slice(r);
                let dst_start = r * cols + offset;
                // borrow of out must not overlap self; copy through locals
                for (j, &v) in src.iter().enumerate() {
                    out.data_mut()[dst_start + j] = v;
                }
            }
            offset += pc;
        }
        Ok(self.push(Op::ConcatCols { parts: parts.to_vec() }, out, vec![]))
    }

    /// Stacks `[1,d]` rows into `[len,d]`.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        if rows.is_empty() {
            return Err(Error::EmptySequence("stack_rows"));
        }
        let d = self.value(rows[0]).cols();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let rv = self.value(r);
            if rv.rows() != 1 || rv.cols() != d {
                return Err(Error::shape("stack_rows", format!("{:?}", rv.shape())));
            }
            data.extend_from_slice(rv.data());
        }
        let out = Tensor::matrix(rows.len(), d, data)?;
        Ok(self.push(Op::StackRows { rows: rows.to_vec() }, out, vec![]))
    }

    pub fn slice_rows(&mut self, a: NodeId, from: usize, to: usize) -> Result<NodeId> {
        let av = self.value(a);
        if from >= to || to > av.rows() {
            return Err(Error::shape(
                "slice_rows",
                format!("[{from},{to}) of {} rows", av.rows()),
            ));
        }
        let d = av.cols();
        let data = av.data()[from * d..to * d].to_vec();
        let out = Tensor::matrix(to - from, d, data)?;
        Ok(self.push(Op::SliceRows { a, from }, out, vec![]))
    }

    pub fn slice_cols(&mut self, a: NodeId, from: usize, to: usize) -> Result<NodeId> {
        let av = self.value(a);
        if from >= to || to > av.cols() {
            return Err(Error::shape(
                "slice_cols",
                format!("[{from},{to}) of {} cols", av.cols()),
            ));
        }
        let rows = av.rows();
        let mut data = Vec::with_capacity(rows * (to - from));
        for r in 0..rows {
            data.extend_from_slice(&av.row_slice(r)[from..to]);
        }
        let out = Tensor::matrix(rows, to - from, data)?;
        Ok(self.push(Op::SliceCols { a, from }, out, vec![]))
    }

    /// Arithmetic mean over rows: `[len,d] -> [1,d]`.
    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if av.rows() == 0 {
            return Err(Error::EmptySequence("mean_rows"));
        }
        let (rows, d) = (av.rows(), av.cols());
        let mut out = Tensor::zeros(1, d);
        for r in 0..rows {
            for (o, &v) in out.data_mut().iter_mut().zip(av.row_slice(r)) {
                *o += v;
            }
        }
        out.scale_assign(1.0 / rows as f64);
        Ok(self.push(Op::MeanRows { a }, out, vec![]))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::SumAll { a }, Tensor::scalar(s), vec![])
    }

    /// Softmax over each row independently.
    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let (rows, cols) = (av.rows(), av.cols());
        let mut out = av.clone();
        for r in 0..rows {
            softmax_row(&mut out.data_mut()[r * cols..(r + 1) * cols]);
        }
        self.push(Op::RowSoftmax { a }, out, vec![])
    }

    /// Embedding lookup: row per id. Index 0 is the padding id; it maps to
    /// the zero vector and receives no gradient.
    pub fn embed(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let tv = self.value(table);
        let (vocab, dim) = (tv.rows(), tv.cols());
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(Error::shape(
                    "embed",
                    format!("id {id} out of vocabulary {vocab}"),
                ));
            }
            if id == 0 {
                data.extend(std::iter::repeat(0.0).take(dim));
            } else {
                data.extend_from_slice(tv.row_slice(id));
            }
        }
        let out = Tensor::matrix(ids.len(), dim, data)?;
        Ok(self.push(Op::Embed { table, ids: ids.to_vec() }, out, vec![]))
    }

    /// One recurrence step of a gated unit:
    /// `z = σ(xWz + hUz + bz)`, `r = σ(xWr + hUr + br)`,
    /// `g = tanh(xWh + (r⊙h)Uh + bh)`, `h' = (1-z)⊙h + z⊙g`.
    ///
    /// `weights` order: `[wz, uz, bz, wr, ur, br, wh, uh, bh]`.
    pub fn gru_step(&mut self, x: NodeId, h: NodeId, weights: [NodeId; 9]) -> Result<NodeId> {
        let xv = self.value(x);
        let hv = self.value(h);
        let hidden = hv.cols();
        let input = xv.cols();
        if xv.rows() != 1 || hv.rows() != 1 {
            return Err(Error::shape("gru_step", "x and h must be [1,d]".to_string()));
        }
        let [wz, uz, bz, wr, ur, br, wh, uh, bh] = weights;
        for (node, rows, cols, what) in [
            (wz, input, hidden, "wz"),
            (uz, hidden, hidden, "uz"),
            (bz, 1, hidden, "bz"),
            (wr, input, hidden, "wr"),
            (ur, hidden, hidden, "ur"),
            (br, 1, hidden, "br"),
            (wh, input, hidden, "wh"),
            (uh, hidden, hidden, "uh"),
            (bh, 1, hidden, "bh"),
        ] {
            let v = self.value(node);
            if v.rows() != rows || v.cols() != cols {
                return Err(Error::shape(
                    "gru_step",
                    format!("{what} is {:?}, expected [{rows},{cols}]", v.shape()),
                ));
            }
        }

        let gate = |tape: &Tape, w: NodeId, u: NodeId, b: NodeId, pre_h: &Tensor| {
            let mut acc = tape.value(b).clone();
            matmul_acc(tape.value(x), tape.value(w), &mut acc);
            matmul_acc(pre_h, tape.value(u), &mut acc);
            acc
        };

        let hv_owned = hv.clone();
        let mut z = gate(self, wz, uz, bz, &hv_owned);
        z.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut r = gate(self, wr, ur, br, &hv_owned);
        r.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        let rh_data: Vec<f64> = r.data().iter().zip(hv_owned.data()).map(|(a, b)| a * b).collect();
        let rh = Tensor::matrix(1, hidden, rh_data)?;
        let mut g = {
            let mut acc = self.value(bh).clone();
            matmul_acc(self.value(x), self.value(wh), &mut acc);
            matmul_acc(&rh, self.value(uh), &mut acc);
            acc
        };
        g.data_mut().iter_mut().for_each(|v| *v = v.tanh());

        let out_data: Vec<f64> = (0..hidden)
            .map(|i| (1.0 - z.data()[i]) * hv_owned.data()[i] + z.data()[i] * g.data()[i])
            .collect();
        let out = Tensor::matrix(1, hidden, out_data)?;
        Ok(self.push(Op::GruStep { x, h, w: weights }, out, vec![z, r, g, rh]))
    }

    /// Scaled dot-product attention: `softmax(scale · q kᵀ) v`.
    /// `q [lq,d]`, `k [lk,d]`, `v [lk,dv]` → `[lq,dv]`.
    pub fn attend(&mut self, q: NodeId, k: NodeId, v: NodeId, scale: f64) -> Result<NodeId> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        if kv.rows() == 0 {
            return Err(Error::EmptySequence("attend"));
        }
        if qv.cols() != kv.cols() || vv.rows() != kv.rows() {
            return Err(Error::shape(
                "attend",
                format!("q {:?}, k {:?}, v {:?}", qv.shape(), kv.shape(), vv.shape()),
            ));
        }
        let (lq, lk) = (qv.rows(), kv.rows());
        let mut scores = Tensor::zeros(lq, lk);
        matmul_bt_acc(qv, kv, &mut scores);
        scores.scale_assign(scale);
        for r in 0..lq {
            softmax_row(&mut scores.data_mut()[r * lk..(r + 1) * lk]);
        }
        let mut out = Tensor::zeros(lq, vv.cols());
        matmul_acc(&scores, vv, &mut out);
        Ok(self.push(Op::Attend { q, k, v, scale }, out, vec![scores]))
    }

    /// Fused `act(x·w + b)`.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId, act: Act) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.rows() || bv.cols() != wv.cols() || bv.rows() != 1 {
            return Err(Error::shape(
                "dense",
                format!("x {:?}, w {:?}, b {:?}", xv.shape(), wv.shape(), bv.shape()),
            ));
        }
        let (m, n) = (xv.rows(), wv.cols());
        let mut out = Tensor::zeros(m, n);
        matmul_acc(xv, wv, &mut out);
        for r in 0..m {
            for (o, &bias) in out.data_mut()[r * n..(r + 1) * n].iter_mut().zip(bv.data()) {
                *o += bias;
            }
        }
        match act {
            Act::Linear => {}
            Act::Sigmoid => out.data_mut().iter_mut().for_each(|x| *x = sigmoid(*x)),
            Act::Tanh => out.data_mut().iter_mut().for_each(|x| *x = x.tanh()),
        }
        Ok(self.push(Op::Dense { x, w, b, act }, out, vec![]))
    }

    /// Binary cross-entropy of one probability against a 0/1 label.
    /// `p` is clamped to `[PROB_EPS, 1-PROB_EPS]`.
    pub fn bce(&mut self, p: NodeId, y: f64) -> Result<NodeId> {
        let pv = self.value(p);
        if pv.len() != 1 {
            return Err(Error::shape("bce", format!("{:?}", pv.shape())));
        }
        let pc = pv.item().clamp(PROB_EPS, 1.0 - PROB_EPS);
        let loss = -y * pc.ln() - (1.0 - y) * (1.0 - pc).ln();
        Ok(self.push(Op::Bce { p, y }, Tensor::scalar(loss), vec![]))
    }

    /// Identity forward, zero backward.
    pub fn stop_grad(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).clone();
        self.push(Op::StopGrad, v, vec![])
    }

    /// Reverse sweep from a scalar loss node; parameter gradients are
    /// accumulated into `params` (added to whatever is already there).
    pub fn backward(&self, loss: NodeId, params: &mut ParamSet) -> Result<()> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", lv.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf { param } => {
                    if let Some(pid) = param {
                        params.grad_add(*pid, &g);
                    }
                }
                Op::MatMul { a, b } => {
                    // dA += dC·Bᵀ, dB += Aᵀ·dC
                    let (av, bv) = (self.value(*a), self.value(*b));
                    matmul_bt_acc(&g, bv, acc(&mut grads, a.0, av));
                    matmul_at_acc(av, &g, acc(&mut grads, b.0, bv));
                }
                Op::AddRow { a, bias } => {
                    let av = self.value(*a);
                    acc(&mut grads, a.0, av).add_assign(&g);
                    let bg = acc(&mut grads, bias.0, self.value(*bias));
                    let n = bg.cols();
                    for r in 0..g.rows() {
                        for (o, &v) in bg.data_mut().iter_mut().zip(g.row_slice(r)) {
                            *o += v;
                        }
                    }
                    debug_assert_eq!(n, g.cols());
                }
                Op::Add { a, b } => {
                    acc(&mut grads, a.0, self.value(*a)).add_assign(&g);
                    acc(&mut grads, b.0, self.value(*b)).add_assign(&g);
                }
                Op::Mul { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    {
                        let ga = acc(&mut grads, a.0, av);
                        for ((o, &gg), &b_) in ga.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                            *o += gg * b_;
                        }
                    }
                    let gb = acc(&mut grads, b.0, bv);
                    for ((o, &gg), &a_) in gb.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        *o += gg * a_;
                    }
                }
                Op::Affine { a, mul } => {
                    let ga = acc(&mut grads, a.0, self.value(*a));
                    for (o, &gg) in ga.data_mut().iter_mut().zip(g.data()) {
                        *o += gg * mul;
                    }
                }
                Op::Sigmoid { a } => {
                    let y = &node.value;
                    let ga = acc(&mut grads, a.0, self.value(*a));
                    for ((o, &gg), &yy) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *o += gg * yy * (1.0 - yy);
                    }
                }
                Op::Tanh { a } => {
                    let y = &node.value;
                    let ga = acc(&mut grads, a.0, self.value(*a));
                    for ((o, &gg), &yy) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *o += gg * (1.0 - yy * yy);
                    }
                }
                Op::ConcatCols { parts } => {
                    let rows = node.value.rows();
                    let total = node.value.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let pc = pv.cols();
                        let gp = acc(&mut grads, p.0, pv);
                        for r in 0..rows {
                            let src = &g.data()[r * total + offset..r * total + offset + pc];
                            let dst = &mut gp.data_mut()[r * pc..(r + 1) * pc];
                            for (o, &v) in dst.iter_mut().zip(src) {
                                *o += v;
                            }
                        }
                        offset += pc;
                    }
                }
                Op::StackRows { rows } => {
                    for (r, &p) in rows.iter().enumerate() {
                        let pv = self.value(p);
                        let gp = acc(&mut grads, p.0, pv);
                        for (o, &v) in gp.data_mut().iter_mut().zip(g.row_slice(r)) {
                            *o += v;
                        }
                    }
                }
                Op::SliceRows { a, from } => {
                    let av = self.value(*a);
                    let d = av.cols();
                    let ga = acc(&mut grads, a.0, av);
                    let start = from * d;
                    for (o, &v) in ga.data_mut()[start..start + g.len()].iter_mut().zip(g.data()) {
                        *o += v;
                    }
                }
                Op::SliceCols { a, from } => {
                    let av = self.value(*a);
                    let (rows, cols) = (av.rows(), av.cols());
                    let width = g.cols();
                    let ga = acc(&mut grads, a.0, av);
                    for r in 0..rows {
                        let dst = &mut ga.data_mut()[r * cols + from..r * cols + from + width];
                        for (o, &v) in dst.iter_mut().zip(g.row_slice(r)) {
                            *o += v;
                        }
                    }
                }
                Op::MeanRows { a } => {
                    let av = self.value(*a);
                    let rows = av.rows();
                    let inv = 1.0 / rows as f64;
                    let ga = acc(&mut grads, a.0, av);
                    for r in 0..rows {
                        let dst = &mut ga.data_mut()[r * g.cols()..(r + 1) * g.cols()];
                        for (o, &v) in dst.iter_mut().zip(g.data()) {
                            *o += v * inv;
                        }
                    }
                }
                Op::SumAll { a } => {
                    let gg = g.item();
                    let ga = acc(&mut grads, a.0, self.value(*a));
                    ga.data_mut().iter_mut().for_each(|o| *o += gg);
                }
                Op::RowSoftmax { a } => {
                    let y = &node.value;
                    let (rows, cols) = (y.rows(), y.cols());
                    let ga = acc(&mut grads, a.0, self.value(*a));
                    for r in 0..rows {
                        let yr = y.row_slice(r);
                        let gr = g.row_slice(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        let dst = &mut ga.data_mut()[r * cols..(r + 1) * cols];
                        for j in 0..cols {
                            dst[j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
                Op::Embed { table, ids } => {
                    let tv = self.value(*table);
                    let dim = tv.cols();
                    let gt = acc(&mut grads, table.0, tv);
                    for (pos, &id) in ids.iter().enumerate() {
                        if id == 0 {
                            continue; // padding row stays frozen
                        }
                        let dst = &mut gt.data_mut()[id * dim..(id + 1) * dim];
                        for (o, &v) in dst.iter_mut().zip(g.row_slice(pos)) {
                            *o += v;
                        }
                    }
                }
                Op::GruStep { x, h, w } => {
                    self.backward_gru(node, &g, *x, *h, *w, &mut grads);
                }
                Op::Attend { q, k, v, scale } => {
                    let alpha = &node.aux[0];
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let (lq, lk) = (alpha.rows(), alpha.cols());
                    // dV += αᵀ · dOut
                    matmul_at_acc(alpha, &g, acc(&mut grads, v.0, vv));
                    // dα = dOut · Vᵀ, then per-row softmax VJP into dS
                    let mut dalpha = Tensor::zeros(lq, lk);
                    matmul_bt_acc(&g, vv, &mut dalpha);
                    let mut dscores = Tensor::zeros(lq, lk);
                    for r in 0..lq {
                        let ar = alpha.row_slice(r);
                        let dar = dalpha.row_slice(r);
                        let dot: f64 = ar.iter().zip(dar).map(|(a, b)| a * b).sum();
                        let dst = &mut dscores.data_mut()[r * lk..(r + 1) * lk];
                        for j in 0..lk {
                            dst[j] = ar[j] * (dar[j] - dot);
                        }
                    }
                    dscores.scale_assign(*scale);
                    // dQ += dS·K ; dK += dSᵀ·Q
                    matmul_acc(&dscores, kv, acc(&mut grads, q.0, qv));
                    matmul_at_acc(&dscores, qv, acc(&mut grads, k.0, kv));
                }
                Op::Dense { x, w, b, act } => {
                    let y = &node.value;
                    let mut dpre = g.clone();
                    match act {
                        Act::Linear => {}
                        Act::Sigmoid => {
                            for (o, &yy) in dpre.data_mut().iter_mut().zip(y.data()) {
                                *o *= yy * (1.0 - yy);
                            }
                        }
                        Act::Tanh => {
                            for (o, &yy) in dpre.data_mut().iter_mut().zip(y.data()) {
                                *o *= 1.0 - yy * yy;
                            }
                        }
                    }
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    matmul_bt_acc(&dpre, wv, acc(&mut grads, x.0, xv));
                    matmul_at_acc(xv, &dpre, acc(&mut grads, w.0, wv));
                    let gb = acc(&mut grads, b.0, self.value(*b));
                    let n = gb.cols();
                    for r in 0..dpre.rows() {
                        for (o, &v) in gb.data_mut().iter_mut().zip(&dpre.data()[r * n..(r + 1) * n]) {
                            *o += v;
                        }
                    }
                }
                Op::Bce { p, y } => {
                    let pc = self.value(*p).item().clamp(PROB_EPS, 1.0 - PROB_EPS);
                    let d = (pc - y) / (pc * (1.0 - pc));
                    let gp = acc(&mut grads, p.0, self.value(*p));
                    gp.data_mut()[0] += d * g.item();
                }
                Op::StopGrad => {}
            }
        }
        Ok(())
    }

    fn backward_gru(
        &self,
        node: &Node,
        g: &Tensor,
        x: NodeId,
        h: NodeId,
        w: [NodeId; 9],
        grads: &mut Vec<Option<Tensor>>,
    ) {
        let [wz, uz, bz, wr, ur, br, wh, uh, bh] = w;
        let (z, r, gc, rh) = (&node.aux[0], &node.aux[1], &node.aux[2], &node.aux[3]);
        let xv = self.value(x);
        let hv = self.value(h);
        let hidden = hv.cols();

        let mut dz = Tensor::zeros(1, hidden);
        let mut dg = Tensor::zeros(1, hidden);
        let mut dh = Tensor::zeros(1, hidden);
        for i in 0..hidden {
            let gi = g.data()[i];
            dz.data_mut()[i] = gi * (gc.data()[i] - hv.data()[i]);
            dg.data_mut()[i] = gi * z.data()[i];
            dh.data_mut()[i] = gi * (1.0 - z.data()[i]);
        }

        // candidate pre-activation
        let mut da_g = Tensor::zeros(1, hidden);
        for i in 0..hidden {
            da_g.data_mut()[i] = dg.data()[i] * (1.0 - gc.data()[i] * gc.data()[i]);
        }
        matmul_at_acc(xv, &da_g, acc(grads, wh.0, self.value(wh)));
        matmul_at_acc(rh, &da_g, acc(grads, uh.0, self.value(uh)));
        acc(grads, bh.0, self.value(bh)).add_assign(&da_g);
        let mut drh = Tensor::zeros(1, hidden);
        matmul_bt_acc(&da_g, self.value(uh), &mut drh);
        let mut dr = Tensor::zeros(1, hidden);
        for i in 0..hidden {
            dr.data_mut()[i] = drh.data()[i] * hv.data()[i];
            dh.data_mut()[i] += drh.data()[i] * r.data()[i];
        }

        // gate pre-activations
        let mut da_z = Tensor::zeros(1, hidden);
        let mut da_r = Tensor::zeros(1, hidden);
        for i in 0..hidden {
            da_z.data_mut()[i] = dz.data()[i] * z.data()[i] * (1.0 - z.data()[i]);
            da_r.data_mut()[i] = dr.data()[i] * r.data()[i] * (1.0 - r.data()[i]);
        }
        matmul_at_acc(xv, &da_z, acc(grads, wz.0, self.value(wz)));
        matmul_at_acc(hv, &da_z, acc(grads, uz.0, self.value(uz)));
        acc(grads, bz.0, self.value(bz)).add_assign(&da_z);
        matmul_at_acc(xv, &da_r, acc(grads, wr.0, self.value(wr)));
        matmul_at_acc(hv, &da_r, acc(grads, ur.0, self.value(ur)));
        acc(grads, br.0, self.value(br)).add_assign(&da_r);

        matmul_bt_acc(&da_z, self.value(uz), &mut dh);
        matmul_bt_acc(&da_r, self.value(ur), &mut dh);
        acc(grads, h.0, hv).add_assign(&dh);

        let dx = acc(grads, x.0, xv);
        matmul_bt_acc(&da_z, self.value(wz), dx);
        matmul_bt_acc(&da_r, self.value(wr), dx);
        matmul_bt_acc(&da_g, self.value(wh), dx);
    }
}

/// Gets (allocating on first touch) the gradient accumulator for a node.
fn acc<'g>(grads: &'g mut Vec<Option<Tensor>>, idx: usize, like: &Tensor) -> &'g mut Tensor {
    grads[idx].get_or_insert_with(|| Tensor::zeros_like(like))
}
