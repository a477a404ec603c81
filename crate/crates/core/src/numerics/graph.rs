//! Tape-based reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Graph`] records every operation applied during a forward pass. Each
//! node owns its value; [`Graph::backward`] then sweeps the tape in reverse
//! and propagates the gradient of a scalar loss to every node that requires
//! one. Leaf gradients (inputs and parameters) accumulate across repeated
//! calls, intermediate gradients do not.
//!
//! Everything is a 2-D `f64` matrix. Vectors are `1×n` rows, a batch of
//! vectors is stacked row-wise, and variable-length sequences are flattened
//! into consecutive row ranges ("segments") so no padding is needed for the
//! attention operator.
//!
//! A graph is built per minibatch and dropped afterwards; parameters live in
//! a [`ParamStore`] and are copied in with [`Graph::param`].

use std::ops::Range;

use ndarray::{s, Array2, Axis};

use super::params::{ParamId, ParamStore};
use crate::error::{contract, Result};

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Row-sparse constant matrix, used for gathers, average pooling and row
/// selection (`out = S · x`).
#[derive(Clone, Debug, Default)]
pub struct SparseRows {
    pub cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(cols: usize) -> Self {
        SparseRows { cols, rows: Vec::new() }
    }

    pub fn push_row(&mut self, entries: Vec<(usize, f64)>) {
        self.rows.push(entries);
    }

    /// One-hot row picking `index`.
    pub fn push_pick(&mut self, index: usize) {
        self.rows.push(vec![(index, 1.0)]);
    }

    /// Row averaging the given columns; an empty set yields a zero row.
    pub fn push_mean(&mut self, indices: &[usize]) {
        if indices.is_empty() {
            self.rows.push(Vec::new());
        } else {
            let w = 1.0 / indices.len() as f64;
            self.rows.push(indices.iter().map(|&i| (i, w)).collect());
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Attention weights of one fused attention node: `[segment][head]`, each
/// `len × len` with rows indexed by query.
pub type AttentionWeights = Vec<Vec<Mat>>;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatRows(Vec<Var>),
    Sparse(SparseRows, Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        segments: Vec<Range<usize>>,
        weights: AttentionWeights,
    },
    Bce {
        p: Var,
        labels: Vec<f64>,
    },
    Sum(Var),
    Mean(Var),
}

struct Node {
    value: Mat,
    op: Op,
    param: Option<ParamId>,
    requires_grad: bool,
    /// Accumulated gradient; only kept for leaves.
    grad: Option<Mat>,
}

pub const BCE_CLAMP: f64 = 1e-7;
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            param: None,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// Accumulated gradient of a leaf, or `None` if backward never reached it.
    pub fn grad(&self, v: Var) -> Option<&Mat> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Differentiable input leaf.
    pub fn input(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable constant leaf.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Copies a parameter's current value onto the tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.value(id).clone(), Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(contract(format!("matmul {ar}x{ac} by {br}x{bc}")));
        }
        let out = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(contract(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// `a + 1·row`, broadcasting a `1×n` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (_, ac) = self.shape(a);
        if self.shape(row) != (1, ac) {
            return Err(contract(format!(
                "add_row: bias {:?} for {} columns",
                self.shape(row),
                ac
            )));
        }
        let out = self.value(a) + self.value(row);
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a) * factor;
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, factor), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn slice_cols(&mut self, a: Var, cols: Range<usize>) -> Result<Var> {
        let (_, ac) = self.shape(a);
        if cols.end > ac || cols.start >= cols.end {
            return Err(contract(format!("slice_cols {cols:?} of {ac}")));
        }
        let out = self.value(a).slice(s![.., cols.clone()]).to_owned();
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceCols(a, cols.start), rg))
    }

    pub fn slice_rows(&mut self, a: Var, rows: Range<usize>) -> Result<Var> {
        let (ar, _) = self.shape(a);
        if rows.end > ar || rows.start >= rows.end {
            return Err(contract(format!("slice_rows {rows:?} of {ar}")));
        }
        let out = self.value(a).slice(s![rows.clone(), ..]).to_owned();
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceRows(a, rows.start), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(contract("concat_rows of nothing"));
        }
        let cols = self.shape(parts[0]).1;
        if parts.iter().any(|&p| self.shape(p).1 != cols) {
            return Err(contract("concat_rows: column counts differ"));
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("column counts checked");
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// `S · x` for a constant row-sparse `S`.
    pub fn sparse_matmul(&mut self, sparse: SparseRows, x: Var) -> Result<Var> {
        let (xr, xc) = self.shape(x);
        if sparse.cols != xr {
            return Err(contract(format!(
                "sparse_matmul: {} columns against {} rows",
                sparse.cols, xr
            )));
        }
        let xv = self.value(x);
        let mut out = Mat::zeros((sparse.n_rows(), xc));
        for (r, entries) in sparse.rows.iter().enumerate() {
            let mut row = out.row_mut(r);
            for &(c, w) in entries {
                if c >= xr {
                    return Err(contract(format!("sparse_matmul: index {c} >= {xr}")));
                }
                row.scaled_add(w, &xv.row(c));
            }
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::Sparse(sparse, x), rg))
    }

    /// Row-wise layer normalization with learned `1×n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        if self.shape(gamma) != (1, c) || self.shape(beta) != (1, c) {
            return Err(contract("layer_norm: gain/bias must be 1×n"));
        }
        let xv = self.value(x);
        let mut xhat = Mat::zeros((r, c));
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = xv.row(i);
            let mean = row.sum() / c as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for j in 0..c {
                xhat[[i, j]] = (row[j] - mean) * is;
            }
            inv_std.push(is);
        }
        let out = &xhat * self.value(gamma) + self.value(beta);
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Fused multi-head scaled dot-product attention.
    ///
    /// `q`, `k`, `v` are `rows × dim` with every sample occupying one row
    /// range in `segments`. Queries attend only to keys of their own segment,
    /// and only to keys whose `key_mask` entry is true. Heads split the
    /// columns into `heads` equal blocks.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        segments: &[Range<usize>],
        key_mask: &[bool],
        heads: usize,
    ) -> Result<Var> {
        let (rows, dim) = self.shape(q);
        if self.shape(k) != (rows, dim) || self.shape(v) != (rows, dim) {
            return Err(contract("attention: q, k, v shapes differ"));
        }
        if heads == 0 || dim % heads != 0 {
            return Err(contract(format!("attention: dim {dim} not divisible by {heads} heads")));
        }
        if key_mask.len() != rows {
            return Err(contract(format!(
                "attention: mask length {} for {} positions",
                key_mask.len(),
                rows
            )));
        }
        let dh = dim / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut out = Mat::zeros((rows, dim));
        let mut weights = Vec::with_capacity(segments.len());
        for seg in segments {
            if seg.end > rows || seg.start >= seg.end {
                return Err(contract(format!("attention: bad segment {seg:?}")));
            }
            if !key_mask[seg.clone()].iter().any(|&m| m) {
                return Err(contract("attention: every key position masked"));
            }
            let len = seg.len();
            let mut per_head = Vec::with_capacity(heads);
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let qh = qv.slice(s![seg.clone(), cols.clone()]);
                let kh = kv.slice(s![seg.clone(), cols.clone()]);
                let vh = vv.slice(s![seg.clone(), cols.clone()]);
                let mut w = qh.dot(&kh.t()) * scale;
                for i in 0..len {
                    let mut row = w.row_mut(i);
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..len {
                        if key_mask[seg.start + j] && row[j] > max {
                            max = row[j];
                        }
                    }
                    let mut total = 0.0;
                    for j in 0..len {
                        if key_mask[seg.start + j] {
                            row[j] = (row[j] - max).exp();
                            total += row[j];
                        } else {
                            row[j] = 0.0;
                        }
                    }
                    row /= total;
                }
                let oh = w.dot(&vh);
                out.slice_mut(s![seg.clone(), cols]).assign(&oh);
                per_head.push(w);
            }
            weights.push(per_head);
        }
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                segments: segments.to_vec(),
                weights,
            },
            rg,
        ))
    }

    /// Attention weights recorded by an [`attention`](Self::attention) node.
    pub fn attention_weights(&self, v: Var) -> Option<&AttentionWeights> {
        match &self.nodes[v.0].op {
            Op::Attention { weights, .. } => Some(weights),
            _ => None,
        }
    }

    /// Mean binary cross-entropy of an `n×1` probability column against
    /// 0/1 labels. Probabilities are clamped to `[1e-7, 1 − 1e-7]`.
    pub fn bce(&mut self, p: Var, labels: &[f64]) -> Result<Var> {
        let (r, c) = self.shape(p);
        if c != 1 || r != labels.len() || r == 0 {
            return Err(contract(format!(
                "bce: {r}x{c} probabilities for {} labels",
                labels.len()
            )));
        }
        let pv = self.value(p);
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let pi = pv[[i, 0]].clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            total -= y * pi.ln() + (1.0 - y) * (1.0 - pi).ln();
        }
        let out = Mat::from_elem((1, 1), total / r as f64);
        let rg = self.rg(p);
        Ok(self.push(
            out,
            Op::Bce {
                p,
                labels: labels.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Mat::from_elem((1, 1), self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let out = Mat::from_elem((1, 1), self.value(a).sum() / n);
        let rg = self.rg(a);
        self.push(out, Op::Mean(a), rg)
    }

    /// Propagates the gradient of the scalar `loss` to every leaf that
    /// requires one.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(contract(format!(
                "backward on non-scalar of shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Mat>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Mat::ones((1, 1)));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: Mat, grads: &mut [Option<Mat>]) {
        if matches!(self.nodes[i].op, Op::Leaf) {
            let slot = &mut self.nodes[i].grad;
            match slot {
                Some(existing) => *existing += &g,
                None => *slot = Some(g),
            }
            return;
        }
        let nodes = &self.nodes;
        let mut acc = |v: Var, d: Mat| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &d,
                slot => *slot = Some(d),
            }
        };
        let node = &nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if nodes[a.0].requires_grad {
                    acc(*a, g.dot(&nodes[b.0].value.t()));
                }
                if nodes[b.0].requires_grad {
                    acc(*b, nodes[a.0].value.t().dot(&g));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g);
            }
            Op::Sub(a, b) => {
                acc(*b, -&g);
                acc(*a, g);
            }
            Op::Mul(a, b) => {
                if nodes[a.0].requires_grad {
                    acc(*a, &g * &nodes[b.0].value);
                }
                if nodes[b.0].requires_grad {
                    acc(*b, &g * &nodes[a.0].value);
                }
            }
            Op::AddRow(a, row) => {
                if nodes[row.0].requires_grad {
                    acc(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                acc(*a, g);
            }
            Op::Scale(a, f) => acc(*a, g * *f),
            Op::Sigmoid(a) => {
                let y = &node.value;
                let mut d = g;
                d.zip_mut_with(y, |d, &y| *d *= y * (1.0 - y));
                acc(*a, d);
            }
            Op::Tanh(a) => {
                let y = &node.value;
                let mut d = g;
                d.zip_mut_with(y, |d, &y| *d *= 1.0 - y * y);
                acc(*a, d);
            }
            Op::Relu(a) => {
                let mut d = g;
                d.zip_mut_with(&nodes[a.0].value, |d, &x| {
                    if x <= 0.0 {
                        *d = 0.0
                    }
                });
                acc(*a, d);
            }
            Op::SliceCols(a, start) => {
                let mut d = Mat::zeros(nodes[a.0].value.dim());
                let w = g.ncols();
                d.slice_mut(s![.., *start..*start + w]).assign(&g);
                acc(*a, d);
            }
            Op::SliceRows(a, start) => {
                let mut d = Mat::zeros(nodes[a.0].value.dim());
                let h = g.nrows();
                d.slice_mut(s![*start..*start + h, ..]).assign(&g);
                acc(*a, d);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let h = nodes[p.0].value.nrows();
                    acc(*p, g.slice(s![offset..offset + h, ..]).to_owned());
                    offset += h;
                }
            }
            Op::Sparse(sparse, x) => {
                let mut d = Mat::zeros(nodes[x.0].value.dim());
                for (r, entries) in sparse.rows.iter().enumerate() {
                    let gr = g.row(r);
                    for &(c, w) in entries {
                        d.row_mut(c).scaled_add(w, &gr);
                    }
                }
                acc(*x, d);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                if nodes[gamma.0].requires_grad {
                    acc(*gamma, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if nodes[beta.0].requires_grad {
                    acc(*beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if nodes[x.0].requires_grad {
                    let gam = nodes[gamma.0].value.row(0);
                    let (r, c) = g.dim();
                    let n = c as f64;
                    let mut d = Mat::zeros((r, c));
                    for i in 0..r {
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xhat = 0.0;
                        for j in 0..c {
                            let dxh = g[[i, j]] * gam[j];
                            sum_dxhat += dxh;
                            sum_dxhat_xhat += dxh * xhat[[i, j]];
                        }
                        for j in 0..c {
                            let dxh = g[[i, j]] * gam[j];
                            d[[i, j]] = inv_std[i] / n
                                * (n * dxh - sum_dxhat - xhat[[i, j]] * sum_dxhat_xhat);
                        }
                    }
                    acc(*x, d);
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                segments,
                weights,
            } => {
                let (qv, kv, vv) = (&nodes[q.0].value, &nodes[k.0].value, &nodes[v.0].value);
                let dim = qv.ncols();
                let dh = dim / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let mut dq = Mat::zeros(qv.dim());
                let mut dk = Mat::zeros(kv.dim());
                let mut dv = Mat::zeros(vv.dim());
                for (seg, per_head) in segments.iter().zip(weights) {
                    for (h, w) in per_head.iter().enumerate() {
                        let cols = h * dh..(h + 1) * dh;
                        let go = g.slice(s![seg.clone(), cols.clone()]);
                        let qh = qv.slice(s![seg.clone(), cols.clone()]);
                        let kh = kv.slice(s![seg.clone(), cols.clone()]);
                        let vh = vv.slice(s![seg.clone(), cols.clone()]);
                        // dV = Wᵀ dO
                        dv.slice_mut(s![seg.clone(), cols.clone()])
                            .scaled_add(1.0, &w.t().dot(&go));
                        // softmax backward: dS = W ∘ (dW − rowsum(W ∘ dW))
                        let dw = go.dot(&vh.t());
                        let mut ds = w * &dw;
                        for (mut srow, wrow) in ds.rows_mut().into_iter().zip(w.rows()) {
                            let dot: f64 = srow.sum();
                            srow.zip_mut_with(&wrow, |s, &wv| *s -= wv * dot);
                        }
                        ds *= scale;
                        dq.slice_mut(s![seg.clone(), cols.clone()])
                            .scaled_add(1.0, &ds.dot(&kh));
                        dk.slice_mut(s![seg.clone(), cols.clone()])
                            .scaled_add(1.0, &ds.t().dot(&qh));
                    }
                }
                acc(*q, dq);
                acc(*k, dk);
                acc(*v, dv);
            }
            Op::Bce { p, labels } => {
                let pv = &nodes[p.0].value;
                let n = labels.len() as f64;
                let g0 = g[[0, 0]];
                let mut d = Mat::zeros(pv.dim());
                for (i, &y) in labels.iter().enumerate() {
                    let pi = pv[[i, 0]];
                    if pi > BCE_CLAMP && pi < 1.0 - BCE_CLAMP {
                        d[[i, 0]] = g0 * (-(y / pi) + (1.0 - y) / (1.0 - pi)) / n;
                    }
                }
                acc(*p, d);
            }
            Op::Sum(a) => {
                let g0 = g[[0, 0]];
                acc(*a, Mat::from_elem(nodes[a.0].value.dim(), g0));
            }
            Op::Mean(a) => {
                let shape = nodes[a.0].value.dim();
                let g0 = g[[0, 0]] / (shape.0 * shape.1) as f64;
                acc(*a, Mat::from_elem(shape, g0));
            }
        }
    }

    /// Adds every parameter leaf's gradient into the store.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for node in &self.nodes {
            if let (Some(id), Some(g)) = (node.param, &node.grad) {
                store.add_grad(id, g);
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
