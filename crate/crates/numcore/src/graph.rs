//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation in creation order, so parents always
//! precede children and a single reverse sweep visits each node once.
//! Parameter leaves read their values straight out of a borrowed
//! [`ParamStore`]; nothing is copied until an op produces a new tensor.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};

const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Tanh(Var),
    Sigmoid(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    Reshape(Var),
    MaskedSoftmax(Var, usize),
    MaxPoolRows {
        x: Var,
        argmax: Vec<usize>,
    },
    MeanRows(Var, usize, usize),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        weights: Vec<f64>,
        probs: Vec<f64>,
    },
    MulConst(Var, Tensor),
}

struct Node {
    value: Value,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation for later differentiation.
pub struct Graph<'p> {
    store: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    param_vars: BTreeMap<ParamId, Var>,
}

fn as_matrix(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl<'p> Graph<'p> {
    pub fn new() -> Graph<'static> {
        Graph {
            store: None,
            nodes: Vec::new(),
            param_vars: BTreeMap::new(),
        }
    }

    pub fn with_params(store: &'p ParamStore) -> Graph<'p> {
        Graph {
            store: Some(store),
            nodes: Vec::new(),
            param_vars: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self
                .store
                .expect("parameter node without a store")
                .value(*id),
        }
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf that does not receive a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf that receives a gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf bound to a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let store = self.store.expect("graph was built without a parameter store");
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
            requires_grad: store.is_trainable(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim("add", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim("mul", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, s), rg)
    }

    /// `x (m×n) + b (n)` with `b` broadcast over rows.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tb.len() != tx.cols() {
            return Err(Error::dim("add_bias", tx.shape(), tb.shape()));
        }
        let n = tx.cols();
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(n) {
            for (v, bv) in row.iter_mut().zip(tb.data()) {
                *v += bv;
            }
        }
        let out = Tensor::from_parts(tx.shape().to_vec(), data);
        let rg = self.rg(&[x, b]);
        Ok(self.push(out, Op::AddBias(x, b), rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(Error::dim("matmul", ta.shape(), tb.shape()));
        }
        let (m, k) = as_matrix(ta);
        let n = tb.cols();
        let mut data = vec![0.0; m * n];
        gemm_acc(ta.data(), tb.data(), &mut data, m, k, n);
        let out = Tensor::from_parts(vec![m, n], data);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `x·W + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.shape().len() != 2 {
            return Err(Error::dim("transpose", ta.shape(), &[]));
        }
        let (m, n) = as_matrix(ta);
        let src = ta.data();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        let out = Tensor::from_parts(vec![n, m], data);
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let rg = self.rg(&[a]);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(&[a]);
        self.push(out, Op::Sigmoid(a), rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .map(|x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()));
        let rg = self.rg(&[a]);
        self.push(out, Op::Gelu(a), rg)
    }

    /// Normalizes each row over its columns, then applies `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let tx = self.value(x);
        let n = tx.cols();
        let (tg, tb) = (self.value(gamma), self.value(beta));
        if tg.len() != n || tb.len() != n {
            return Err(Error::dim("layer_norm", tx.shape(), tg.shape()));
        }
        let rows = tx.len() / n;
        let mut xhat = vec![0.0; tx.len()];
        let mut inv_std = vec![0.0; rows];
        let mut data = vec![0.0; tx.len()];
        for r in 0..rows {
            let row = &tx.data()[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = is;
            for j in 0..n {
                let h = (row[j] - mean) * is;
                xhat[r * n + j] = h;
                data[r * n + j] = h * tg.data()[j] + tb.data()[j];
            }
        }
        let out = Tensor::from_parts(tx.shape().to_vec(), data);
        let rg = self.rg(&[x, gamma, beta]);
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

    /// Gathers rows of `table (V×d)` → `(len(ids)×d)`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        if tt.shape().len() != 2 {
            return Err(Error::dim("embedding", tt.shape(), &[ids.len()]));
        }
        if ids.is_empty() {
            return Err(Error::Contract("embedding lookup of zero ids".into()));
        }
        let (v, d) = as_matrix(tt);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::Contract(format!(
                    "token id {id} outside embedding table of {v} rows"
                )));
            }
            data.extend_from_slice(tt.row(id));
        }
        let out = Tensor::from_parts(vec![ids.len(), d], data);
        let rg = self.rg(&[table]);
        Ok(self.push(
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Concatenates along the last axis. All parts must have the same row
    /// count; rank-1 inputs give a rank-1 output.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let t0 = self.value(*first);
        let rank1 = t0.shape().len() == 1;
        let rows = t0.rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows || (t.shape().len() == 1) != rank1 {
                return Err(Error::dim("concat", t0.shape(), t.shape()));
            }
            cols += t.cols();
        }
        let mut data = vec![0.0; rows * cols];
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            let c = t.cols();
            for r in 0..rows {
                data[r * cols + offset..r * cols + offset + c].copy_from_slice(t.row(r));
            }
            offset += c;
        }
        let shape = if rank1 { vec![cols] } else { vec![rows, cols] };
        let out = Tensor::from_parts(shape, data);
        let rg = self.rg(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Stacks matrices (or rank-1 rows) vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_rows of zero tensors".into()))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(Error::dim("concat_rows", self.value(*first).shape(), t.shape()));
            }
            data.extend_from_slice(t.data());
        }
        let rows = data.len() / cols;
        let out = Tensor::from_parts(vec![rows, cols], data);
        let rg = self.rg(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Columns `[start, end)` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = as_matrix(ta);
        if start >= end || end > n {
            return Err(Error::Span {
                start,
                end,
                rows: n,
            });
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for r in 0..m {
            data.extend_from_slice(&ta.row(r)[start..end]);
        }
        let shape = if ta.shape().len() == 1 { vec![w] } else { vec![m, w] };
        let out = Tensor::from_parts(shape, data);
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::SliceCols(a, start, end), rg))
    }

    /// Rows `[start, end)` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = as_matrix(ta);
        if ta.shape().len() != 2 || start >= end || end > m {
            return Err(Error::Span {
                start,
                end,
                rows: m,
            });
        }
        let out = Tensor::from_parts(vec![end - start, n], ta.data()[start * n..end * n].to_vec());
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::SliceRows(a, start, end), rg))
    }

    /// Row `r` of a matrix as a rank-1 tensor.
    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        let s = self.slice_rows(a, r, r + 1)?;
        let n = self.value(s).cols();
        self.reshape(s, vec![n])
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Row-wise softmax over the first `valid` columns; the remaining columns
    /// get probability exactly 0 (the effect of an additive −∞ mask).
    pub fn masked_softmax_rows(&mut self, a: Var, valid: usize) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = as_matrix(ta);
        if valid == 0 || valid > n {
            return Err(Error::Span {
                start: 0,
                end: valid,
                rows: n,
            });
        }
        let mut data = vec![0.0; m * n];
        for r in 0..m {
            let row = &ta.row(r)[..valid];
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..valid {
                let e = (row[j] - mx).exp();
                data[r * n + j] = e;
                z += e;
            }
            for v in &mut data[r * n..r * n + valid] {
                *v /= z;
            }
        }
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::MaskedSoftmax(a, valid), rg))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).cols();
        self.masked_softmax_rows(a, n)
    }

    /// Column-wise max over rows `[start, end)` → rank-1 tensor. The gradient
    /// flows to the argmax row of each column; ties go to the lowest row.
    pub fn max_pool_rows(&mut self, h: Var, start: usize, end: usize) -> Result<Var> {
        let th = self.value(h);
        let (m, n) = as_matrix(th);
        if th.shape().len() != 2 || start >= end || end > m {
            return Err(Error::Span {
                start,
                end,
                rows: m,
            });
        }
        let mut data = th.row(start).to_vec();
        let mut argmax = vec![start; n];
        for r in start + 1..end {
            for (j, &v) in th.row(r).iter().enumerate() {
                if v > data[j] {
                    data[j] = v;
                    argmax[j] = r;
                }
            }
        }
        let out = Tensor::from_parts(vec![n], data);
        let rg = self.rg(&[h]);
        Ok(self.push(out, Op::MaxPoolRows { x: h, argmax }, rg))
    }

    /// Column-wise mean over rows `[start, end)` → rank-1 tensor.
    pub fn mean_rows(&mut self, h: Var, start: usize, end: usize) -> Result<Var> {
        let th = self.value(h);
        let (m, n) = as_matrix(th);
        if start >= end || end > m {
            return Err(Error::Span {
                start,
                end,
                rows: m,
            });
        }
        let mut data = vec![0.0; n];
        for r in start..end {
            for (d, v) in data.iter_mut().zip(th.row(r)) {
                *d += v;
            }
        }
        let k = (end - start) as f64;
        for d in &mut data {
            *d /= k;
        }
        let out = Tensor::from_parts(vec![n], data);
        let rg = self.rg(&[h]);
        Ok(self.push(out, Op::MeanRows(h, start, end), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(out, Op::Sum(a), rg)
    }

    /// `(1/B)·Σ_b w[y_b]·(−log softmax(logits_b)[y_b])` for `logits (B×K)`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        class_weights: &[f64],
    ) -> Result<Var> {
        let tl = self.value(logits);
        let (b, k) = as_matrix(tl);
        if labels.len() != b {
            return Err(Error::dim("softmax_cross_entropy", tl.shape(), &[labels.len()]));
        }
        if class_weights.len() != k {
            return Err(Error::Config(format!(
                "{} class weights given for {k} classes",
                class_weights.len()
            )));
        }
        if let Some(w) = class_weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::Config(format!("class weights must be positive, got {w}")));
        }
        let mut probs = vec![0.0; b * k];
        let mut total = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(Error::Label {
                    label: y,
                    classes: k,
                });
            }
            let row = tl.row(r);
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            let log_z = mx + z.ln();
            for j in 0..k {
                probs[r * k + j] = (row[j] - log_z).exp();
            }
            total += class_weights[y] * (log_z - row[y]);
        }
        let out = Tensor::scalar(total / b as f64);
        let rg = self.rg(&[logits]);
        Ok(self.push(
            out,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                weights: class_weights.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Unweighted cross-entropy; identical to the weighted form with unit weights.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let k = self.value(logits).cols();
        self.softmax_cross_entropy(logits, labels, &vec![1.0; k])
    }

    /// Inverted dropout. Identity in eval mode or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, training: bool, rng: &mut Rng) -> Result<Var> {
        check_dropout_rate(p)?;
        if !training || p == 0.0 {
            return Ok(x);
        }
        let tx = self.value(x);
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..tx.len())
            .map(|_| if rng.uniform() < p { 0.0 } else { keep })
            .collect();
        let mask = Tensor::from_parts(tx.shape().to_vec(), mask);
        let data = tx.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect();
        let out = Tensor::from_parts(tx.shape().to_vec(), data);
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::MulConst(x, mask), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lt.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            params: self.param_vars.clone(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = self.value(Var(i));
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let tb = self.value(*b);
                    let d = zip_map(g, tb, |x, y| x * y);
                    self.accumulate(grads, *a, d);
                }
                if self.wants(*b) {
                    let ta = self.value(*a);
                    let d = zip_map(g, ta, |x, y| x * y);
                    self.accumulate(grads, *b, d);
                }
            }
            Op::Scale(a, s) => {
                let s = *s;
                self.accumulate(grads, *a, g.map(|x| x * s));
            }
            Op::AddBias(x, b) => {
                self.accumulate(grads, *x, g.clone());
                if self.wants(*b) {
                    let tb = self.value(*b);
                    let n = tb.len();
                    let mut d = vec![0.0; n];
                    for row in g.data().chunks(n) {
                        for (acc, v) in d.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    self.accumulate(grads, *b, Tensor::from_parts(tb.shape().to_vec(), d));
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = as_matrix(ta);
                let n = tb.cols();
                if self.wants(*a) {
                    let mut d = vec![0.0; m * k];
                    gemm_nt_acc(g.data(), tb.data(), &mut d, m, n, k);
                    self.accumulate(grads, *a, Tensor::from_parts(vec![m, k], d));
                }
                if self.wants(*b) {
                    let mut d = vec![0.0; k * n];
                    gemm_tn_acc(ta.data(), g.data(), &mut d, m, k, n);
                    self.accumulate(grads, *b, Tensor::from_parts(vec![k, n], d));
                }
            }
            Op::Transpose(a) => {
                let (n, m) = as_matrix(g);
                let mut d = vec![0.0; m * n];
                for r in 0..n {
                    for c in 0..m {
                        d[c * n + r] = g.data()[r * m + c];
                    }
                }
                self.accumulate(grads, *a, Tensor::from_parts(vec![m, n], d));
            }
            Op::Tanh(a) => {
                let d = zip_map(g, out, |gv, y| gv * (1.0 - y * y));
                self.accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let d = zip_map(g, out, |gv, y| gv * y * (1.0 - y));
                self.accumulate(grads, *a, d);
            }
            Op::Gelu(a) => {
                let d = zip_map(g, self.value(*a), |gv, x| {
                    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
                    let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                    gv * (0.5 * (1.0 + t) + 0.5 * x * dt)
                });
                self.accumulate(grads, *a, d);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let tg = self.value(*gamma);
                let n = tg.len();
                let rows = xhat.len() / n;
                if self.wants(*x) {
                    let mut d = vec![0.0; xhat.len()];
                    for r in 0..rows {
                        let gr = &g.data()[r * n..(r + 1) * n];
                        let hr = &xhat[r * n..(r + 1) * n];
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for j in 0..n {
                            let dh = gr[j] * tg.data()[j];
                            sum_dh += dh;
                            sum_dh_h += dh * hr[j];
                        }
                        let scale = inv_std[r] / n as f64;
                        for j in 0..n {
                            let dh = gr[j] * tg.data()[j];
                            d[r * n + j] = scale * (n as f64 * dh - sum_dh - hr[j] * sum_dh_h);
                        }
                    }
                    self.accumulate(grads, *x, Tensor::from_parts(g.shape().to_vec(), d));
                }
                if self.wants(*gamma) || self.wants(*beta) {
                    let mut dg = vec![0.0; n];
                    let mut db = vec![0.0; n];
                    for r in 0..rows {
                        for j in 0..n {
                            let gv = g.data()[r * n + j];
                            dg[j] += gv * xhat[r * n + j];
                            db[j] += gv;
                        }
                    }
                    let gshape = tg.shape().to_vec();
                    let bshape = self.value(*beta).shape().to_vec();
                    self.accumulate(grads, *gamma, Tensor::from_parts(gshape, dg));
                    self.accumulate(grads, *beta, Tensor::from_parts(bshape, db));
                }
            }
            Op::Embedding { table, ids } => {
                let tt = self.value(*table);
                let d = tt.cols();
                let mut dt = vec![0.0; tt.len()];
                for (t, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        dt[id * d + j] += g.data()[t * d + j];
                    }
                }
                self.accumulate(grads, *table, Tensor::from_parts(tt.shape().to_vec(), dt));
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let tp = self.value(p);
                    let c = tp.cols();
                    if self.wants(p) {
                        let mut d = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            d.extend_from_slice(&g.data()[r * cols + offset..r * cols + offset + c]);
                        }
                        self.accumulate(grads, p, Tensor::from_parts(tp.shape().to_vec(), d));
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let tp = self.value(p);
                    let len = tp.len();
                    if self.wants(p) {
                        let d = g.data()[offset..offset + len].to_vec();
                        self.accumulate(grads, p, Tensor::from_parts(tp.shape().to_vec(), d));
                    }
                    offset += len;
                }
            }
            Op::SliceCols(a, start, end) => {
                let ta = self.value(*a);
                let (m, n) = as_matrix(ta);
                let w = end - start;
                let mut d = vec![0.0; m * n];
                for r in 0..m {
                    d[r * n + start..r * n + end].copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                }
                self.accumulate(grads, *a, Tensor::from_parts(ta.shape().to_vec(), d));
            }
            Op::SliceRows(a, start, _end) => {
                let ta = self.value(*a);
                let n = ta.cols();
                let mut d = vec![0.0; ta.len()];
                d[start * n..start * n + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, *a, Tensor::from_parts(ta.shape().to_vec(), d));
            }
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, Tensor::from_parts(shape, g.data().to_vec()));
            }
            Op::MaskedSoftmax(a, valid) => {
                let (m, n) = as_matrix(out);
                let mut d = vec![0.0; m * n];
                for r in 0..m {
                    let p = &out.data()[r * n..r * n + valid];
                    let gr = &g.data()[r * n..r * n + valid];
                    let dot: f64 = p.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..*valid {
                        d[r * n + j] = p[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(grads, *a, Tensor::from_parts(out.shape().to_vec(), d));
            }
            Op::MaxPoolRows { x, argmax, .. } => {
                let tx = self.value(*x);
                let n = tx.cols();
                let mut d = vec![0.0; tx.len()];
                for (j, &r) in argmax.iter().enumerate() {
                    d[r * n + j] += g.data()[j];
                }
                self.accumulate(grads, *x, Tensor::from_parts(tx.shape().to_vec(), d));
            }
            Op::MeanRows(x, start, end) => {
                let tx = self.value(*x);
                let n = tx.cols();
                let k = (end - start) as f64;
                let mut d = vec![0.0; tx.len()];
                for r in *start..*end {
                    for j in 0..n {
                        d[r * n + j] = g.data()[j] / k;
                    }
                }
                self.accumulate(grads, *x, Tensor::from_parts(tx.shape().to_vec(), d));
            }
            Op::Sum(a) => {
                let shape = self.value(*a).shape().to_vec();
                let gv = g.data()[0];
                self.accumulate(grads, *a, Tensor::filled(&shape, gv));
            }
            Op::CrossEntropy {
                logits,
                labels,
                weights,
                probs,
            } => {
                let tl = self.value(*logits);
                let (b, k) = as_matrix(tl);
                let gv = g.data()[0];
                let mut d = probs.clone();
                for (r, &y) in labels.iter().enumerate() {
                    let s = gv * weights[y] / b as f64;
                    let row = &mut d[r * k..(r + 1) * k];
                    row[y] -= 1.0;
                    for v in row.iter_mut() {
                        *v *= s;
                    }
                }
                self.accumulate(grads, *logits, Tensor::from_parts(tl.shape().to_vec(), d));
            }
            Op::MulConst(a, mask) => {
                let d = zip_map(g, mask, |x, m| x * m);
                self.accumulate(grads, *a, d);
            }
        }
    }
}

pub(crate) fn check_dropout_rate(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {p}")));
    }
    Ok(())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: BTreeMap<ParamId, Var>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`, if `v` requires one and was reached.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Per-parameter gradients for every trainable parameter of `store`.
    /// Trainable parameters the loss never touched get zeros.
    pub fn into_param_grads(mut self, store: &ParamStore) -> ParamGrads {
        let mut out = ParamGrads::zeros(store);
        for (id, var) in &self.params {
            if let (Some(slot), Some(g)) = (out.grads[id.0].as_mut(), self.grads[var.0].take()) {
                *slot = g;
            }
        }
        out
    }
}

/// Gradient buffers indexed by [`ParamId`]; `None` marks a frozen parameter.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    grads: Vec<Option<Tensor>>,
}

impl ParamGrads {
    pub fn zeros(store: &ParamStore) -> Self {
        ParamGrads {
            grads: store
                .iter()
                .map(|(_, p)| p.trainable.then(|| Tensor::zeros(p.value.shape())))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, Option<&Tensor>)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g.as_ref()))
    }

    /// `self += scale · other`, elementwise.
    pub fn add_scaled(&mut self, other: &ParamGrads, scale: f64) {
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            if let (Some(m), Some(t)) = (mine.as_mut(), theirs.as_ref()) {
                m.add_scaled(t, scale);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.iter_mut().flatten() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
}
