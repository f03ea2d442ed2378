//! Tape-based reverse-mode differentiation over the encoder's kernels.
//!
//! Every forward call appends a node holding its output value and whatever
//! it needs for the backward pass. [`Tape::backward`] walks the nodes in
//! reverse and accumulates gradients into their inputs.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{self, IGNORE};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Geometry of a batched multi-head self-attention call.
#[derive(Clone, Copy, Debug)]
pub struct AttentionShape {
    pub batch: usize,
    pub seq: usize,
    pub heads: usize,
}

enum Op<S> {
    Leaf,
    Gather { table: Var, ids: Vec<usize> },
    MatMul { a: Var, b: Var },
    MatMulNT { a: Var, b: Var },
    AddBias { x: Var, bias: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: S },
    Sum { x: Var },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<S>, inv_std: Vec<S> },
    Gelu { x: Var },
    Tanh { x: Var },
    Softmax { x: Var },
    Attention { q: Var, k: Var, v: Var, key_mask: Vec<bool>, dims: AttentionShape, probs: Vec<S> },
    SelectRows { x: Var, rows: Vec<usize> },
    Dropout { x: Var, mask: Vec<S> },
    CrossEntropy { logits: Var, labels: Vec<i64>, denom: S, probs: Vec<S> },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
}

/// Recorded computation graph.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Shape(msg()))
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Row lookup: `out[r] = table[ids[r]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (rows, h) = (t.rows(), t.cols());
        let mut out = Vec::with_capacity(ids.len() * h);
        for &id in ids {
            if id >= rows {
                return Err(Error::TokenOutOfRange { id, size: rows });
            }
            out.extend_from_slice(t.row(id));
        }
        let value = Tensor::from_vec(vec![ids.len(), h], out)?;
        Ok(self.push(value, Op::Gather { table, ids: ids.to_vec() }))
    }

    /// `a[m,k] · b[k,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        check(bv.shape().len() == 2 && bv.rows() == k, || {
            format!("matmul {:?} x {:?}", av.shape(), bv.shape())
        })?;
        let mut out = vec![S::zero(); m * n];
        kernels::gemm_nn(av.data(), bv.data(), &mut out, m, k, n);
        let value = Tensor::from_vec(vec![m, n], out)?;
        Ok(self.push(value, Op::MatMul { a, b }))
    }

    /// `a[m,k] · b[n,k]ᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, n) = (av.rows(), av.cols(), bv.rows());
        check(bv.cols() == k, || format!("matmul_nt {:?} x {:?}ᵀ", av.shape(), bv.shape()))?;
        let mut out = vec![S::zero(); m * n];
        kernels::gemm_nt(av.data(), bv.data(), &mut out, m, k, n);
        let value = Tensor::from_vec(vec![m, n], out)?;
        Ok(self.push(value, Op::MatMulNT { a, b }))
    }

    /// Adds a bias vector to every last-axis slice.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let h = xv.cols();
        check(bv.len() == h, || format!("bias {:?} for {:?}", bv.shape(), xv.shape()))?;
        let mut value = xv.clone();
        for row in value.data_mut().chunks_mut(h) {
            for (o, &b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(value, Op::AddBias { x, bias }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        check(av.shape() == bv.shape(), || format!("add {:?} + {:?}", av.shape(), bv.shape()))?;
        let mut value = av.clone();
        value.add_assign(bv);
        Ok(self.push(value, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        check(av.shape() == bv.shape(), || format!("mul {:?} * {:?}", av.shape(), bv.shape()))?;
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::from_vec(av.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, factor: S) -> Var {
        let value = self.value(x).map(|v| v * factor);
        self.push(value, Op::Scale { x, factor })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum { x })
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let h = xv.cols();
        check(gv.len() == h && bv.len() == h, || {
            format!("layer_norm {:?} with gamma {:?}", xv.shape(), gv.shape())
        })?;
        let (out, xhat, inv_std) =
            kernels::layer_norm_parts(xv.data(), gv.data(), bv.data(), S::lit(kernels::LAYER_NORM_EPS));
        let value = Tensor::from_vec(xv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::LayerNorm { x, gamma, beta, xhat, inv_std }))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let value = kernels::gelu(self.value(x));
        self.push(value, Op::Gelu { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.tanh());
        self.push(value, Op::Tanh { x })
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        let h = value.cols();
        for row in value.data_mut().chunks_mut(h) {
            kernels::softmax_slice(row);
        }
        self.push(value, Op::Softmax { x })
    }

    /// Scaled dot-product self-attention over `[batch*seq, hidden]` inputs.
    ///
    /// `key_mask[b*seq + j]` is false for padding; such keys get exactly zero
    /// weight. A query whose sequence has no unmasked key yields zeros.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, key_mask: &[bool], dims: AttentionShape) -> Result<Var> {
        let AttentionShape { batch, seq, heads } = dims;
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let h = qv.cols();
        check(
            qv.shape() == kv.shape()
                && qv.shape() == vv.shape()
                && qv.rows() == batch * seq
                && key_mask.len() == batch * seq
                && heads > 0
                && h % heads == 0,
            || format!("attention q {:?} k {:?} v {:?} dims {dims:?}", qv.shape(), kv.shape(), vv.shape()),
        )?;
        let d = h / heads;
        let scale = S::one() / S::from_count(d).sqrt();
        let blocks: Vec<(Vec<S>, Vec<S>)> = (0..batch * heads)
            .into_par_iter()
            .map(|bh| {
                let (b, hd) = (bh / heads, bh % heads);
                let qb = head_block(qv.data(), b, hd, seq, h, d);
                let kb = head_block(kv.data(), b, hd, seq, h, d);
                let vb = head_block(vv.data(), b, hd, seq, h, d);
                let mask = &key_mask[b * seq..(b + 1) * seq];
                let mut probs = vec![S::zero(); seq * seq];
                let mut out = vec![S::zero(); seq * d];
                let live: Vec<usize> = (0..seq).filter(|&j| mask[j]).collect();
                if !live.is_empty() {
                    let mut scores = vec![S::zero(); live.len()];
                    for i in 0..seq {
                        let qi = &qb[i * d..(i + 1) * d];
                        for (s, &j) in scores.iter_mut().zip(&live) {
                            *s = kernels::dot(qi, &kb[j * d..(j + 1) * d]) * scale;
                        }
                        kernels::softmax_slice(&mut scores);
                        let orow = &mut out[i * d..(i + 1) * d];
                        for (&p, &j) in scores.iter().zip(&live) {
                            probs[i * seq + j] = p;
                            kernels::axpy(p, &vb[j * d..(j + 1) * d], orow);
                        }
                    }
                }
                (out, probs)
            })
            .collect();
        let mut out = vec![S::zero(); batch * seq * h];
        let mut probs = Vec::with_capacity(batch * heads * seq * seq);
        for (bh, (o, p)) in blocks.into_iter().enumerate() {
            let (b, hd) = (bh / heads, bh % heads);
            scatter_head(&mut out, &o, b, hd, seq, h, d);
            probs.extend(p);
        }
        let value = Tensor::from_vec(vec![batch * seq, h], out)?;
        Ok(self.push(
            value,
            Op::Attention { q, k, v, key_mask: key_mask.to_vec(), dims, probs },
        ))
    }

    /// Attention weights `[batch, heads, seq, seq]` recorded by an attention node.
    pub fn attention_probs(&self, node: Var) -> Option<&[S]> {
        match &self.nodes[node.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let h = xv.cols();
        let mut out = Vec::with_capacity(rows.len() * h);
        for &r in rows {
            check(r < xv.rows(), || format!("row {r} of {:?}", xv.shape()))?;
            out.extend_from_slice(xv.row(r));
        }
        let value = Tensor::from_vec(vec![rows.len(), h], out)?;
        Ok(self.push(value, Op::SelectRows { x, rows: rows.to_vec() }))
    }

    /// Multiplies elementwise by a fixed mask (0 or the inverse keep rate).
    pub fn dropout(&mut self, x: Var, mask: Vec<S>) -> Result<Var> {
        let xv = self.value(x);
        check(mask.len() == xv.len(), || "dropout mask length".to_string())?;
        let data = xv.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let value = Tensor::from_vec(xv.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Dropout { x, mask }))
    }

    /// `Σ_{labeled rows} −log softmax(logits)[label] / denom`.
    ///
    /// Fixing `denom` to the supervised count of a whole effective batch lets
    /// micro-batch losses add up to the full-batch mean.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[i64], denom: S) -> Result<Var> {
        let lv = self.value(logits);
        let v = lv.cols();
        check(lv.rows() == labels.len(), || {
            format!("{} logit rows vs {} labels", lv.rows(), labels.len())
        })?;
        let nll = kernels::row_nll(lv.data(), v, labels)?;
        let total: S = nll.iter().flatten().copied().sum();
        let mut probs = lv.data().to_vec();
        for row in probs.chunks_mut(v) {
            kernels::softmax_slice(row);
        }
        Ok(self.push(
            Tensor::scalar(total / denom),
            Op::CrossEntropy { logits, labels: labels.to_vec(), denom, probs },
        ))
    }

    /// Mean cross-entropy over non-ignored rows.
    pub fn masked_cross_entropy(&mut self, logits: Var, labels: &[i64]) -> Result<Var> {
        let n = labels.iter().filter(|&&l| l != IGNORE).count();
        if n == 0 {
            return Err(Error::NoSupervisedPositions);
        }
        self.cross_entropy(logits, labels, S::from_count(n))
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape().to_vec(), S::one()));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) {
        let node = &self.nodes[idx];
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Gather { table, ids } => {
                let t = self.value(*table);
                let h = t.cols();
                let acc = slot(grads, *table, t);
                for (r, &id) in ids.iter().enumerate() {
                    kernels::axpy(S::one(), &gd[r * h..(r + 1) * h], &mut acc[id * h..(id + 1) * h]);
                }
            }
            Op::MatMul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                kernels::gemm_nt(gd, bv.data(), slot(grads, *a, av), m, n, k);
                kernels::gemm_tn(av.data(), gd, slot(grads, *b, bv), m, k, n);
            }
            Op::MatMulNT { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                kernels::gemm_nn(gd, bv.data(), slot(grads, *a, av), m, n, k);
                kernels::gemm_tn(gd, av.data(), slot(grads, *b, bv), m, n, k);
            }
            Op::AddBias { x, bias } => {
                let xv = self.value(*x);
                kernels::axpy(S::one(), gd, slot(grads, *x, xv));
                let bv = self.value(*bias);
                let h = bv.len();
                let acc = slot(grads, *bias, bv);
                for row in gd.chunks(h) {
                    kernels::axpy(S::one(), row, acc);
                }
            }
            Op::Add { a, b } => {
                kernels::axpy(S::one(), gd, slot(grads, *a, self.value(*a)));
                kernels::axpy(S::one(), gd, slot(grads, *b, self.value(*b)));
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let acc = slot(grads, *a, av);
                for ((o, &gi), &y) in acc.iter_mut().zip(gd).zip(bv.data()) {
                    *o += gi * y;
                }
                let acc = slot(grads, *b, bv);
                for ((o, &gi), &x) in acc.iter_mut().zip(gd).zip(av.data()) {
                    *o += gi * x;
                }
            }
            Op::Scale { x, factor } => {
                kernels::axpy(*factor, gd, slot(grads, *x, self.value(*x)));
            }
            Op::Sum { x } => {
                let g0 = gd[0];
                for o in slot(grads, *x, self.value(*x)).iter_mut() {
                    *o += g0;
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let gv = self.value(*gamma);
                let h = gv.len();
                let hs = S::from_count(h);
                let gam = gv.data();
                {
                    let acc = slot(grads, *x, self.value(*x));
                    let mut dxhat = vec![S::zero(); h];
                    for (r, &is) in inv_std.iter().enumerate() {
                        let gr = &gd[r * h..(r + 1) * h];
                        let xr = &xhat[r * h..(r + 1) * h];
                        let mut s1 = S::zero();
                        let mut s2 = S::zero();
                        for j in 0..h {
                            dxhat[j] = gr[j] * gam[j];
                            s1 += dxhat[j];
                            s2 += dxhat[j] * xr[j];
                        }
                        let ar = &mut acc[r * h..(r + 1) * h];
                        for j in 0..h {
                            ar[j] += is / hs * (hs * dxhat[j] - s1 - xr[j] * s2);
                        }
                    }
                }
                let acc = slot(grads, *gamma, gv);
                for (gr, xr) in gd.chunks(h).zip(xhat.chunks(h)) {
                    for j in 0..h {
                        acc[j] += gr[j] * xr[j];
                    }
                }
                let acc = slot(grads, *beta, self.value(*beta));
                for gr in gd.chunks(h) {
                    kernels::axpy(S::one(), gr, acc);
                }
            }
            Op::Gelu { x } => {
                let xv = self.value(*x);
                let acc = slot(grads, *x, xv);
                for ((o, &gi), &xi) in acc.iter_mut().zip(gd).zip(xv.data()) {
                    *o += gi * (kernels::normal_cdf(xi) + xi * kernels::normal_pdf(xi));
                }
            }
            Op::Tanh { x } => {
                let y = node.value.data();
                let acc = slot(grads, *x, self.value(*x));
                for ((o, &gi), &yi) in acc.iter_mut().zip(gd).zip(y) {
                    *o += gi * (S::one() - yi * yi);
                }
            }
            Op::Softmax { x } => {
                let y = &node.value;
                let h = y.cols();
                let acc = slot(grads, *x, self.value(*x));
                for ((ar, yr), gr) in acc.chunks_mut(h).zip(y.data().chunks(h)).zip(gd.chunks(h)) {
                    let s = kernels::dot(gr, yr);
                    for j in 0..h {
                        ar[j] += yr[j] * (gr[j] - s);
                    }
                }
            }
            Op::Attention { q, k, v, key_mask, dims, probs } => {
                self.attention_backward(gd, *q, *k, *v, key_mask, *dims, probs, grads);
            }
            Op::SelectRows { x, rows } => {
                let xv = self.value(*x);
                let h = xv.cols();
                let acc = slot(grads, *x, xv);
                for (r, &src) in rows.iter().enumerate() {
                    kernels::axpy(S::one(), &gd[r * h..(r + 1) * h], &mut acc[src * h..(src + 1) * h]);
                }
            }
            Op::Dropout { x, mask } => {
                let acc = slot(grads, *x, self.value(*x));
                for ((o, &gi), &m) in acc.iter_mut().zip(gd).zip(mask) {
                    *o += gi * m;
                }
            }
            Op::CrossEntropy { logits, labels, denom, probs } => {
                let lv = self.value(*logits);
                let v = lv.cols();
                let coef = gd[0] / *denom;
                let acc = slot(grads, *logits, lv);
                for (r, &label) in labels.iter().enumerate() {
                    if label == IGNORE {
                        continue;
                    }
                    let ar = &mut acc[r * v..(r + 1) * v];
                    kernels::axpy(coef, &probs[r * v..(r + 1) * v], ar);
                    ar[label as usize] -= coef;
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        gd: &[S],
        q: Var,
        k: Var,
        v: Var,
        key_mask: &[bool],
        dims: AttentionShape,
        probs: &[S],
        grads: &mut [Option<Tensor<S>>],
    ) {
        let AttentionShape { batch, seq, heads } = dims;
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let h = qv.cols();
        let d = h / heads;
        let scale = S::one() / S::from_count(d).sqrt();
        let blocks: Vec<[Vec<S>; 3]> = (0..batch * heads)
            .into_par_iter()
            .map(|bh| {
                let (b, hd) = (bh / heads, bh % heads);
                let qb = head_block(qv.data(), b, hd, seq, h, d);
                let kb = head_block(kv.data(), b, hd, seq, h, d);
                let vb = head_block(vv.data(), b, hd, seq, h, d);
                let gb = head_block(gd, b, hd, seq, h, d);
                let p = &probs[bh * seq * seq..(bh + 1) * seq * seq];
                let mask = &key_mask[b * seq..(b + 1) * seq];
                let mut dq = vec![S::zero(); seq * d];
                let mut dk = vec![S::zero(); seq * d];
                let mut dv = vec![S::zero(); seq * d];
                let mut ds = vec![S::zero(); seq];
                for i in 0..seq {
                    let gi = &gb[i * d..(i + 1) * d];
                    let pi = &p[i * seq..(i + 1) * seq];
                    let mut weighted = S::zero();
                    for j in 0..seq {
                        if !mask[j] {
                            ds[j] = S::zero();
                            continue;
                        }
                        kernels::axpy(pi[j], gi, &mut dv[j * d..(j + 1) * d]);
                        ds[j] = kernels::dot(gi, &vb[j * d..(j + 1) * d]);
                        weighted += pi[j] * ds[j];
                    }
                    for j in 0..seq {
                        if mask[j] {
                            ds[j] = pi[j] * (ds[j] - weighted) * scale;
                        }
                    }
                    let dqi = &mut dq[i * d..(i + 1) * d];
                    for j in 0..seq {
                        if mask[j] {
                            kernels::axpy(ds[j], &kb[j * d..(j + 1) * d], dqi);
                        }
                    }
                    let qi = &qb[i * d..(i + 1) * d];
                    for j in 0..seq {
                        if mask[j] {
                            kernels::axpy(ds[j], qi, &mut dk[j * d..(j + 1) * d]);
                        }
                    }
                }
                [dq, dk, dv]
            })
            .collect();
        let mut full = [
            vec![S::zero(); batch * seq * h],
            vec![S::zero(); batch * seq * h],
            vec![S::zero(); batch * seq * h],
        ];
        for (bh, parts) in blocks.iter().enumerate() {
            let (b, hd) = (bh / heads, bh % heads);
            for (dst, src) in full.iter_mut().zip(parts) {
                scatter_head(dst, src, b, hd, seq, h, d);
            }
        }
        for (var, g) in [q, k, v].into_iter().zip(full) {
            kernels::axpy(S::one(), &g, slot(grads, var, self.value(var)));
        }
    }
}

fn head_block<S: Scalar>(x: &[S], b: usize, hd: usize, seq: usize, h: usize, d: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(seq * d);
    for t in 0..seq {
        let base = (b * seq + t) * h + hd * d;
        out.extend_from_slice(&x[base..base + d]);
    }
    out
}

fn scatter_head<S: Scalar>(dst: &mut [S], src: &[S], b: usize, hd: usize, seq: usize, h: usize, d: usize) {
    for t in 0..seq {
        let base = (b * seq + t) * h + hd * d;
        dst[base..base + d].copy_from_slice(&src[t * d..(t + 1) * d]);
    }
}

fn slot<'a, S: Scalar>(grads: &'a mut [Option<Tensor<S>>], v: Var, like: &Tensor<S>) -> &'a mut [S] {
    grads[v.0]
        .get_or_insert_with(|| Tensor::zeros(like.shape().to_vec()))
        .data_mut()
}

/// Result of [`Tape::backward`].
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient for `v`, or `None` when `v` does not reach the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, zero-filled when `v` does not reach the loss.
    pub fn wrt(&self, v: Var, tape: &Tape<S>) -> Tensor<S> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape().to_vec()))
    }
}
