//! Slice-level numeric kernels.
//!
//! Each output element is produced by exactly one thread with a fixed
//! reduction order, so results do not depend on the rayon pool size.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Label value for positions without supervision.
pub const IGNORE: i64 = -100;

const PAR_THRESHOLD: usize = 1 << 15;

#[inline]
pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [S::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    let mut tail = S::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    let s = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    s + tail
}

#[inline]
pub(crate) fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn for_rows<S: Scalar>(c: &mut [S], n: usize, work: usize, f: impl Fn(usize, &mut [S]) + Sync + Send) {
    if work >= PAR_THRESHOLD {
        c.par_chunks_mut(n).enumerate().for_each(|(i, row)| f(i, row));
    } else {
        c.chunks_mut(n).enumerate().for_each(|(i, row)| f(i, row));
    }
}

/// `c[m,n] (+)= a[m,k] · b[k,n]`
pub(crate) fn gemm_nn<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for_rows(c, n, m * k * n, |i, row| {
        let ai = &a[i * k..(i + 1) * k];
        for (p, &av) in ai.iter().enumerate() {
            axpy(av, &b[p * n..(p + 1) * n], row);
        }
    });
}

/// `c[k,n] (+)= a[m,k]ᵀ · b[m,n]`
pub(crate) fn gemm_tn<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for_rows(c, n, m * k * n, |p, row| {
        for i in 0..m {
            axpy(a[i * k + p], &b[i * n..(i + 1) * n], row);
        }
    });
}

/// `c[m,n] (+)= a[m,k] · b[n,k]ᵀ`
pub(crate) fn gemm_nt<S: Scalar>(a: &[S], b: &[S], c: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for_rows(c, n, m * k * n, |i, row| {
        let ai = &a[i * k..(i + 1) * k];
        for (j, out) in row.iter_mut().enumerate() {
            *out += dot(ai, &b[j * k..(j + 1) * k]);
        }
    });
}

/// In-place numerically stable softmax of one slice.
pub fn softmax_slice<S: Scalar>(x: &mut [S]) {
    let max = x.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
    let mut sum = S::zero();
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// `log Σ exp(x)` computed with max subtraction.
pub(crate) fn log_sum_exp<S: Scalar>(x: &[S]) -> S {
    let max = x.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
    let sum: S = x.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

#[inline]
pub(crate) fn gelu_scalar<S: Scalar>(x: S) -> S {
    x * normal_cdf(x)
}

#[inline]
pub(crate) fn normal_cdf<S: Scalar>(x: S) -> S {
    S::lit(0.5) * (S::one() + (x * S::lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

#[inline]
pub(crate) fn normal_pdf<S: Scalar>(x: S) -> S {
    S::lit(0.398_942_280_401_432_7) * (S::lit(-0.5) * x * x).exp()
}

/// Softmax along `axis`.
pub fn softmax<S: Scalar>(x: &Tensor<S>, axis: usize) -> Result<Tensor<S>> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(Error::Shape(format!("axis {axis} invalid for shape {shape:?}")));
    }
    let extent = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = x.clone();
    let data = out.data_mut();
    let mut buf = vec![S::zero(); extent];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * extent * inner + i;
            for (e, b) in buf.iter_mut().enumerate() {
                *b = data[base + e * inner];
            }
            softmax_slice(&mut buf);
            for (e, &b) in buf.iter().enumerate() {
                data[base + e * inner] = b;
            }
        }
    }
    Ok(out)
}

/// Normalizes each last-axis slice with population variance, then applies
/// `gamma`/`beta`. Returns `(output, xhat, inv_std)`.
pub(crate) fn layer_norm_parts<S: Scalar>(
    x: &[S],
    gamma: &[S],
    beta: &[S],
    eps: S,
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let h = gamma.len();
    let rows = x.len() / h;
    let mut out = vec![S::zero(); x.len()];
    let mut xhat = vec![S::zero(); x.len()];
    let mut inv_std = vec![S::zero(); rows];
    let hs = S::from_count(h);
    for r in 0..rows {
        let xr = &x[r * h..(r + 1) * h];
        let mean = xr.iter().copied().sum::<S>() / hs;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / hs;
        let is = S::one() / (var + eps).sqrt();
        inv_std[r] = is;
        for j in 0..h {
            let n = (xr[j] - mean) * is;
            xhat[r * h + j] = n;
            out[r * h + j] = n * gamma[j] + beta[j];
        }
    }
    (out, xhat, inv_std)
}

pub const LAYER_NORM_EPS: f64 = 1e-12;

/// Layer normalization over the last axis.
pub fn layer_norm<S: Scalar>(x: &Tensor<S>, gamma: &Tensor<S>, beta: &Tensor<S>, eps: S) -> Result<Tensor<S>> {
    let h = x.cols();
    if gamma.len() != h || beta.len() != h {
        return Err(Error::Shape(format!(
            "layer_norm: last axis {h}, gamma {:?}, beta {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    let (out, _, _) = layer_norm_parts(x.data(), gamma.data(), beta.data(), eps);
    Tensor::from_vec(x.shape().to_vec(), out)
}

/// Exact-CDF GELU.
pub fn gelu<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(gelu_scalar)
}

/// Per-row negative log-likelihood, `None` for ignored rows.
pub(crate) fn row_nll<S: Scalar>(logits: &[S], vocab: usize, labels: &[i64]) -> Result<Vec<Option<S>>> {
    labels
        .iter()
        .enumerate()
        .map(|(r, &label)| {
            if label == IGNORE {
                return Ok(None);
            }
            let row = &logits[r * vocab..(r + 1) * vocab];
            let idx = usize::try_from(label)
                .ok()
                .filter(|&i| i < vocab)
                .ok_or_else(|| Error::Shape(format!("label {label} outside 0..{vocab}")))?;
            Ok(Some(log_sum_exp(row) - row[idx]))
        })
        .collect()
}

/// Mean of `-log softmax(logits)[label]` over rows whose label is not [`IGNORE`].
pub fn masked_cross_entropy<S: Scalar>(logits: &Tensor<S>, labels: &[i64]) -> Result<S> {
    let v = logits.cols();
    if logits.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows vs {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let nll = row_nll(logits.data(), v, labels)?;
    let (sum, n) = nll
        .into_iter()
        .flatten()
        .fold((S::zero(), 0usize), |(s, n), l| (s + l, n + 1));
    if n == 0 {
        return Err(Error::NoSupervisedPositions);
    }
    Ok(sum / S::from_count(n))
}
