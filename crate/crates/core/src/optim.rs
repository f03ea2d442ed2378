//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay; 0 disables it.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub m: Tensor<S>,
    pub v: Tensor<S>,
    pub t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(shape: &[usize]) -> Self {
        Self {
            m: Tensor::zeros(shape.to_vec()),
            v: Tensor::zeros(shape.to_vec()),
            t: 0,
        }
    }
}

/// One Adam update of `param` in place.
pub fn adam_step<S: Scalar>(
    param: &mut Tensor<S>,
    grad: &Tensor<S>,
    state: &mut AdamState<S>,
    cfg: &AdamConfig,
) -> Result<()> {
    if !(cfg.lr > 0.0) {
        return Err(Error::InvalidLearningRate(cfg.lr));
    }
    if param.shape() != grad.shape() || param.shape() != state.m.shape() {
        return Err(Error::Shape(format!(
            "adam: param {:?}, grad {:?}, state {:?}",
            param.shape(),
            grad.shape(),
            state.m.shape()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (S::lit(cfg.beta1), S::lit(cfg.beta2));
    let bc1 = S::one() - S::lit(cfg.beta1.powi(t));
    let bc2 = S::one() - S::lit(cfg.beta2.powi(t));
    let (lr, eps, wd) = (S::lit(cfg.lr), S::lit(cfg.eps), S::lit(cfg.weight_decay));
    let p = param.data_mut();
    let (m, v) = (state.m.data_mut(), state.v.data_mut());
    for i in 0..p.len() {
        let g = grad.data()[i];
        m[i] = b1 * m[i] + (S::one() - b1) * g;
        v[i] = b2 * v[i] + (S::one() - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        let mut update = m_hat / (v_hat.sqrt() + eps);
        if cfg.weight_decay != 0.0 {
            update += wd * p[i];
        }
        p[i] -= lr * update;
    }
    Ok(())
}

/// Adam over an ordered list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Adam<S> {
    pub config: AdamConfig,
    pub states: Vec<AdamState<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor<S>>) -> Self {
        Self {
            config,
            states: params.into_iter().map(|p| AdamState::new(p.shape())).collect(),
        }
    }

    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Tensor<S>>, grads: &[Tensor<S>]) -> Result<()> {
        let mut n = 0;
        for ((p, g), s) in params.into_iter().zip(grads).zip(&mut self.states) {
            adam_step(p, g, s, &self.config)?;
            n += 1;
        }
        if n != self.states.len() || n != grads.len() {
            return Err(Error::Shape(format!(
                "adam: {n} params stepped, {} states, {} grads",
                self.states.len(),
                grads.len()
            )));
        }
        Ok(())
    }
}
