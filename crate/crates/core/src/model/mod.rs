//! BERT-style encoder with a tied masked-LM head and a two-layer
//! classification head over the `[CLS]` position.

mod config;
mod encoder;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use config::{ModelConfig, Precision, Preset};
pub use encoder::{
    bind, classify, classify_on, cls_loss_on, encode, encode_on, fit_to_positions, mlm_head_on, mlm_logits, mlm_loss_on, predict, predict_batch,
    predict_ids, Dropout, Prediction, TokenBatch,
};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

/// Per-layer tensor offsets relative to the layer's first tensor.
pub(crate) mod slot {
    pub const Q_W: usize = 0;
    pub const Q_B: usize = 1;
    pub const K_W: usize = 2;
    pub const V_W: usize = 3;
    pub const V_B: usize = 4;
    pub const O_W: usize = 5;
    pub const O_B: usize = 6;
    pub const ATTN_G: usize = 7;
    pub const ATTN_B: usize = 8;
    pub const FF1_W: usize = 9;
    pub const FF1_B: usize = 10;
    pub const FF2_W: usize = 11;
    pub const FF2_B: usize = 12;
    pub const FFN_G: usize = 13;
    pub const FFN_B: usize = 14;
    pub const PER_LAYER: usize = 15;

    pub const MLM_W: usize = 0;
    pub const MLM_B: usize = 1;
    pub const MLM_G: usize = 2;
    pub const MLM_BETA: usize = 3;
    pub const MLM_OUT_B: usize = 4;
    pub const MLM_COUNT: usize = 5;

    pub const CLS_W1: usize = 0;
    pub const CLS_B1: usize = 1;
    pub const CLS_W2: usize = 2;
    pub const CLS_B2: usize = 3;
    pub const CLS_COUNT: usize = 4;
}

pub(crate) const WORD_EMB: usize = 0;
pub(crate) const POS_EMB: usize = 1;

pub(crate) fn layer_base(layer: usize) -> usize {
    2 + slot::PER_LAYER * layer
}

pub(crate) fn mlm_base(cfg: &ModelConfig) -> usize {
    layer_base(cfg.num_layers)
}

pub(crate) fn cls_base(cfg: &ModelConfig) -> usize {
    mlm_base(cfg) + slot::MLM_COUNT
}

/// Canonical tensor names, shapes and initializers.
fn param_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (h, f, v, p) = (cfg.hidden_size, cfg.ff_size, cfg.vocab_size, cfg.max_positions);
    let mut specs = vec![
        ("embeddings.word".to_string(), vec![v, h], Init::Normal),
        ("embeddings.position".to_string(), vec![p, h], Init::Normal),
    ];
    for l in 0..cfg.num_layers {
        let name = |s: &str| format!("layer.{l}.{s}");
        // No key bias: it shifts every score in a softmax row equally and never affects the output.
        for proj in ["query", "key", "value", "output"] {
            specs.push((name(&format!("attention.{proj}.weight")), vec![h, h], Init::Normal));
            if proj != "key" {
                specs.push((name(&format!("attention.{proj}.bias")), vec![h], Init::Zeros));
            }
        }
        specs.push((name("attention.norm.gamma"), vec![h], Init::Ones));
        specs.push((name("attention.norm.beta"), vec![h], Init::Zeros));
        specs.push((name("ffn.intermediate.weight"), vec![h, f], Init::Normal));
        specs.push((name("ffn.intermediate.bias"), vec![f], Init::Zeros));
        specs.push((name("ffn.output.weight"), vec![f, h], Init::Normal));
        specs.push((name("ffn.output.bias"), vec![h], Init::Zeros));
        specs.push((name("ffn.norm.gamma"), vec![h], Init::Ones));
        specs.push((name("ffn.norm.beta"), vec![h], Init::Zeros));
    }
    specs.push(("mlm.transform.weight".into(), vec![h, h], Init::Normal));
    specs.push(("mlm.transform.bias".into(), vec![h], Init::Zeros));
    specs.push(("mlm.norm.gamma".into(), vec![h], Init::Ones));
    specs.push(("mlm.norm.beta".into(), vec![h], Init::Zeros));
    specs.push(("mlm.output_bias".into(), vec![v], Init::Zeros));
    specs.push(("classifier.dense.weight".into(), vec![h, h], Init::Normal));
    specs.push(("classifier.dense.bias".into(), vec![h], Init::Zeros));
    specs.push(("classifier.out.weight".into(), vec![h, 2], Init::Normal));
    specs.push(("classifier.out.bias".into(), vec![2], Init::Zeros));
    specs
}

/// Draws from N(0, std²) truncated to ±2·std by rejection.
pub fn truncated_normal(rng: &mut impl Rng, std: f64) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

fn init_tensor<S: Scalar>(shape: &[usize], init: Init, rng: &mut impl Rng) -> Tensor<S> {
    match init {
        Init::Zeros => Tensor::zeros(shape.to_vec()),
        Init::Ones => Tensor::full(shape.to_vec(), S::one()),
        Init::Normal => {
            let n = shape.iter().product();
            let data = (0..n).map(|_| S::lit(truncated_normal(rng, INIT_STD))).collect();
            Tensor::from_vec(shape.to_vec(), data).expect("spec shape")
        }
    }
}

/// All encoder and head tensors in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters<S> {
    pub config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> ModelParameters<S> {
    /// Truncated-normal weights, zero biases, unit layer-norm gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut config = config.clone();
        config.precision = precision_of::<S>();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = param_specs(&config);
        let names = specs.iter().map(|(n, _, _)| n.clone()).collect();
        let tensors = specs.iter().map(|(_, s, i)| init_tensor(s, *i, &mut rng)).collect();
        Ok(Self { config, names, tensors })
    }

    /// Builds parameters from named tensors; every canonical name must appear
    /// exactly once with its canonical shape.
    pub fn from_named(config: &ModelConfig, named: Vec<(String, Tensor<S>)>) -> Result<Self> {
        config.validate()?;
        let mut config = config.clone();
        config.precision = precision_of::<S>();
        let specs = param_specs(&config);
        let index: HashMap<&str, usize> = specs.iter().enumerate().map(|(i, (n, _, _))| (n.as_str(), i)).collect();
        let mut slots: Vec<Option<Tensor<S>>> = vec![None; specs.len()];
        for (name, t) in named {
            let &i = index
                .get(name.as_str())
                .ok_or_else(|| Error::Checkpoint(format!("unknown tensor name {name:?}")))?;
            if t.shape() != specs[i].1.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    specs[i].1
                )));
            }
            if slots[i].replace(t).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
            }
        }
        let tensors = slots
            .into_iter()
            .zip(&specs)
            .map(|(t, (n, _, _))| t.ok_or_else(|| Error::Checkpoint(format!("missing tensor {n}"))))
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            names: specs.into_iter().map(|(n, _, _)| n).collect(),
            tensors,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Redraws the classification head from `seed`.
    pub fn reinit_classifier(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = cls_base(&self.config);
        let specs = param_specs(&self.config);
        for i in base..base + slot::CLS_COUNT {
            self.tensors[i] = init_tensor(&specs[i].1, specs[i].2, &mut rng);
        }
    }

    pub fn cast<T: Scalar>(&self) -> ModelParameters<T> {
        let mut config = self.config.clone();
        config.precision = precision_of::<T>();
        ModelParameters {
            config,
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

/// Runs `forward` on a fresh tape with every parameter bound and returns the
/// scalar loss and one gradient per parameter tensor (zero where unreachable).
pub fn loss_and_grads<S: Scalar>(
    params: &ModelParameters<S>,
    forward: impl FnOnce(&mut Tape<S>, &[Var]) -> Result<Var>,
) -> Result<(S, Vec<Tensor<S>>)> {
    let mut tape = Tape::new();
    let vars = bind(&mut tape, params);
    let loss = forward(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let loss_value = tape.value(loss).item();
    Ok((loss_value, vars.iter().map(|&v| grads.wrt(v, &tape)).collect()))
}

/// Forward-only evaluation of a scalar loss.
pub fn loss_only<S: Scalar>(
    params: &ModelParameters<S>,
    forward: impl FnOnce(&mut Tape<S>, &[Var]) -> Result<Var>,
) -> Result<S> {
    let mut tape = Tape::new();
    let vars = bind(&mut tape, params);
    let loss = forward(&mut tape, &vars)?;
    Ok(tape.value(loss).item())
}

fn precision_of<S: Scalar>() -> Precision {
    if S::DTYPE == "f64" {
        Precision::F64
    } else {
        Precision::F32
    }
}
