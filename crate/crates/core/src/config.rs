//! Run configuration: built-in defaults, overridden by a JSON file, overridden by flags.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::model::{ModelConfig, Preset};
use crate::train::{FinetuneConfig, PretrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mask_prob: f64,
    pub window_len: usize,
    pub overlap: usize,
    /// Shared by pre-training and fine-tuning.
    pub lr: f64,
    pub effective_batch: usize,
    pub micro_batch: usize,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub finetune_batch: usize,
    pub seed: u64,
    pub preset: Preset,
    pub dropout_prob: f64,
    pub max_positions: usize,
    pub positive_class_tag: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PretrainConfig::default();
        let f = FinetuneConfig::default();
        Self {
            mask_prob: p.mask_prob,
            window_len: p.window_len,
            overlap: p.overlap,
            lr: p.lr,
            effective_batch: p.effective_batch,
            micro_batch: p.micro_batch,
            pretrain_epochs: p.epochs,
            finetune_epochs: f.epochs,
            finetune_batch: f.batch,
            seed: 0,
            preset: Preset::BaseToy,
            dropout_prob: 0.1,
            max_positions: 512,
            positive_class_tag: None,
        }
    }
}

/// Flag values; `None` keeps the file or default value.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mask_prob: Option<f64>,
    pub window_len: Option<usize>,
    pub overlap: Option<usize>,
    pub lr: Option<f64>,
    pub effective_batch: Option<usize>,
    pub micro_batch: Option<usize>,
    pub pretrain_epochs: Option<usize>,
    pub finetune_epochs: Option<usize>,
    pub finetune_batch: Option<usize>,
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub dropout_prob: Option<f64>,
    pub positive_class_tag: Option<String>,
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = o.$f.clone() { self.$f = v; })*};
        }
        set!(mask_prob, window_len, overlap, lr, effective_batch, micro_batch, pretrain_epochs, finetune_epochs, finetune_batch, seed, preset, dropout_prob);
        if o.positive_class_tag.is_some() {
            self.positive_class_tag = o.positive_class_tag.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pretrain_config().validate()?;
        self.finetune_config().validate()?;
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::OutOfRange("dropout_prob"));
        }
        if self.max_positions < 3 {
            return Err(Error::OutOfRange("max_positions"));
        }
        Ok(())
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            mask_prob: self.mask_prob,
            epochs: self.pretrain_epochs,
            lr: self.lr,
            effective_batch: self.effective_batch,
            micro_batch: self.micro_batch,
            window_len: self.window_len,
            overlap: self.overlap,
            seed: self.seed,
        }
    }

    pub fn finetune_config(&self) -> FinetuneConfig {
        FinetuneConfig {
            epochs: self.finetune_epochs,
            batch: self.finetune_batch,
            lr: self.lr,
            seed: self.seed,
            positive_class_tag: self.positive_class_tag.clone(),
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let mut m = self.preset.config(vocab_size);
        m.dropout_prob = self.dropout_prob;
        m.max_positions = self.max_positions;
        m
    }
}

/// Parses a JSON object over the defaults and validates the result.
pub fn parse_config(json: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Defaults overridden by the file (when given) and then by `overrides`.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            if !p.exists() {
                return Err(Error::MissingPath(p.to_path_buf()));
            }
            let text = std::fs::read_to_string(p).map_err(io_err(p))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    cfg.apply(overrides);
    cfg.validate()?;
    Ok(cfg)
}
