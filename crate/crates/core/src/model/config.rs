use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::NUM_SPECIALS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// Encoder hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub num_heads: usize,
    pub ff_size: usize,
    pub vocab_size: usize,
    #[serde(default = "default_max_positions")]
    pub max_positions: usize,
    #[serde(default = "default_dropout")]
    pub dropout_prob: f64,
    #[serde(default = "default_precision")]
    pub precision: Precision,
}

fn default_max_positions() -> usize {
    512
}

fn default_dropout() -> f64 {
    0.1
}

fn default_precision() -> Precision {
    Precision::F32
}

/// Named size presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 4 layers, hidden 128, 4 heads, feed-forward 512.
    BaseToy,
    /// 2 layers, hidden 64, 2 heads, feed-forward 256.
    SmallToy,
}

impl Preset {
    pub fn config(self, vocab_size: usize) -> ModelConfig {
        let (num_layers, hidden_size, num_heads, ff_size) = match self {
            Preset::BaseToy => (4, 128, 4, 512),
            Preset::SmallToy => (2, 64, 2, 256),
        };
        ModelConfig {
            num_layers,
            hidden_size,
            num_heads,
            ff_size,
            vocab_size,
            max_positions: default_max_positions(),
            dropout_prob: default_dropout(),
            precision: Precision::F32,
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base-toy" => Ok(Preset::BaseToy),
            "small-toy" => Ok(Preset::SmallToy),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModelConfig(m));
        if self.num_layers == 0 || self.hidden_size == 0 || self.num_heads == 0 || self.ff_size == 0 {
            return bad("layer, hidden, head and feed-forward sizes must be positive".into());
        }
        if self.hidden_size % self.num_heads != 0 {
            return bad(format!(
                "hidden_size {} not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            ));
        }
        if self.vocab_size < NUM_SPECIALS {
            return bad(format!("vocab_size {} below {NUM_SPECIALS}", self.vocab_size));
        }
        if self.max_positions < 3 {
            return bad("max_positions must leave room for [CLS], [SEP] and one token".into());
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return bad(format!("dropout_prob {} outside [0, 1)", self.dropout_prob));
        }
        Ok(())
    }

    /// Windows of `window_len` tokens plus [CLS]/[SEP] must fit.
    pub fn check_window(&self, window_len: usize) -> Result<()> {
        if window_len + 2 > self.max_positions {
            return Err(Error::InvalidModelConfig(format!(
                "max_positions {} cannot hold windows of {window_len} plus [CLS]/[SEP]",
                self.max_positions
            )));
        }
        Ok(())
    }
}
