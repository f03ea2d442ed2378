//! Single-file checkpoint: an 8-byte little-endian manifest length, a JSON
//! manifest, then every tensor as little-endian `f32` in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::model::{ModelConfig, ModelParameters};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub tensors: Vec<TensorEntry>,
}

/// Model parameters tagged with the hash of the vocabulary they were trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub vocab_hash: String,
    pub params: ModelParameters<f32>,
}

impl Checkpoint {
    pub fn new(params: ModelParameters<f32>, vocab_hash: impl Into<String>) -> Self {
        Self {
            vocab_hash: vocab_hash.into(),
            params,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn manifest(&self) -> Manifest {
        let mut offset = 0;
        let tensors = self
            .params
            .named()
            .map(|(name, t)| {
                let e = TensorEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    dtype: "f32".into(),
                    byte_offset: offset,
                };
                offset += t.len() * 4;
                e
            })
            .collect();
        Manifest {
            format_version: FORMAT_VERSION,
            config: self.params.config.clone(),
            vocab_hash: self.vocab_hash.clone(),
            tensors,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec(&self.manifest())?;
        let payload: usize = self.params.tensors().iter().map(|t| t.len() * 4).sum();
        let mut out = Vec::with_capacity(8 + manifest.len() + payload);
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for t in self.params.tensors() {
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let len_bytes: [u8; 8] = bytes.get(..8).ok_or_else(|| bad("file shorter than header"))?.try_into().unwrap();
        let mlen = usize::try_from(u64::from_le_bytes(len_bytes)).map_err(|_| bad("manifest length overflow"))?;
        let manifest_bytes = bytes
            .get(8..8usize.saturating_add(mlen))
            .ok_or_else(|| bad("manifest extends past end of file"))?;
        let value: serde_json::Value = serde_json::from_slice(manifest_bytes)?;
        let version = value.get("format_version").and_then(serde_json::Value::as_u64);
        if version != Some(u64::from(FORMAT_VERSION)) {
            return Err(Error::Checkpoint(format!(
                "format version mismatch: expected {FORMAT_VERSION}, found {version:?}"
            )));
        }
        let manifest: Manifest = serde_json::from_value(value)?;
        let payload = &bytes[8 + mlen..];
        let mut expected = 0usize;
        for e in &manifest.tensors {
            if e.dtype != "f32" {
                return Err(Error::Checkpoint(format!("tensor {} has unsupported dtype {}", e.name, e.dtype)));
            }
            if e.byte_offset != expected {
                return Err(Error::Checkpoint(format!(
                    "tensor {} at offset {}, expected {expected}",
                    e.name, e.byte_offset
                )));
            }
            expected += e.shape.iter().product::<usize>() * 4;
        }
        if expected != payload.len() {
            return Err(Error::PayloadLength {
                expected,
                actual: payload.len(),
            });
        }
        let named = manifest
            .tensors
            .iter()
            .map(|e| {
                let n: usize = e.shape.iter().product();
                let raw = &payload[e.byte_offset..e.byte_offset + n * 4];
                let data = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Ok((e.name.clone(), Tensor::from_vec(e.shape.clone(), data)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let params = ModelParameters::from_named(&manifest.config, named)?;
        Ok(Self {
            vocab_hash: manifest.vocab_hash,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingPath(path.to_path_buf()));
        }
        Self::from_bytes(&fs::read(path).map_err(io_err(path))?)
    }
}

/// Saves parameters (converted to `f32`) with their vocabulary hash.
pub fn save_checkpoint<S: crate::Scalar>(params: &ModelParameters<S>, vocab_hash: &str, path: &Path) -> Result<()> {
    Checkpoint::new(params.cast(), vocab_hash).save(path)
}

/// Loads parameters and config from a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParameters<f32>, ModelConfig)> {
    let ck = Checkpoint::load(path)?;
    let cfg = ck.params.config.clone();
    Ok((ck.params, cfg))
}
