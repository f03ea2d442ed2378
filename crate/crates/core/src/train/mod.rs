//! Masked-LM pre-training and classification fine-tuning.

mod checkpoint;
mod mlm;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Manifest, TensorEntry, FORMAT_VERSION};
pub use mlm::{corrupt_for_mlm, MlmBatch, MlmRow, DEFAULT_MASK_PROB, MASK_SHARE, RANDOM_SHARE};

use crate::corpus::{make_windows, RawDocument, DEFAULT_OVERLAP, DEFAULT_WINDOW_LEN};
use crate::error::{io_err, Error, Result};
use crate::eval::LabeledExample;
use crate::model::{cls_loss_on, fit_to_positions, loss_and_grads, loss_only, mlm_loss_on, Dropout, ModelConfig, ModelParameters, TokenBatch};
use crate::optim::{Adam, AdamConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::tokenizer::{Vocabulary, CLS_ID, SEP_ID};

/// Independent random streams derived from one seed.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum Stream {
    Shuffle = 1,
    Mask = 2,
    Dropout = 3,
    Head = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub mask_prob: f64,
    pub epochs: usize,
    pub lr: f64,
    pub effective_batch: usize,
    pub micro_batch: usize,
    pub window_len: usize,
    pub overlap: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            mask_prob: DEFAULT_MASK_PROB,
            epochs: 60,
            lr: 1e-5,
            effective_batch: 128,
            micro_batch: 16,
            window_len: DEFAULT_WINDOW_LEN,
            overlap: DEFAULT_OVERLAP,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_prob > 0.0 && self.mask_prob < 1.0) {
            return Err(Error::OutOfRange("mask_prob"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::OutOfRange("lr"));
        }
        if self.epochs == 0 {
            return Err(Error::OutOfRange("epochs"));
        }
        if self.effective_batch == 0 {
            return Err(Error::OutOfRange("effective_batch"));
        }
        if self.micro_batch == 0 || self.effective_batch % self.micro_batch != 0 {
            return Err(Error::OutOfRange("micro_batch"));
        }
        if self.window_len == 0 || self.overlap >= self.window_len {
            return Err(Error::InvalidWindow {
                window_len: self.window_len,
                overlap: self.overlap,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Tag whose presence marks a positive row when a dataset carries a tag column.
    pub positive_class_tag: Option<String>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch: 32,
            lr: 1e-5,
            seed: 0,
            positive_class_tag: None,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::OutOfRange("epochs"));
        }
        if self.batch == 0 {
            return Err(Error::OutOfRange("batch"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::OutOfRange("lr"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

/// Writes one `{"epoch", "loss"}` object per line.
pub fn write_loss_log(path: &Path, losses: &[EpochLoss]) -> Result<()> {
    let mut out = Vec::new();
    for l in losses {
        serde_json::to_writer(&mut out, l)?;
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&out).map_err(io_err(path))
}

fn check_vocab(vocab: &Vocabulary, cfg: &ModelConfig) -> Result<()> {
    if vocab.len() != cfg.vocab_size {
        return Err(Error::VocabSizeMismatch {
            model: cfg.vocab_size,
            tokenizer: vocab.len(),
        });
    }
    Ok(())
}

/// Tokenizes every document, cuts `window_len`-token windows and wraps each in `[CLS] … [SEP]`.
pub fn pretraining_sequences(
    docs: &[RawDocument],
    vocab: &Vocabulary,
    window_len: usize,
    overlap: usize,
) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    for d in docs {
        let ids = vocab.encode(&d.text, false);
        for w in make_windows(&d.doc_id, &ids, window_len, overlap)? {
            let mut s = Vec::with_capacity(w.ids.len() + 2);
            s.push(CLS_ID);
            s.extend_from_slice(&w.ids);
            s.push(SEP_ID);
            out.push(s);
        }
    }
    Ok(out)
}

/// Gradients of the MLM loss over `rows`, summed across micro-batches of
/// `micro_batch` rows, each normalized by the supervised count of all rows.
/// Returns the loss (mean over supervised positions) and the gradients.
pub fn accumulate_mlm<S: Scalar>(
    params: &ModelParameters<S>,
    rows: &[MlmRow],
    micro_batch: usize,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Vec<Tensor<S>>)> {
    let total: usize = rows.iter().map(MlmRow::supervised).sum();
    if total == 0 {
        return Err(Error::NoSupervisedPositions);
    }
    let denom = S::from_count(total);
    let cfg = &params.config;
    let mut dropout = dropout;
    let mut loss = 0.0;
    let mut grads: Option<Vec<Tensor<S>>> = None;
    for chunk in rows.chunks(micro_batch.max(1)) {
        let refs: Vec<&MlmRow> = chunk.iter().collect();
        let batch = MlmBatch::assemble(&refs)?;
        if batch.supervised() == 0 {
            continue;
        }
        let mut drop = match dropout.as_deref_mut() {
            Some(rng) => Dropout::train(cfg.dropout_prob, rng),
            None => Dropout::off(),
        };
        let (l, g) = loss_and_grads(params, |tape, vars| {
            mlm_loss_on(tape, vars, cfg, &batch.tokens, &batch.labels, denom, &mut drop)
        })?;
        loss += l.as_f64();
        match grads.as_mut() {
            None => grads = Some(g),
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    a.add_assign(b);
                }
            }
        }
    }
    Ok((loss, grads.expect("at least one supervised micro-batch")))
}

/// Mean MLM loss over supervised positions of `rows`, dropout off.
pub fn mlm_loss<S: Scalar>(params: &ModelParameters<S>, rows: &[MlmRow], micro_batch: usize) -> Result<f64> {
    let total: usize = rows.iter().map(MlmRow::supervised).sum();
    if total == 0 {
        return Err(Error::NoSupervisedPositions);
    }
    let denom = S::from_count(total);
    let cfg = &params.config;
    let mut loss = 0.0;
    for chunk in rows.chunks(micro_batch.max(1)) {
        let refs: Vec<&MlmRow> = chunk.iter().collect();
        let batch = MlmBatch::assemble(&refs)?;
        loss += loss_only(params, |tape, vars| {
            mlm_loss_on(tape, vars, cfg, &batch.tokens, &batch.labels, denom, &mut Dropout::off())
        })?
        .as_f64();
    }
    Ok(loss)
}

/// Tries a few times to draw corruptions with at least one supervised position.
fn corrupt_rows(seqs: &[&Vec<usize>], vocab_size: usize, rng: &mut ChaCha8Rng, mask_prob: f64) -> Option<Vec<MlmRow>> {
    for _ in 0..64 {
        let rows: Vec<MlmRow> = seqs.iter().map(|s| corrupt_for_mlm(s, vocab_size, rng, mask_prob)).collect();
        if rows.iter().any(|r| r.supervised() > 0) {
            return Some(rows);
        }
    }
    None
}

pub struct PretrainOutcome {
    pub checkpoint: Checkpoint,
    pub losses: Vec<EpochLoss>,
}

/// Pre-trains a freshly initialized encoder (seeded by `cfg.seed`) on `docs`.
pub fn pretrain(
    docs: &[RawDocument],
    vocab: &Vocabulary,
    model: &ModelConfig,
    cfg: &PretrainConfig,
    on_epoch: impl FnMut(&EpochLoss),
) -> Result<PretrainOutcome> {
    let params = ModelParameters::<f32>::init(model, cfg.seed)?;
    pretrain_from(params, docs, vocab, cfg, on_epoch)
}

/// Continues MLM training from `params`.
pub fn pretrain_from(
    mut params: ModelParameters<f32>,
    docs: &[RawDocument],
    vocab: &Vocabulary,
    cfg: &PretrainConfig,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let model = params.config.clone();
    model.validate()?;
    check_vocab(vocab, &model)?;
    model.check_window(cfg.window_len)?;
    let seqs = pretraining_sequences(docs, vocab, cfg.window_len, cfg.overlap)?;
    if seqs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut shuffle_rng = stream_rng(cfg.seed, Stream::Shuffle);
    let mut mask_rng = stream_rng(cfg.seed, Stream::Mask);
    let mut drop_rng = stream_rng(cfg.seed, Stream::Dropout);
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), params.tensors());
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut weighted, mut count) = (0.0, 0usize);
        for idx in order.chunks(cfg.effective_batch) {
            let batch: Vec<&Vec<usize>> = idx.iter().map(|&i| &seqs[i]).collect();
            let Some(rows) = corrupt_rows(&batch, vocab.len(), &mut mask_rng, cfg.mask_prob) else {
                continue;
            };
            let supervised: usize = rows.iter().map(MlmRow::supervised).sum();
            let (loss, grads) = accumulate_mlm(&params, &rows, cfg.micro_batch, Some(&mut drop_rng))?;
            adam.step(params.tensors_mut(), &grads)?;
            weighted += loss * supervised as f64;
            count += supervised;
        }
        let entry = EpochLoss {
            epoch,
            loss: if count == 0 { 0.0 } else { weighted / count as f64 },
        };
        on_epoch(&entry);
        losses.push(entry);
    }
    Ok(PretrainOutcome {
        checkpoint: Checkpoint::new(params, vocab.hash()),
        losses,
    })
}

pub struct FinetuneOutcome {
    pub checkpoint: Checkpoint,
    pub losses: Vec<EpochLoss>,
}

/// Encodes each example as `[CLS] … [SEP]`, cut to `max_positions`.
pub fn classification_sequences(examples: &[LabeledExample], vocab: &Vocabulary, max_positions: usize) -> Vec<Vec<usize>> {
    examples
        .iter()
        .map(|e| fit_to_positions(&vocab.encode(&e.text, true), max_positions))
        .collect()
}

/// Full fine-tuning with a freshly drawn classification head.
pub fn finetune(
    checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    train: &[LabeledExample],
    cfg: &FinetuneConfig,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    let hash = vocab.hash();
    if hash != checkpoint.vocab_hash {
        return Err(Error::VocabMismatch {
            checkpoint: checkpoint.vocab_hash.clone(),
            tokenizer: hash,
        });
    }
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(train.iter().any(|e| e.label == 1) && train.iter().any(|e| e.label == 0)) {
        return Err(Error::SingleClass);
    }
    let mut params = checkpoint.params.clone();
    check_vocab(vocab, &params.config)?;
    params.reinit_classifier(stream_rng(cfg.seed, Stream::Head).random());
    let cfg_model = params.config.clone();
    let seqs = classification_sequences(train, vocab, cfg_model.max_positions);
    let mut shuffle_rng = stream_rng(cfg.seed, Stream::Shuffle);
    let mut drop_rng = stream_rng(cfg.seed, Stream::Dropout);
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), params.tensors());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch) {
            let batch_seqs: Vec<Vec<usize>> = idx.iter().map(|&i| seqs[i].clone()).collect();
            let labels: Vec<i64> = idx.iter().map(|&i| i64::from(train[i].label)).collect();
            let batch = TokenBatch::from_sequences(&batch_seqs)?;
            let mut drop = Dropout::train(cfg_model.dropout_prob, &mut drop_rng);
            let (loss, grads) = loss_and_grads(&params, |tape, vars| {
                cls_loss_on(tape, vars, &cfg_model, &batch, &labels, f32::from_count(idx.len()), &mut drop)
            })?;
            adam.step(params.tensors_mut(), &grads)?;
            total += f64::from(loss) * idx.len() as f64;
        }
        let entry = EpochLoss {
            epoch,
            loss: total / train.len() as f64,
        };
        on_epoch(&entry);
        losses.push(entry);
    }
    Ok(FinetuneOutcome {
        checkpoint: Checkpoint::new(params, hash),
        losses,
    })
}
