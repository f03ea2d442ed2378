use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{cls_base, layer_base, mlm_base, slot, ModelConfig, ModelParameters, POS_EMB, WORD_EMB};
use crate::autodiff::{AttentionShape, Tape, Var};
use crate::corpus::normalize;
use crate::error::{Error, Result};
use crate::kernels::{self, IGNORE};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::tokenizer::{Vocabulary, PAD_ID, SEP_ID};

/// Padded `[batch, seq]` token ids with a 1/0 attention mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenBatch {
    pub batch: usize,
    pub seq: usize,
    pub ids: Vec<usize>,
    pub attention_mask: Vec<u8>,
}

impl TokenBatch {
    pub fn new(batch: usize, seq: usize, ids: Vec<usize>, attention_mask: Vec<u8>) -> Result<Self> {
        if batch == 0 || seq == 0 || ids.len() != batch * seq || attention_mask.len() != batch * seq {
            return Err(Error::Shape(format!(
                "token batch [{batch},{seq}] with {} ids and {} mask entries",
                ids.len(),
                attention_mask.len()
            )));
        }
        Ok(Self {
            batch,
            seq,
            ids,
            attention_mask,
        })
    }

    /// Right-pads every sequence with `[PAD]` to the longest one.
    pub fn from_sequences(seqs: &[Vec<usize>]) -> Result<Self> {
        let seq = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(seqs.len() * seq);
        let mut mask = Vec::with_capacity(seqs.len() * seq);
        for s in seqs {
            ids.extend_from_slice(s);
            ids.resize(ids.len() + seq - s.len(), PAD_ID);
            mask.extend(std::iter::repeat_n(1u8, s.len()));
            mask.resize(mask.len() + seq - s.len(), 0);
        }
        Self::new(seqs.len(), seq, ids, mask)
    }

    fn key_mask(&self) -> Vec<bool> {
        self.attention_mask.iter().map(|&m| m != 0).collect()
    }

    /// Flat row index of each sequence's first position.
    pub fn cls_rows(&self) -> Vec<usize> {
        (0..self.batch).map(|b| b * self.seq).collect()
    }
}

/// Dropout switch for a forward pass.
pub struct Dropout<'a> {
    prob: f64,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a> Dropout<'a> {
    pub fn off() -> Self {
        Self { prob: 0.0, rng: None }
    }

    pub fn train(prob: f64, rng: &'a mut ChaCha8Rng) -> Self {
        Self { prob, rng: Some(rng) }
    }

    fn apply<S: Scalar>(&mut self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        let Some(rng) = self.rng.as_deref_mut().filter(|_| self.prob > 0.0) else {
            return Ok(x);
        };
        let keep = S::lit(1.0 / (1.0 - self.prob));
        let mask = (0..tape.value(x).len())
            .map(|_| if rng.random::<f64>() < self.prob { S::zero() } else { keep })
            .collect();
        tape.dropout(x, mask)
    }
}

/// Records every parameter as a leaf; the returned vars follow canonical order.
pub fn bind<S: Scalar>(tape: &mut Tape<S>, params: &ModelParameters<S>) -> Vec<Var> {
    params.tensors().iter().map(|t| tape.leaf(t.clone())).collect()
}

fn linear<S: Scalar>(tape: &mut Tape<S>, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_bias(y, b)
}

/// Encoder forward; returns hidden states as `[batch*seq, hidden]`.
pub fn encode_on<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &[Var],
    cfg: &ModelConfig,
    batch: &TokenBatch,
    drop: &mut Dropout,
) -> Result<Var> {
    if batch.seq > cfg.max_positions {
        return Err(Error::SequenceTooLong {
            len: batch.seq,
            max: cfg.max_positions,
        });
    }
    let tok = tape.gather(vars[WORD_EMB], &batch.ids)?;
    let positions: Vec<usize> = (0..batch.batch).flat_map(|_| 0..batch.seq).collect();
    let pos = tape.gather(vars[POS_EMB], &positions)?;
    let mut x = tape.add(tok, pos)?;
    x = drop.apply(tape, x)?;
    let key_mask = batch.key_mask();
    let dims = AttentionShape {
        batch: batch.batch,
        seq: batch.seq,
        heads: cfg.num_heads,
    };
    for l in 0..cfg.num_layers {
        let p = |o: usize| vars[layer_base(l) + o];
        let q = linear(tape, x, p(slot::Q_W), p(slot::Q_B))?;
        let k = tape.matmul(x, p(slot::K_W))?;
        let v = linear(tape, x, p(slot::V_W), p(slot::V_B))?;
        let att = tape.attention(q, k, v, &key_mask, dims)?;
        let mut o = linear(tape, att, p(slot::O_W), p(slot::O_B))?;
        o = drop.apply(tape, o)?;
        let res = tape.add(x, o)?;
        x = tape.layer_norm(res, p(slot::ATTN_G), p(slot::ATTN_B))?;

        let f = linear(tape, x, p(slot::FF1_W), p(slot::FF1_B))?;
        let f = tape.gelu(f);
        let mut f = linear(tape, f, p(slot::FF2_W), p(slot::FF2_B))?;
        f = drop.apply(tape, f)?;
        let res = tape.add(x, f)?;
        x = tape.layer_norm(res, p(slot::FFN_G), p(slot::FFN_B))?;
    }
    Ok(x)
}

/// MLM head over `[n, hidden]` rows: affine, GELU, layer norm, then projection
/// onto `embedding` (the word-embedding table) plus output bias.
pub fn mlm_head_on<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &[Var],
    cfg: &ModelConfig,
    hidden_rows: Var,
    embedding: Var,
) -> Result<Var> {
    let base = mlm_base(cfg);
    let t = linear(tape, hidden_rows, vars[base + slot::MLM_W], vars[base + slot::MLM_B])?;
    let t = tape.gelu(t);
    let t = tape.layer_norm(t, vars[base + slot::MLM_G], vars[base + slot::MLM_BETA])?;
    let logits = tape.matmul_nt(t, embedding)?;
    tape.add_bias(logits, vars[base + slot::MLM_OUT_B])
}

/// Classification head over the first position of each sequence: affine, tanh, affine to 2 logits.
pub fn classify_on<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &[Var],
    cfg: &ModelConfig,
    hidden: Var,
    batch: &TokenBatch,
    drop: &mut Dropout,
) -> Result<Var> {
    let base = cls_base(cfg);
    let cls = tape.select_rows(hidden, &batch.cls_rows())?;
    let h = linear(tape, cls, vars[base + slot::CLS_W1], vars[base + slot::CLS_B1])?;
    let h = tape.tanh(h);
    let h = drop.apply(tape, h)?;
    linear(tape, h, vars[base + slot::CLS_W2], vars[base + slot::CLS_B2])
}

/// Sum of MLM losses at supervised positions divided by `denom`.
pub fn mlm_loss_on<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &[Var],
    cfg: &ModelConfig,
    batch: &TokenBatch,
    labels: &[i64],
    denom: S,
    drop: &mut Dropout,
) -> Result<Var> {
    if labels.len() != batch.ids.len() {
        return Err(Error::Shape(format!("{} labels for {} positions", labels.len(), batch.ids.len())));
    }
    let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != IGNORE).collect();
    if rows.is_empty() {
        return Ok(tape.leaf(Tensor::scalar(S::zero())));
    }
    let picked: Vec<i64> = rows.iter().map(|&i| labels[i]).collect();
    let hidden = encode_on(tape, vars, cfg, batch, drop)?;
    let sel = tape.select_rows(hidden, &rows)?;
    let logits = mlm_head_on(tape, vars, cfg, sel, vars[WORD_EMB])?;
    tape.cross_entropy(logits, &picked, denom)
}

/// Sum of two-class cross-entropy over the batch divided by `denom`.
pub fn cls_loss_on<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &[Var],
    cfg: &ModelConfig,
    batch: &TokenBatch,
    labels: &[i64],
    denom: S,
    drop: &mut Dropout,
) -> Result<Var> {
    if labels.len() != batch.batch {
        return Err(Error::Shape(format!("{} labels for batch of {}", labels.len(), batch.batch)));
    }
    let hidden = encode_on(tape, vars, cfg, batch, drop)?;
    let logits = classify_on(tape, vars, cfg, hidden, batch, drop)?;
    tape.cross_entropy(logits, labels, denom)
}

/// Hidden states `[batch, seq, hidden]` with dropout disabled.
pub fn encode<S: Scalar>(params: &ModelParameters<S>, batch: &TokenBatch) -> Result<Tensor<S>> {
    let mut tape = Tape::new();
    let vars = bind(&mut tape, params);
    let h = encode_on(&mut tape, &vars, &params.config, batch, &mut Dropout::off())?;
    tape.value(h)
        .clone()
        .reshape(vec![batch.batch, batch.seq, params.config.hidden_size])
}

fn as_rows<S: Scalar>(hidden: &Tensor<S>, h: usize) -> Result<(usize, usize)> {
    match hidden.shape() {
        [b, t, hh] if *hh == h => Ok((*b, *t)),
        s => Err(Error::Shape(format!("expected [B,T,{h}] hidden states, got {s:?}"))),
    }
}

/// MLM logits `[batch, seq, vocab]` from hidden states.
pub fn mlm_logits<S: Scalar>(params: &ModelParameters<S>, hidden: &Tensor<S>) -> Result<Tensor<S>> {
    let cfg = &params.config;
    let (b, t) = as_rows(hidden, cfg.hidden_size)?;
    let mut tape = Tape::new();
    let vars = bind(&mut tape, params);
    let x = tape.leaf(hidden.clone().reshape(vec![b * t, cfg.hidden_size])?);
    let logits = mlm_head_on(&mut tape, &vars, cfg, x, vars[WORD_EMB])?;
    tape.value(logits).clone().reshape(vec![b, t, cfg.vocab_size])
}

/// Classification logits `[batch, 2]` read from position 0.
pub fn classify<S: Scalar>(params: &ModelParameters<S>, hidden: &Tensor<S>) -> Result<Tensor<S>> {
    let cfg = &params.config;
    let (b, t) = as_rows(hidden, cfg.hidden_size)?;
    let mut tape = Tape::new();
    let vars = bind(&mut tape, params);
    let x = tape.leaf(hidden.clone().reshape(vec![b * t, cfg.hidden_size])?);
    let shape = TokenBatch {
        batch: b,
        seq: t,
        ids: Vec::new(),
        attention_mask: Vec::new(),
    };
    let logits = classify_on(&mut tape, &vars, cfg, x, &shape, &mut Dropout::off())?;
    Ok(tape.value(logits).clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub label: u8,
    /// Softmax probability of the positive class.
    pub probability: f64,
}

impl Prediction {
    /// Argmax with ties going to the negative class.
    pub fn from_logits(neg: f64, pos: f64) -> Self {
        let mut pair = [neg, pos];
        kernels::softmax_slice(&mut pair);
        Self {
            label: u8::from(pos > neg),
            probability: pair[1],
        }
    }
}

/// Cuts a `[CLS] … [SEP]` sequence to `max` positions, keeping the final `[SEP]`.
pub fn fit_to_positions(ids: &[usize], max: usize) -> Vec<usize> {
    let mut ids = ids.to_vec();
    if ids.len() > max {
        ids.truncate(max - 1);
        ids.push(SEP_ID);
    }
    ids
}

/// Classifies one `[CLS] … [SEP]` sequence, truncating from the tail while keeping `[SEP]`.
pub fn predict_ids<S: Scalar>(params: &ModelParameters<S>, ids: &[usize]) -> Result<Prediction> {
    Ok(predict_batch(params, &[ids.to_vec()])?[0])
}

/// Batched [`predict_ids`]. Padding is masked out exactly, so results match
/// one-at-a-time prediction.
pub fn predict_batch<S: Scalar>(params: &ModelParameters<S>, seqs: &[Vec<usize>]) -> Result<Vec<Prediction>> {
    let max = params.config.max_positions;
    let seqs: Vec<Vec<usize>> = seqs.iter().map(|s| fit_to_positions(s, max)).collect();
    let batch = TokenBatch::from_sequences(&seqs)?;
    let hidden = encode(params, &batch)?;
    let logits = classify(params, &hidden)?;
    Ok(logits
        .data()
        .chunks_exact(2)
        .map(|l| Prediction::from_logits(l[0].as_f64(), l[1].as_f64()))
        .collect())
}

pub fn predict<S: Scalar>(params: &ModelParameters<S>, vocab: &Vocabulary, text: &str) -> Result<Prediction> {
    if normalize(text).is_empty() {
        return Err(Error::EmptyText);
    }
    predict_ids(params, &vocab.encode(text, true))
}

#[cfg(test)]
mod tests {
    use super::super::Precision;
    use super::*;
    use crate::tokenizer::SPECIAL_TOKENS;

    fn cfg() -> ModelConfig {
        ModelConfig {
            num_layers: 2,
            hidden_size: 8,
            num_heads: 2,
            ff_size: 16,
            vocab_size: 20,
            max_positions: 12,
            dropout_prob: 0.1,
            precision: Precision::F64,
        }
    }

    fn params() -> ModelParameters<f64> {
        let mut p = ModelParameters::init(&cfg(), 5).unwrap();
        // larger weights so outputs differ visibly between tokens
        for t in p.tensors_mut() {
            if t.shape().len() == 2 {
                *t = t.map(|x| x * 20.0);
            }
        }
        p
    }

    #[test]
    fn shapes() {
        let p = params();
        let b = TokenBatch::from_sequences(&[vec![2, 7, 8, 3], vec![2, 9, 3]]).unwrap();
        let h = encode(&p, &b).unwrap();
        assert_eq!(h.shape(), &[2, 4, 8]);
        assert_eq!(mlm_logits(&p, &h).unwrap().shape(), &[2, 4, 20]);
        assert_eq!(classify(&p, &h).unwrap().shape(), &[2, 2]);
    }

    #[test]
    fn rejects_long_sequences_and_bad_ids() {
        let p = params();
        let long = TokenBatch::from_sequences(&[vec![5; 13]]).unwrap();
        assert!(matches!(encode(&p, &long), Err(Error::SequenceTooLong { .. })));
        let bad = TokenBatch::from_sequences(&[vec![2, 20, 3]]).unwrap();
        assert!(matches!(encode(&p, &bad), Err(Error::TokenOutOfRange { .. })));
    }

    #[test]
    fn mask_isolation() {
        let p = params();
        let masked = TokenBatch::new(1, 4, vec![9, 11, 12, 13], vec![1, 0, 0, 0]).unwrap();
        let single = TokenBatch::new(1, 1, vec![9], vec![1]).unwrap();
        let a = encode(&p, &masked).unwrap();
        let b = encode(&p, &single).unwrap();
        for j in 0..8 {
            assert!((a.data()[j] - b.data()[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn padding_invariance() {
        let p = params();
        let a = TokenBatch::new(1, 5, vec![2, 7, 3, 0, 0], vec![1, 1, 1, 0, 0]).unwrap();
        let mut b = a.clone();
        b.ids[3] = 15;
        b.ids[4] = 6;
        let (ha, hb) = (encode(&p, &a).unwrap(), encode(&p, &b).unwrap());
        for i in 0..3 * 8 {
            assert!((ha.data()[i] - hb.data()[i]).abs() < 1e-6);
        }
        assert!(classify(&p, &ha).unwrap().max_abs_diff(&classify(&p, &hb).unwrap()) < 1e-6);
    }

    #[test]
    fn classify_reads_only_cls() {
        let p = params();
        let b = TokenBatch::from_sequences(&[vec![2, 7, 8, 3]]).unwrap();
        let h = encode(&p, &b).unwrap();
        let mut h2 = h.clone();
        for x in h2.data_mut()[8..].iter_mut() {
            *x = 42.0;
        }
        assert_eq!(classify(&p, &h).unwrap(), classify(&p, &h2).unwrap());
    }

    #[test]
    fn zero_cls_and_zero_biases_give_even_odds() {
        let p = params();
        let h = Tensor::zeros(vec![1, 3, 8]);
        let logits = classify(&p, &h).unwrap();
        assert_eq!(logits.data(), &[0.0, 0.0]);
        let pr = Prediction::from_logits(0.0, 0.0);
        assert_eq!((pr.label, pr.probability), (0, 0.5));
    }

    #[test]
    fn zeroed_mlm_transform_gives_uniform_logits() {
        let mut p = params();
        let base = mlm_base(&p.config);
        // layer norm of a constant row is 0; with zero gamma/beta the projection is 0
        p.tensors_mut()[base + slot::MLM_G] = Tensor::zeros(vec![8]);
        let h = encode(&p, &TokenBatch::from_sequences(&[vec![2, 5, 3]]).unwrap()).unwrap();
        let logits = mlm_logits(&p, &h).unwrap();
        assert!(logits.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn prediction_rules() {
        let tie = Prediction::from_logits(3.0, 3.0);
        assert_eq!(tie.label, 0);
        let p = Prediction::from_logits(0.0, 3f64.ln());
        assert_eq!(p.label, 1);
        assert!((p.probability - 0.75).abs() < 1e-12);
    }

    #[test]
    fn predict_is_deterministic_and_truncates() {
        let p = params();
        let mut toks: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        toks.extend((0..15).map(|i| format!("w{i}")));
        let vocab = Vocabulary::from_tokens(toks).unwrap();
        assert_eq!(vocab.len(), 20);
        let text = "w1 w2 w3";
        assert_eq!(predict(&p, &vocab, text).unwrap(), predict(&p, &vocab, text).unwrap());
        let long: Vec<String> = (0..40).map(|i| format!("w{}", i % 15)).collect();
        assert!(predict(&p, &vocab, &long.join(" ")).is_ok());
        assert!(matches!(predict(&p, &vocab, "  \n "), Err(Error::EmptyText)));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let p = params();
        let b = TokenBatch::new(2, 4, vec![2, 7, 3, 0, 2, 8, 9, 3], vec![1, 1, 1, 0, 1, 1, 1, 1]).unwrap();
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &p);
        let x = tape.gather(vars[WORD_EMB], &b.ids).unwrap();
        let att = tape
            .attention(x, x, x, &b.key_mask(), AttentionShape { batch: 2, seq: 4, heads: 2 })
            .unwrap();
        let probs = tape.attention_probs(att).unwrap();
        for (r, row) in probs.chunks(4).enumerate() {
            let bidx = r / (2 * 4);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            if bidx == 0 {
                assert!(row[3] < 1e-9);
            }
        }
    }

    #[test]
    fn dropout_off_is_pure() {
        let p = params();
        let b = TokenBatch::from_sequences(&[vec![2, 7, 8, 3]]).unwrap();
        assert_eq!(encode(&p, &b).unwrap(), encode(&p, &b).unwrap());
    }
}
