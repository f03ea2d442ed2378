//! BERT-style input corruption for masked language modeling.

use rand::Rng;

use crate::error::Result;
use crate::kernels::IGNORE;
use crate::model::TokenBatch;
use crate::tokenizer::{Vocabulary, MASK_ID, NUM_SPECIALS};

pub const DEFAULT_MASK_PROB: f64 = 0.15;
/// Share of selected positions replaced by `[MASK]`.
pub const MASK_SHARE: f64 = 0.8;
/// Share of selected positions replaced by a random non-special token.
pub const RANDOM_SHARE: f64 = 0.1;

/// One corrupted sequence and its per-position targets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlmRow {
    pub input_ids: Vec<usize>,
    /// Original id at selected positions, [`IGNORE`] elsewhere.
    pub labels: Vec<i64>,
}

impl MlmRow {
    pub fn supervised(&self) -> usize {
        self.labels.iter().filter(|&&l| l != IGNORE).count()
    }
}

/// Selects each non-special position with probability `mask_prob`; of those,
/// 80% become `[MASK]`, 10% a uniformly random non-special id, 10% stay.
pub fn corrupt_for_mlm(ids: &[usize], vocab_size: usize, rng: &mut impl Rng, mask_prob: f64) -> MlmRow {
    let mut input_ids = ids.to_vec();
    let mut labels = vec![IGNORE; ids.len()];
    for (i, &id) in ids.iter().enumerate() {
        if Vocabulary::is_special(id) || rng.random::<f64>() >= mask_prob {
            continue;
        }
        labels[i] = id as i64;
        let r: f64 = rng.random();
        if r < MASK_SHARE {
            input_ids[i] = MASK_ID;
        } else if r < MASK_SHARE + RANDOM_SHARE {
            input_ids[i] = rng.random_range(NUM_SPECIALS..vocab_size);
        }
    }
    MlmRow { input_ids, labels }
}

/// Padded model input plus flat `[batch*seq]` labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlmBatch {
    pub tokens: TokenBatch,
    pub labels: Vec<i64>,
}

impl MlmBatch {
    /// Pads rows to a common length; padding gets mask 0 and label [`IGNORE`].
    pub fn assemble(rows: &[&MlmRow]) -> Result<Self> {
        let seqs: Vec<Vec<usize>> = rows.iter().map(|r| r.input_ids.clone()).collect();
        let tokens = TokenBatch::from_sequences(&seqs)?;
        let mut labels = Vec::with_capacity(tokens.ids.len());
        for r in rows {
            labels.extend_from_slice(&r.labels);
            labels.resize(labels.len() + tokens.seq - r.labels.len(), IGNORE);
        }
        Ok(Self { tokens, labels })
    }

    pub fn supervised(&self) -> usize {
        self.labels.iter().filter(|&&l| l != IGNORE).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{CLS_ID, PAD_ID, SEP_ID};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn specials_only_row_has_no_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let row = corrupt_for_mlm(&[CLS_ID, SEP_ID], 50, &mut rng, 0.99);
        assert_eq!(row.labels, vec![IGNORE, IGNORE]);
        assert_eq!(row.input_ids, vec![CLS_ID, SEP_ID]);
    }

    #[test]
    fn labels_hold_originals() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ids: Vec<usize> = std::iter::once(CLS_ID).chain((0..500).map(|i| 5 + i % 40)).chain([SEP_ID]).collect();
        let row = corrupt_for_mlm(&ids, 45, &mut rng, 0.5);
        let mut kept = 0;
        for i in 0..ids.len() {
            if row.labels[i] == IGNORE {
                assert_eq!(row.input_ids[i], ids[i]);
            } else {
                assert_eq!(row.labels[i], ids[i] as i64);
                if row.input_ids[i] == ids[i] {
                    kept += 1;
                }
                assert!(row.input_ids[i] >= NUM_SPECIALS || row.input_ids[i] == MASK_ID);
            }
        }
        assert!(kept > 0);
    }

    #[test]
    fn assemble_pads_with_ignore() {
        let a = MlmRow { input_ids: vec![2, 9, 3], labels: vec![IGNORE, 9, IGNORE] };
        let b = MlmRow { input_ids: vec![2, 3], labels: vec![IGNORE, IGNORE] };
        let batch = MlmBatch::assemble(&[&a, &b]).unwrap();
        assert_eq!(batch.tokens.ids, vec![2, 9, 3, 2, 3, PAD_ID]);
        assert_eq!(batch.tokens.attention_mask, vec![1, 1, 1, 1, 1, 0]);
        assert_eq!(batch.labels[5], IGNORE);
        assert_eq!(batch.supervised(), 1);
    }
}
