//! Metrics, dataset handling, corpus-size reporting and prompt utilities.

mod dataset;
mod metrics;
mod prompt;
mod sizes;

pub use dataset::{load_dataset, save_csv, stratified_split, LabeledExample};
pub use metrics::{compute_metrics, EvalReport};
pub use prompt::{default_instruction, parse_response, render_prompt, score_responses, PromptBundle, RecordedResponse};
pub use sizes::{reference_rows, relative_size, size_ratio, size_report, SizeReportRow, SizeRow, FLAG_TOLERANCE, REFERENCE_WORDS};

use crate::error::{Error, Result};
use crate::model::predict_batch;
use crate::tokenizer::Vocabulary;
use crate::train::{classification_sequences, Checkpoint};

const EVAL_BATCH: usize = 32;

/// Predicts every example with `checkpoint` and scores the predictions.
pub fn evaluate(checkpoint: &Checkpoint, vocab: &Vocabulary, test: &[LabeledExample]) -> Result<EvalReport> {
    let hash = vocab.hash();
    if hash != checkpoint.vocab_hash {
        return Err(Error::VocabMismatch {
            checkpoint: checkpoint.vocab_hash.clone(),
            tokenizer: hash,
        });
    }
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let params = &checkpoint.params;
    let seqs = classification_sequences(test, vocab, params.config.max_positions);
    let mut preds = Vec::with_capacity(test.len());
    for chunk in seqs.chunks(EVAL_BATCH) {
        preds.extend(predict_batch(params, chunk)?.into_iter().map(|p| p.label));
    }
    let labels: Vec<u8> = test.iter().map(|e| e.label).collect();
    compute_metrics(&preds, &labels)
}
