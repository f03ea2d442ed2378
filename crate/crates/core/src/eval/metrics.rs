use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts and the ratios derived from them. Every 0/0 ratio is 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unparsed_count: Option<u64>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let n = tp + fp + fn_ + tn;
        Self {
            precision,
            recall,
            f1,
            accuracy: ratio(tp + tn, n),
            tp,
            fp,
            fn_,
            tn,
            n,
            unparsed_count: None,
        }
    }
}

/// Scores binary predictions against labels (positive class is 1).
pub fn compute_metrics(preds: &[u8], labels: &[u8]) -> Result<EvalReport> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch(preds.len(), labels.len()));
    }
    if preds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut c = [0u64; 4];
    for (&p, &l) in preds.iter().zip(labels) {
        c[usize::from(p != 0) * 2 + usize::from(l != 0)] += 1;
    }
    let [tn, fn_, fp, tp] = c;
    Ok(EvalReport::from_counts(tp, fp, fn_, tn))
}
