use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Word count of the reference pre-training corpus.
pub const REFERENCE_WORDS: u64 = 7_567_108;

/// Relative deviation above which a reported ratio is flagged.
pub const FLAG_TOLERANCE: f64 = 0.01;

/// `words_other / words_ours`, unrounded.
pub fn size_ratio(words_other: u64, words_ours: u64) -> Result<f64> {
    if words_other == 0 {
        return Err(Error::OutOfRange("words_other"));
    }
    if words_ours == 0 {
        return Err(Error::OutOfRange("words_ours"));
    }
    Ok(words_other as f64 / words_ours as f64)
}

/// [`size_ratio`] rounded to two decimals.
pub fn relative_size(words_other: u64, words_ours: u64) -> Result<f64> {
    Ok((size_ratio(words_other, words_ours)? * 100.0).round() / 100.0)
}

/// Input row: a corpus size and optionally the ratio some source claims for it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeRow {
    pub name: String,
    pub words: u64,
    #[serde(default)]
    pub reported_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeReportRow {
    pub name: String,
    pub words: u64,
    pub ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reported_ratio: Option<f64>,
    /// Set when the reported ratio is off by more than [`FLAG_TOLERANCE`].
    pub flag: bool,
}

pub fn size_report(rows: &[SizeRow], words_ours: u64) -> Result<Vec<SizeReportRow>> {
    rows.iter()
        .map(|r| {
            let ratio = relative_size(r.words, words_ours)?;
            let flag = r
                .reported_ratio
                .is_some_and(|rep| (ratio - rep).abs() > FLAG_TOLERANCE * rep.abs());
            Ok(SizeReportRow {
                name: r.name.clone(),
                words: r.words,
                ratio,
                reported_ratio: r.reported_ratio,
                flag,
            })
        })
        .collect()
}

/// Published corpus sizes of related encoders and the ratios quoted for them.
pub fn reference_rows() -> Vec<SizeRow> {
    let row = |name: &str, words: u64, reported: f64| SizeRow {
        name: name.into(),
        words,
        reported_ratio: Some(reported),
    };
    vec![
        row("ClinicalBERT", 18_100_000_000, 2378.48),
        row("BioBERT", 18_150_000_000, 2377.81),
        row("Psych-Search", 8_130_000_000, 1073.98),
        row("MentalBERT", 2_870_000_000, 37.93),
        row("ours", REFERENCE_WORDS, 1.0),
    ]
}
