use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::normalize;
use crate::error::{io_err, Error, Result};

/// A text with a binary label (1 = positive).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledExample {
    pub text: String,
    pub label: u8,
}

impl LabeledExample {
    pub fn new(text: impl Into<String>, label: u8) -> Self {
        Self { text: text.into(), label }
    }
}

fn parse_label(raw: &str) -> std::result::Result<u8, String> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(format!("label must be 0 or 1, got {other:?}")),
    }
}

/// Loads a labeled dataset. `.jsonl` files hold `{"text", "label"}` objects;
/// anything else is read as CSV with a `text` column and either a `label`
/// column or, when `positive_tag` is given, a `tags` column where rows listing
/// that tag (comma separated, case-insensitive) are positive.
pub fn load_dataset(path: &Path, positive_tag: Option<&str>) -> Result<Vec<LabeledExample>> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    let examples = if path.extension().is_some_and(|e| e == "jsonl") {
        load_jsonl(path)?
    } else {
        load_csv(path, positive_tag)?
    };
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(examples)
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::MalformedLine {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn load_jsonl(path: &Path) -> Result<Vec<LabeledExample>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let content = String::from_utf8(bytes).map_err(|_| Error::NotUtf8(path.to_path_buf()))?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: LabeledExample = serde_json::from_str(line).map_err(|e| malformed(path, i + 1, e.to_string()))?;
        if ex.label > 1 {
            return Err(malformed(path, i + 1, format!("label must be 0 or 1, got {}", ex.label)));
        }
        if normalize(&ex.text).is_empty() {
            return Err(malformed(path, i + 1, "empty text"));
        }
        out.push(ex);
    }
    Ok(out)
}

fn load_csv(path: &Path, positive_tag: Option<&str>) -> Result<Vec<LabeledExample>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| malformed(path, 1, e.to_string()))?;
    let headers = reader.headers().map_err(|e| malformed(path, 1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let text_col = col("text").ok_or_else(|| malformed(path, 1, "missing text column"))?;
    let label_col = match (col("label"), positive_tag, col("tags")) {
        (Some(c), _, _) => Ok(c),
        (None, Some(_), Some(c)) => Err(c),
        _ => return Err(malformed(path, 1, "missing label column")),
    };
    let tag = positive_tag.map(str::to_lowercase);
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| malformed(path, line, e.to_string()))?;
        let text = rec.get(text_col).unwrap_or_default().to_string();
        if normalize(&text).is_empty() {
            return Err(malformed(path, line, "empty text"));
        }
        let label = match label_col {
            Ok(c) => parse_label(rec.get(c).unwrap_or_default()).map_err(|m| malformed(path, line, m))?,
            Err(c) => {
                let tags = rec.get(c).unwrap_or_default().to_lowercase();
                u8::from(tags.split(',').any(|t| Some(t.trim()) == tag.as_deref()))
            }
        };
        out.push(LabeledExample { text, label });
    }
    Ok(out)
}

/// Writes `text,label` CSV.
pub fn save_csv(path: &Path, examples: &[LabeledExample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Config(e.to_string());
    w.write_record(["text", "label"]).map_err(to_err)?;
    for e in examples {
        w.write_record([e.text.as_str(), if e.label == 1 { "1" } else { "0" }]).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, bytes).map_err(io_err(path))
}

/// Per-class seeded split; each class contributes `round(count * test_fraction)`
/// examples to the test side. Both sides keep the input order.
pub fn stratified_split(
    examples: &[LabeledExample],
    test_fraction: f64,
    seed: u64,
) -> (Vec<LabeledExample>, Vec<LabeledExample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: HashMap<u8, Vec<usize>> = HashMap::new();
    for (i, e) in examples.iter().enumerate() {
        by_class.entry(e.label).or_default().push(i);
    }
    let mut test_idx = vec![false; examples.len()];
    let mut classes: Vec<_> = by_class.into_iter().collect();
    classes.sort_by_key(|(c, _)| *c);
    for (_, mut idx) in classes {
        idx.shuffle(&mut rng);
        let k = (idx.len() as f64 * test_fraction).round() as usize;
        for &i in &idx[..k] {
            test_idx[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (e, t) in examples.iter().zip(test_idx) {
        if t { &mut test } else { &mut train }.push(e.clone());
    }
    (train, test)
}
