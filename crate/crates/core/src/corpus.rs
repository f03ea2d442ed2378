//! Corpus ingestion, normalization, statistics and token windowing.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

/// One source text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawDocument {
    pub doc_id: String,
    pub text: String,
}

impl RawDocument {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusFormat {
    /// Directory of `*.txt` files, one document per file.
    PlainDir,
    /// One `{"id": ..., "text": ...}` object per line.
    Jsonl,
}

impl CorpusFormat {
    /// Directories are read as plain text, files as JSONL.
    pub fn detect(path: &Path) -> Self {
        if path.is_dir() {
            Self::PlainDir
        } else {
            Self::Jsonl
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlDoc {
    id: String,
    text: String,
}

/// Reads a corpus. Plain directories are ordered by filename; JSONL keeps line order.
pub fn ingest(path: &Path, format: CorpusFormat) -> Result<Vec<RawDocument>> {
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    let docs = match format {
        CorpusFormat::PlainDir => ingest_dir(path)?,
        CorpusFormat::Jsonl => ingest_jsonl(path)?,
    };
    if docs.is_empty() {
        return Err(Error::NoDocuments(path.to_path_buf()));
    }
    Ok(docs)
}

fn read_utf8(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    String::from_utf8(bytes).map_err(|_| Error::NotUtf8(path.to_path_buf()))
}

fn ingest_dir(dir: &Path) -> Result<Vec<RawDocument>> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    files
        .iter()
        .map(|p| {
            let doc_id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(RawDocument::new(doc_id, read_utf8(p)?))
        })
        .collect()
}

fn ingest_jsonl(path: &Path) -> Result<Vec<RawDocument>> {
    let content = read_utf8(path)?;
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::MalformedLine {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let doc: JsonlDoc = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if doc.id.is_empty() {
            return Err(malformed("empty id".into()));
        }
        if !seen.insert(doc.id.clone()) {
            return Err(malformed(format!("duplicate id {:?}", doc.id)));
        }
        docs.push(RawDocument::new(doc.id, doc.text));
    }
    Ok(docs)
}

/// Writes documents as JSONL readable by [`ingest`].
pub fn write_jsonl(path: &Path, docs: &[RawDocument]) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        id: &'a str,
        text: &'a str,
    }
    let mut out = Vec::new();
    for d in docs {
        serde_json::to_writer(&mut out, &Line { id: &d.doc_id, text: &d.text })?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Lowercases and collapses every whitespace run to one space, trimming the ends.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&word.to_lowercase());
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub word_count: u64,
    pub sentence_count: u64,
    pub doc_count: u64,
}

impl std::ops::Add for CorpusStats {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            word_count: self.word_count + rhs.word_count,
            sentence_count: self.sentence_count + rhs.sentence_count,
            doc_count: self.doc_count + rhs.doc_count,
        }
    }
}

fn text_stats(text: &str) -> (u64, u64) {
    let (mut words, mut sentences, mut open) = (0, 0, false);
    for word in text.split_whitespace() {
        words += 1;
        open = true;
        if word.ends_with(['.', '?', '!']) {
            sentences += 1;
            open = false;
        }
    }
    (words, sentences + u64::from(open))
}

/// Words are whitespace-separated tokens. A sentence ends at a word whose last
/// character is `.`, `?` or `!`; a trailing unterminated run of words counts
/// as one more sentence.
pub fn corpus_stats(docs: &[RawDocument]) -> CorpusStats {
    docs.iter().fold(CorpusStats::default(), |acc, d| {
        let (word_count, sentence_count) = text_stats(&d.text);
        acc + CorpusStats {
            word_count,
            sentence_count,
            doc_count: 1,
        }
    })
}

/// A slice of a tokenized document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenWindow {
    pub ids: Vec<usize>,
    pub doc_id: String,
    /// Token offset of `ids[0]` in the source document.
    pub start: usize,
}

pub const DEFAULT_WINDOW_LEN: usize = 500;
pub const DEFAULT_OVERLAP: usize = 50;

/// Cuts `ids` into windows of at most `window_len` tokens starting every
/// `window_len - overlap` tokens. The tail window is kept when it adds at
/// least one uncovered token.
pub fn make_windows(doc_id: &str, ids: &[usize], window_len: usize, overlap: usize) -> Result<Vec<TokenWindow>> {
    if window_len == 0 || overlap >= window_len {
        return Err(Error::InvalidWindow { window_len, overlap });
    }
    let stride = window_len - overlap;
    let mut windows = Vec::new();
    let mut start = 0;
    while start < ids.len() {
        let end = (start + window_len).min(ids.len());
        windows.push(TokenWindow {
            ids: ids[start..end].to_vec(),
            doc_id: doc_id.to_string(),
            start,
        });
        if end == ids.len() {
            break;
        }
        start += stride;
    }
    Ok(windows)
}
