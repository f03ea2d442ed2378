//! WordPiece-style subword vocabulary: induction by frequency-ranked pair
//! merges, greedy longest-match encoding, and decoding.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{normalize, RawDocument};
use crate::error::{io_err, Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;
pub const MASK_ID: usize = 4;
pub const NUM_SPECIALS: usize = 5;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];
pub const CONTINUATION_PREFIX: &str = "##";

/// Ordered token inventory. Ids are dense and the specials occupy 0..5.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    id_of: HashMap<String, usize>,
    max_token_chars: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabHeader {
    version: u32,
    size: usize,
    specials: Vec<String>,
}

impl Vocabulary {
    /// Validates and indexes a token list whose first five entries are the specials.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < NUM_SPECIALS || tokens[..NUM_SPECIALS] != SPECIAL_TOKENS {
            return Err(Error::Vocab(format!("first {NUM_SPECIALS} tokens must be {SPECIAL_TOKENS:?}")));
        }
        let mut id_of = HashMap::with_capacity(tokens.len());
        let mut max_token_chars = 0;
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok == CONTINUATION_PREFIX {
                return Err(Error::Vocab(format!("empty token at id {id}")));
            }
            if tok.chars().any(char::is_whitespace) {
                return Err(Error::Vocab(format!("token {tok:?} contains whitespace")));
            }
            if id_of.insert(tok.clone(), id).is_some() {
                return Err(Error::Vocab(format!("duplicate token {tok:?}")));
            }
            max_token_chars = max_token_chars.max(piece_body(tok).chars().count());
        }
        Ok(Self {
            tokens,
            id_of,
            max_token_chars,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.id_of.get(token).copied()
    }

    pub fn is_special(id: usize) -> bool {
        id < NUM_SPECIALS
    }

    /// Vocabulary file content: one token per line.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    /// Hex SHA-256 of the vocabulary file content.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }

    /// Path of the JSON header stored next to a vocabulary file.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut name = path.as_os_str().to_owned();
        name.push(".json");
        PathBuf::from(name)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string()).map_err(io_err(path))?;
        let header = VocabHeader {
            version: 1,
            size: self.len(),
            specials: SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect(),
        };
        let side = Self::sidecar_path(path);
        fs::write(&side, serde_json::to_string(&header)?).map_err(io_err(&side))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingPath(path.to_path_buf()));
        }
        let content = fs::read_to_string(path).map_err(io_err(path))?;
        let tokens: Vec<String> = content.lines().map(str::to_string).collect();
        let vocab = Self::from_tokens(tokens)?;
        let side = Self::sidecar_path(path);
        if side.exists() {
            let header: VocabHeader = serde_json::from_str(&fs::read_to_string(&side).map_err(io_err(&side))?)?;
            if header.version != 1 {
                return Err(Error::Vocab(format!("unsupported header version {}", header.version)));
            }
            if header.size != vocab.len() {
                return Err(Error::Vocab(format!(
                    "header declares {} tokens, file has {}",
                    header.size,
                    vocab.len()
                )));
            }
            if header.specials != SPECIAL_TOKENS {
                return Err(Error::Vocab(format!("unexpected specials {:?}", header.specials)));
            }
        }
        Ok(vocab)
    }

    /// Greedy longest-match-first segmentation of one normalized word.
    /// Returns `None` when some remainder cannot be matched.
    pub fn segment_word(&self, word: &str) -> Option<Vec<usize>> {
        let bounds: Vec<usize> = word.char_indices().map(|(i, _)| i).chain([word.len()]).collect();
        let n_chars = bounds.len() - 1;
        let mut pieces = Vec::new();
        let mut start = 0;
        let mut candidate = String::new();
        while start < n_chars {
            let mut found = None;
            let longest = (n_chars - start).min(self.max_token_chars);
            for len in (1..=longest).rev() {
                candidate.clear();
                if start > 0 {
                    candidate.push_str(CONTINUATION_PREFIX);
                }
                candidate.push_str(&word[bounds[start]..bounds[start + len]]);
                if let Some(id) = self.id(&candidate).filter(|&id| !Self::is_special(id)) {
                    found = Some((id, len));
                    break;
                }
            }
            let (id, len) = found?;
            pieces.push(id);
            start += len;
        }
        Some(pieces)
    }

    /// Normalizes `text`, then segments each word. Unsegmentable words become one `[UNK]`.
    pub fn encode(&self, text: &str, add_specials: bool) -> Vec<usize> {
        let norm = normalize(text);
        let mut ids = Vec::with_capacity(norm.len() / 3 + 2);
        if add_specials {
            ids.push(CLS_ID);
        }
        for word in norm.split(' ').filter(|w| !w.is_empty()) {
            match self.segment_word(word) {
                Some(p) => ids.extend(p),
                None => ids.push(UNK_ID),
            }
        }
        if add_specials {
            ids.push(SEP_ID);
        }
        ids
    }

    /// Inverse of [`encode`](Self::encode) for segmentable text. `[UNK]` is rendered literally.
    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id).ok_or(Error::TokenOutOfRange { id, size: self.len() })?;
            if Self::is_special(id) && id != UNK_ID {
                continue;
            }
            match tok.strip_prefix(CONTINUATION_PREFIX) {
                Some(body) if id != UNK_ID => out.push_str(body),
                _ => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(tok);
                }
            }
        }
        Ok(out)
    }
}

fn piece_body(tok: &str) -> &str {
    tok.strip_prefix(CONTINUATION_PREFIX).unwrap_or(tok)
}

/// Smallest `target_size` accepted by [`build_vocab`] for this corpus.
pub fn vocab_floor(docs: &[RawDocument]) -> usize {
    NUM_SPECIALS + 2 * corpus_alphabet(docs).len()
}

fn corpus_alphabet(docs: &[RawDocument]) -> BTreeSet<char> {
    docs.iter()
        .flat_map(|d| normalize(&d.text).chars().collect::<Vec<_>>())
        .filter(|c| !c.is_whitespace())
        .collect()
}

/// Induces a vocabulary of `target_size` tokens.
///
/// Layout: the five specials, every corpus character, every character with
/// the continuation prefix, then merged pieces in merge order. Each round
/// merges the adjacent symbol pair with the highest word-frequency-weighted
/// count, ties going to the lexicographically smallest merged token. If the
/// corpus runs out of pairs first, the vocabulary is returned smaller.
pub fn build_vocab(docs: &[RawDocument], target_size: usize) -> Result<Vocabulary> {
    let mut word_freq: BTreeMap<String, u64> = BTreeMap::new();
    for d in docs {
        for w in normalize(&d.text).split(' ').filter(|w| !w.is_empty()) {
            *word_freq.entry(w.to_string()).or_default() += 1;
        }
    }
    if word_freq.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let alphabet = corpus_alphabet(docs);
    let floor = NUM_SPECIALS + 2 * alphabet.len();
    if target_size < floor {
        return Err(Error::Vocab(format!(
            "target_size {target_size} too small: corpus needs at least {floor}"
        )));
    }

    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(alphabet.iter().map(|c| c.to_string()));
    tokens.extend(alphabet.iter().map(|c| format!("{CONTINUATION_PREFIX}{c}")));
    let mut sym_id: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    let mut symbols = tokens.clone();

    let mut words: Vec<(Vec<u32>, u64)> = word_freq
        .iter()
        .map(|(w, &f)| {
            let syms = w
                .chars()
                .enumerate()
                .map(|(i, c)| {
                    let s = if i == 0 { c.to_string() } else { format!("{CONTINUATION_PREFIX}{c}") };
                    sym_id[&s]
                })
                .collect();
            (syms, f)
        })
        .collect();

    while tokens.len() < target_size {
        let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
        for (syms, f) in &words {
            for pair in syms.windows(2) {
                *pair_counts.entry((pair[0], pair[1])).or_default() += f;
            }
        }
        let merged_of = |&(a, b): &(u32, u32)| format!("{}{}", symbols[a as usize], piece_body(&symbols[b as usize]));
        let Some((best, _)) = pair_counts.iter().max_by(|(pa, ca), (pb, cb)| {
            ca.cmp(cb)
                .then_with(|| merged_of(pb).cmp(&merged_of(pa)))
                .then_with(|| pb.cmp(pa))
        }) else {
            break;
        };
        let best = *best;
        let merged = merged_of(&best);
        let new_id = *sym_id.entry(merged.clone()).or_insert_with(|| {
            symbols.push(merged.clone());
            (symbols.len() - 1) as u32
        });
        if !tokens.contains(&merged) {
            tokens.push(merged);
        }
        for (syms, _) in words.iter_mut() {
            if syms.len() < 2 {
                continue;
            }
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && (syms[i], syms[i + 1]) == best {
                    out.push(new_id);
                    i += 2;
                } else {
                    out.push(syms[i]);
                    i += 1;
                }
            }
            *syms = out;
        }
    }
    Vocabulary::from_tokens(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(extra: &[&str]) -> Vocabulary {
        let mut t: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        t.extend(extra.iter().map(|s| s.to_string()));
        Vocabulary::from_tokens(t).unwrap()
    }

    #[test]
    fn encode_decode_examples() {
        let v = vocab(&["the", "cat", "##s"]);
        let (the, cat, s) = (5, 6, 7);
        assert_eq!(v.encode("the cats", true), vec![CLS_ID, the, cat, s, SEP_ID]);
        assert_eq!(v.encode("", true), vec![CLS_ID, SEP_ID]);
        assert_eq!(v.encode("the dog", false), vec![the, UNK_ID]);
        assert_eq!(v.decode(&[CLS_ID, the, cat, s, SEP_ID]).unwrap(), "the cats");
        assert_eq!(v.decode(&[CLS_ID, SEP_ID]).unwrap(), "");
        assert_eq!(v.decode(&[UNK_ID]).unwrap(), "[UNK]");
        assert!(matches!(v.decode(&[99]), Err(Error::TokenOutOfRange { .. })));
    }

    #[test]
    fn partial_match_collapses_to_unk() {
        let v = vocab(&["c", "cat", "##s"]);
        // "catz": "cat" matches, "##z" does not
        assert_eq!(v.encode("catz", false), vec![UNK_ID]);
    }

    #[test]
    fn build_vocab_merges_most_frequent_pair() {
        let docs = [RawDocument::new("d", "aa aa aa")];
        assert_eq!(vocab_floor(&docs), 7);
        let v = build_vocab(&docs, 8).unwrap();
        assert_eq!(v.tokens()[5..], ["a", "##a", "aa"]);
        assert!(matches!(build_vocab(&docs, 4), Err(Error::Vocab(_))));
        assert!(matches!(build_vocab(&docs, 6), Err(Error::Vocab(_))));
        assert!(matches!(build_vocab(&[], 100), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn build_vocab_tie_breaks_lexicographically() {
        // pairs (a,##b) and (c,##d) both occur twice
        let docs = [RawDocument::new("d", "cd ab cd ab")];
        let v = build_vocab(&docs, 5 + 8 + 1).unwrap();
        assert_eq!(v.tokens().last().unwrap(), "ab");
    }

    #[test]
    fn build_vocab_is_deterministic_and_saturates() {
        let docs = [RawDocument::new("d", "the cat sat on the mat. The cats sat!")];
        let a = build_vocab(&docs, 40).unwrap();
        let b = build_vocab(&docs, 40).unwrap();
        assert_eq!(a.to_file_string(), b.to_file_string());
        let big = build_vocab(&docs, 10_000).unwrap();
        assert!(big.len() < 10_000);
        for w in ["the", "cat", "sat", "mat."] {
            assert_eq!(big.segment_word(w).unwrap().len(), 1, "{w}");
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = build_vocab(&[RawDocument::new("d", "hello world hello")], 30).unwrap();
        v.save(&path).unwrap();
        let header = fs::read_to_string(Vocabulary::sidecar_path(&path)).unwrap();
        assert_eq!(
            header,
            format!(
                "{{\"version\":1,\"size\":{},\"specials\":[\"[PAD]\",\"[UNK]\",\"[CLS]\",\"[SEP]\",\"[MASK]\"]}}",
                v.len()
            )
        );
        let back = Vocabulary::load(&path).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.hash(), v.hash());
    }

    #[test]
    fn rejects_malformed_token_lists() {
        assert!(Vocabulary::from_tokens(vec!["a".into()]).is_err());
        let mut t: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        t.push("x".into());
        t.push("x".into());
        assert!(Vocabulary::from_tokens(t).is_err());
    }

    /// Reference greedy segmenter written directly from the definition.
    fn brute_segment(tokens: &BTreeSet<String>, word: &[char]) -> Option<Vec<String>> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < word.len() {
            let mut best = None;
            for j in i + 1..=word.len() {
                let body: String = word[i..j].iter().collect();
                let cand = if i == 0 { body } else { format!("##{body}") };
                if tokens.contains(&cand) {
                    best = Some((cand, j));
                }
            }
            let (tok, j) = best?;
            out.push(tok);
            i = j;
        }
        Some(out)
    }

    proptest! {
        #[test]
        fn greedy_matches_brute_force(
            pieces in proptest::collection::btree_set("(##)?[abc]{1,4}", 1..25),
            word in "[abc]{1,12}",
        ) {
            let v = vocab(&pieces.iter().map(String::as_str).collect::<Vec<_>>());
            let chars: Vec<char> = word.chars().collect();
            let expected = brute_segment(&pieces, &chars);
            let got = v.segment_word(&word).map(|ids| ids.iter().map(|&i| v.token(i).unwrap().to_string()).collect::<Vec<_>>());
            prop_assert_eq!(got.clone(), expected);
            if let Some(toks) = got {
                // no piece extends to a longer in-vocabulary piece
                let mut pos = 0;
                for t in &toks {
                    let len = piece_body(t).chars().count();
                    for ext in pos + len + 1..=chars.len() {
                        let body: String = chars[pos..ext].iter().collect();
                        let cand = if pos == 0 { body } else { format!("##{body}") };
                        prop_assert!(!pieces.contains(&cand));
                    }
                    pos += len;
                }
            }
        }

        #[test]
        fn round_trip_on_segmentable_text(text in "[a-e ]{0,60}") {
            let docs = [RawDocument::new("d", "abcde")];
            let v = build_vocab(&docs, vocab_floor(&docs)).unwrap();
            let ids = v.encode(&text, true);
            prop_assert_eq!(ids[0], CLS_ID);
            prop_assert_eq!(*ids.last().unwrap(), SEP_ID);
            prop_assert!(!ids.contains(&PAD_ID) && !ids.contains(&MASK_ID));
            prop_assert_eq!(v.decode(&ids).unwrap(), normalize(&text));
        }
    }
}
