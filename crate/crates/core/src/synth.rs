//! Seeded generators for the bundled toy corpora.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::RawDocument;
use crate::eval::LabeledExample;

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr", "pl"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
const CODAS: &[&str] = &["", "", "n", "r", "l", "s", "k"];

fn syllable(rng: &mut impl Rng) -> String {
    let mut s = String::new();
    s.push_str(ONSETS.choose(rng).unwrap());
    s.push_str(VOWELS.choose(rng).unwrap());
    s.push_str(CODAS.choose(rng).unwrap());
    s
}

/// `n` distinct two-syllable nonsense words not in `taken`; all results are added to `taken`.
pub fn pseudo_words(rng: &mut impl Rng, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = syllable(rng) + &syllable(rng);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn pick<'a>(rng: &mut impl Rng, xs: &'a [String]) -> &'a str {
    xs.choose(rng).unwrap()
}

struct Topic {
    nouns: Vec<String>,
    verbs: Vec<String>,
    adjs: Vec<String>,
}

/// Topic-structured sentences over a nonsense lexicon, split into documents
/// of roughly 1.6 KB, until `target_bytes` of text exist.
pub fn toy_corpus(seed: u64, target_bytes: usize) -> Vec<RawDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = BTreeSet::new();
    let topics: Vec<Topic> = (0..8)
        .map(|_| Topic {
            nouns: pseudo_words(&mut rng, 6, &mut taken),
            verbs: pseudo_words(&mut rng, 4, &mut taken),
            adjs: pseudo_words(&mut rng, 4, &mut taken),
        })
        .collect();
    let mut docs = Vec::new();
    let mut total = 0;
    while total < target_bytes {
        let t = &topics[rng.random_range(0..topics.len())];
        let mut text = String::new();
        while text.len() < 1600 {
            // Nouns mostly keep company with one adjective and one verb.
            let i = rng.random_range(0..t.nouns.len());
            let noun = &t.nouns[i];
            let bound = rng.random_bool(0.8);
            let adj = if bound { &t.adjs[i % t.adjs.len()] } else { pick(&mut rng, &t.adjs) };
            let verb = if bound { &t.verbs[i % t.verbs.len()] } else { pick(&mut rng, &t.verbs) };
            let other = pick(&mut rng, &t.nouns);
            let s = match rng.random_range(0..4) {
                0 => format!("the {adj} {noun} {verb} the {other} ."),
                1 => format!("a {noun} {verb} near every {adj} {other} ."),
                2 => format!("when the {noun} is {adj} , it {verb} ."),
                _ => format!("some {adj} {noun} {verb} and then {verb} again ."),
            };
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(&s);
        }
        total += text.len();
        docs.push(RawDocument::new(format!("doc{:03}", docs.len()), text));
    }
    docs
}

/// Shape of the two-domain benchmark.
#[derive(Clone, Debug)]
pub struct BenchmarkSpec {
    /// Marker words per class.
    pub family_size: usize,
    /// Domain-corpus sentences mentioning each marker word.
    pub mentions_per_word: usize,
    /// Labeled examples per class.
    pub examples_per_class: usize,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            family_size: 200,
            mentions_per_word: 8,
            examples_per_class: 200,
        }
    }
}

pub struct Benchmark {
    /// Unlabeled domain text: marker words next to class-specific cue words.
    pub corpus: Vec<RawDocument>,
    /// Labeled posts: a marker word in neutral filler, no cue words.
    pub examples: Vec<LabeledExample>,
    pub positive_words: Vec<String>,
    pub negative_words: Vec<String>,
}

const POS_CUES: &[&str] = &[
    "restless", "tired", "hopeless", "worried", "sleepless", "tearful", "numb", "empty", "drained", "lonely",
];
const NEG_CUES: &[&str] = &[
    "cheerful", "rested", "hopeful", "calm", "lively", "relaxed", "content", "proud", "social", "steady",
];
const PEOPLE: &[&str] = &["my sister", "my friend", "a coworker", "my neighbor", "our teacher", "my cousin"];
const PLACES: &[&str] = &["at work", "at home", "this week", "at school", "lately", "since spring"];

/// Domain corpus plus a labeled task whose label is the family of the one
/// marker word in each post. Cue words only occur in the domain corpus, so
/// the family of a marker word unseen during fine-tuning is recoverable only
/// from pre-training.
pub fn two_domain_benchmark(seed: u64, spec: &BenchmarkSpec) -> Benchmark {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken: BTreeSet<String> = BTreeSet::new();
    let positive_words = pseudo_words(&mut rng, spec.family_size, &mut taken);
    let negative_words = pseudo_words(&mut rng, spec.family_size, &mut taken);

    // One short entry per document, each pairing a marker with a single cue.
    let mut entries = Vec::new();
    for (words, cues) in [(&positive_words, POS_CUES), (&negative_words, NEG_CUES)] {
        for (i, w) in words.iter().enumerate() {
            for _ in 0..spec.mentions_per_word {
                // Each marker has a usual cue, sometimes swapped for a sibling.
                let c = if rng.random_bool(0.9) { cues[i % cues.len()] } else { cues.choose(&mut rng).unwrap() };
                entries.push(match rng.random_range(0..3) {
                    0 => format!("people with {w} often feel {c} ."),
                    1 => format!("{w} : a state of being {c} ."),
                    _ => format!("someone describing {w} may seem {c} ."),
                });
            }
        }
    }
    entries.shuffle(&mut rng);
    let corpus = entries
        .into_iter()
        .enumerate()
        .map(|(i, text)| RawDocument::new(format!("lex{i:05}"), text))
        .collect();

    // Markers are dealt out without replacement, so with `examples_per_class`
    // up to `family_size` no marker appears in two posts.
    let decks: Vec<Vec<&String>> = [&positive_words, &negative_words]
        .iter()
        .map(|ws| {
            let mut d: Vec<&String> = ws.iter().collect();
            d.shuffle(&mut rng);
            d
        })
        .collect();
    let mut examples = Vec::with_capacity(2 * spec.examples_per_class);
    for i in 0..spec.examples_per_class {
        for (label, deck) in [(1u8, &decks[0]), (0u8, &decks[1])] {
            let who = PEOPLE.choose(&mut rng).unwrap();
            let when = PLACES.choose(&mut rng).unwrap();
            let w = deck[i % deck.len()];
            let text = match rng.random_range(0..3) {
                0 => format!("{who} says i mention {w} a lot {when} ."),
                1 => format!("{when} i keep thinking about {w} , {who} noticed ."),
                _ => format!("i told {who} about {w} {when} ."),
            };
            examples.push(LabeledExample { text, label });
        }
    }
    Benchmark {
        corpus,
        examples,
        positive_words,
        negative_words,
    }
}
