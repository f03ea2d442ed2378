//! The files under `data/` are exactly what the generators produce.

use std::path::Path;

use curricular::corpus::{ingest, write_jsonl, CorpusFormat};
use curricular::eval::{load_dataset, save_csv};
use curricular::synth::{toy_corpus, two_domain_benchmark, BenchmarkSpec};

fn bundled(rel: &str) -> Vec<u8> {
    std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)).unwrap()
}

#[test]
fn toy_corpus_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.jsonl");
    let docs = toy_corpus(7, 50_000);
    write_jsonl(&path, &docs).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bundled("toy-corpus.jsonl"));
    assert_eq!(ingest(&path, CorpusFormat::Jsonl).unwrap(), docs);
}

#[test]
fn benchmark_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    let b = two_domain_benchmark(0, &BenchmarkSpec::default());
    let lex = dir.path().join("lexicon.jsonl");
    let posts = dir.path().join("posts.csv");
    write_jsonl(&lex, &b.corpus).unwrap();
    save_csv(&posts, &b.examples).unwrap();
    assert_eq!(std::fs::read(&lex).unwrap(), bundled("benchmark/lexicon.jsonl"));
    assert_eq!(std::fs::read(&posts).unwrap(), bundled("benchmark/posts.csv"));
    assert_eq!(load_dataset(&posts, None).unwrap(), b.examples);
}
