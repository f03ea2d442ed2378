//! Regenerates the synthetic corpora under `data/`.
//!
//! cargo run -p curricular-core --example bundle_data -- <repo-root>

use std::path::PathBuf;

use curricular::corpus::write_jsonl;
use curricular::eval::save_csv;
use curricular::synth::{toy_corpus, two_domain_benchmark, BenchmarkSpec};

pub const TOY_SEED: u64 = 7;
pub const TOY_BYTES: usize = 50_000;
pub const BENCH_SEED: u64 = 0;

fn main() -> curricular::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let data = root.join("data");
    std::fs::create_dir_all(data.join("benchmark")).expect("create data dir");
    write_jsonl(&data.join("toy-corpus.jsonl"), &toy_corpus(TOY_SEED, TOY_BYTES))?;
    let b = two_domain_benchmark(BENCH_SEED, &BenchmarkSpec::default());
    write_jsonl(&data.join("benchmark/lexicon.jsonl"), &b.corpus)?;
    save_csv(&data.join("benchmark/posts.csv"), &b.examples)?;
    Ok(())
}
