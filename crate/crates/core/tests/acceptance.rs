//! Acceptance suite. Runs every criterion in a single-threaded pool and prints
//! one PASS/FAIL line each. Pass criterion numbers as arguments to run a subset:
//! `cargo test --release -p curricular-core --test acceptance -- 3 4`.

mod common;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use curricular::corpus::{ingest, make_windows, CorpusFormat, RawDocument};
use curricular::eval::{
    compute_metrics, evaluate, load_dataset, reference_rows, size_report, stratified_split, LabeledExample,
    REFERENCE_WORDS,
};
use curricular::kernels::IGNORE;
use curricular::model::{cls_loss_on, mlm_loss_on, Dropout, ModelConfig, ModelParameters, Precision, Preset};
use curricular::optim::{Adam, AdamConfig};
use curricular::tokenizer::{build_vocab, Vocabulary, MASK_ID, NUM_SPECIALS};
use curricular::train::{
    accumulate_mlm, corrupt_for_mlm, finetune, mlm_loss, pretrain, pretraining_sequences, stream_rng, Checkpoint,
    FinetuneConfig, MlmRow, PretrainConfig, Stream,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn c1_gradients() -> Outcome {
    let t = Instant::now();
    let (params, batch, mlm_labels, cls_labels) = common::fixture();
    let cfg = params.config.clone();
    let n = mlm_labels.iter().filter(|&&l| l != IGNORE).count() as f64;
    let mlm = common::check(&params, &|tape, vars| {
        mlm_loss_on(tape, vars, &cfg, &batch, &mlm_labels, n, &mut Dropout::off())
    });
    let cls = common::check(&params, &|tape, vars| {
        cls_loss_on(tape, vars, &cfg, &batch, &cls_labels, 2.0, &mut Dropout::off())
    });
    let secs = t.elapsed().as_secs_f64();
    outcome(
        mlm < 1e-4 && cls < 1e-4 && secs < 120.0,
        format!("max rel error mlm {mlm:.2e}, cls {cls:.2e} (< 1e-4); {secs:.1}s"),
    )
}

fn c2_masking() -> Outcome {
    let vocab_size = 30_522;
    let mut data_rng = ChaCha8Rng::seed_from_u64(21);
    let mut mask_rng = stream_rng(21, Stream::Mask);
    let (mut eligible, mut selected, mut masked, mut random, mut kept, mut bad) = (0u64, 0u64, 0u64, 0u64, 0u64, 0u64);
    while eligible < 1_100_000 {
        let len = data_rng.random_range(2..600);
        let pad = data_rng.random_range(0..40);
        let mut ids = vec![2usize];
        for _ in 0..len {
            // sprinkle specials mid-sequence too
            ids.push(if data_rng.random::<f64>() < 0.02 {
                data_rng.random_range(0..NUM_SPECIALS)
            } else {
                data_rng.random_range(NUM_SPECIALS..vocab_size)
            });
        }
        ids.push(3);
        ids.extend(std::iter::repeat_n(0, pad));
        let row = corrupt_for_mlm(&ids, vocab_size, &mut mask_rng, 0.15);
        for (i, &id) in ids.iter().enumerate() {
            let sel = row.labels[i] != IGNORE;
            if Vocabulary::is_special(id) {
                bad += u64::from(sel || row.input_ids[i] != id);
                continue;
            }
            eligible += 1;
            if !sel {
                continue;
            }
            selected += 1;
            let got = row.input_ids[i];
            if got == MASK_ID {
                masked += 1;
            } else if got == id {
                kept += 1;
            } else {
                random += 1;
                bad += u64::from(got < NUM_SPECIALS);
            }
        }
    }
    let rate = selected as f64 / eligible as f64;
    let s = selected as f64;
    let (m, r, k) = (masked as f64 / s, random as f64 / s, kept as f64 / s);
    let pass = (rate - 0.15).abs() <= 0.003
        && (m - 0.8).abs() <= 0.01
        && (r - 0.1).abs() <= 0.01
        && (k - 0.1).abs() <= 0.01
        && bad == 0;
    outcome(
        pass,
        format!("{eligible} eligible, rate {rate:.4}, mask/random/keep {m:.4}/{r:.4}/{k:.4}, special violations {bad}"),
    )
}

fn c3_learnability() -> Outcome {
    let t = Instant::now();
    let docs = ingest(&data_dir().join("toy-corpus.jsonl"), CorpusFormat::Jsonl).unwrap();
    let bytes: usize = docs.iter().map(|d| d.text.len()).sum();
    let vocab = build_vocab(&docs, 400).unwrap();
    let model = Preset::SmallToy.config(vocab.len());
    let cfg = PretrainConfig {
        epochs: 30,
        lr: 2e-3,
        effective_batch: 8,
        micro_batch: 8,
        window_len: 16,
        overlap: 8,
        seed: 1,
        ..Default::default()
    };
    let seqs = pretraining_sequences(&docs, &vocab, cfg.window_len, cfg.overlap).unwrap();
    let mut rng = stream_rng(99, Stream::Mask);
    let rows: Vec<MlmRow> = seqs.iter().map(|s| corrupt_for_mlm(s, vocab.len(), &mut rng, cfg.mask_prob)).collect();
    let init = ModelParameters::<f32>::init(&model, cfg.seed).unwrap();
    let before = mlm_loss(&init, &rows, 64).unwrap();
    let out = pretrain(&docs, &vocab, &model, &cfg, |_| {}).unwrap();
    let after = mlm_loss(&out.checkpoint.params, &rows, 64).unwrap();
    let last_epoch = out.losses.last().unwrap().loss;
    let ln_v = (vocab.len() as f64).ln();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        (before - ln_v).abs() <= 0.05 * ln_v && after < 0.5 * ln_v && secs < 600.0,
        format!(
            "{bytes} bytes, V={}, ln V {ln_v:.3}: initial {before:.3}, final {after:.3} (last epoch {last_epoch:.3}) \
             after {} epochs; {secs:.0}s",
            vocab.len(),
            cfg.epochs
        ),
    )
}

fn c4_pretraining_effect() -> Outcome {
    let t = Instant::now();
    let dir = data_dir().join("benchmark");
    let corpus = ingest(&dir.join("lexicon.jsonl"), CorpusFormat::Jsonl).unwrap();
    let examples = load_dataset(&dir.join("posts.csv"), None).unwrap();
    let mut vocab_docs = corpus.clone();
    vocab_docs.extend(examples.iter().enumerate().map(|(i, e)| RawDocument::new(format!("post{i}"), e.text.clone())));
    let vocab = build_vocab(&vocab_docs, 5000).unwrap();
    let mut model = Preset::SmallToy.config(vocab.len());
    model.dropout_prob = 0.0;
    let mut lines = Vec::new();
    let mut gains = Vec::new();
    for seed in 0..5u64 {
        let pcfg = PretrainConfig {
            epochs: 30,
            lr: 5e-4,
            effective_batch: 8,
            micro_batch: 8,
            window_len: 16,
            overlap: 8,
            seed,
            ..Default::default()
        };
        let pre = pretrain(&corpus, &vocab, &model, &pcfg, |_| {}).unwrap().checkpoint;
        let scratch = Checkpoint::new(ModelParameters::init(&model, seed).unwrap(), vocab.hash());
        let (train, test): (Vec<LabeledExample>, Vec<LabeledExample>) = stratified_split(&examples, 0.2, seed);
        let fcfg = FinetuneConfig {
            epochs: 10,
            batch: 32,
            lr: 3e-4,
            seed,
            positive_class_tag: None,
        };
        let f1 = |ck: &Checkpoint| {
            let tuned = finetune(ck, &vocab, &train, &fcfg, |_| {}).unwrap().checkpoint;
            evaluate(&tuned, &vocab, &test).unwrap().f1
        };
        let (a, b) = (f1(&pre), f1(&scratch));
        lines.push(format!("seed {seed}: {a:.3} vs {b:.3}"));
        gains.push(a - b);
    }
    let wins = gains.iter().filter(|&&g| g > 0.0).count();
    let mean = gains.iter().sum::<f64>() / gains.len() as f64;
    let secs = t.elapsed().as_secs_f64();
    outcome(
        wins >= 4 && mean >= 0.03 && secs < 1200.0,
        format!(
            "pretrained vs random-init test f1: {}; wins {wins}/5, mean gain {mean:.3}; {secs:.0}s",
            lines.join(", ")
        ),
    )
}

fn update_norm_diff<S: curricular::Scalar>(params: &ModelParameters<S>, rows: &[MlmRow]) -> f64 {
    let step = |micro: usize| {
        let mut p = params.clone();
        let (_, grads) = accumulate_mlm(&p, rows, micro, None).unwrap();
        let mut adam = Adam::new(AdamConfig::with_lr(1e-3), p.tensors());
        adam.step(p.tensors_mut(), &grads).unwrap();
        params
            .tensors()
            .iter()
            .zip(p.tensors())
            .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| y.as_f64() - x.as_f64()).collect::<Vec<_>>())
            .collect::<Vec<f64>>()
    };
    let whole = step(32);
    let split = step(8);
    let diff: f64 = whole.iter().zip(&split).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = whole.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / norm
}

fn c5_accumulation() -> Outcome {
    let cfg = ModelConfig {
        vocab_size: 200,
        max_positions: 64,
        dropout_prob: 0.0,
        precision: Precision::F64,
        ..Preset::SmallToy.config(200)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<MlmRow> = (0..32)
        .map(|_| {
            let len = rng.random_range(8..40);
            let mut ids = vec![2];
            ids.extend((0..len).map(|_| rng.random_range(NUM_SPECIALS..200)));
            ids.push(3);
            corrupt_for_mlm(&ids, 200, &mut rng, 0.3)
        })
        .collect();
    let params = ModelParameters::<f64>::init(&cfg, 5).unwrap();
    let rel64 = update_norm_diff(&params, &rows);
    let rel32 = update_norm_diff(&params.cast::<f32>(), &rows);
    outcome(
        rel64 <= 1e-6,
        format!("relative update difference 32 vs 4x8: f64 {rel64:.2e} (<= 1e-6); f32 {rel32:.2e}"),
    )
}

fn c6_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut mismatches = 0;
    for case in 0..1000 {
        let n = rng.random_range(1..300);
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < rng.random::<f64>())).collect();
        let preds: Vec<u8> = match case % 10 {
            0 => vec![1; n],
            1 => vec![0; n],
            _ => (0..n).map(|_| rng.random_range(0..2)).collect(),
        };
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for (p, l) in preds.iter().zip(&labels) {
            match (p, l) {
                (1, 1) => tp += 1,
                (1, 0) => fp += 1,
                (0, 1) => fn_ += 1,
                _ => tn += 1,
            }
        }
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        let r = compute_metrics(&preds, &labels).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        if (r.tp, r.fp, r.fn_, r.tn, r.n) != (tp, fp, fn_, tn, n as u64)
            || !close(r.precision, precision)
            || !close(r.recall, recall)
            || !close(r.f1, f1)
            || !close(r.accuracy, ratio(tp + tn, n as u64))
        {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("1000 vectors (incl. all-positive/all-negative), {mismatches} mismatches"))
}

fn c7_determinism() -> Outcome {
    let docs = ingest(&data_dir().join("toy-corpus.jsonl"), CorpusFormat::Jsonl).unwrap();
    let docs = &docs[..6];
    let vocab = build_vocab(docs, 200).unwrap();
    let model = Preset::SmallToy.config(vocab.len());
    let cfg = PretrainConfig {
        epochs: 2,
        lr: 1e-3,
        effective_batch: 8,
        micro_batch: 4,
        window_len: 32,
        overlap: 8,
        seed: 3,
        ..Default::default()
    };
    let run = || pretrain(docs, &vocab, &model, &cfg, |_| {}).unwrap().checkpoint;
    let (a, b) = (run(), run());
    let bytes_a = a.to_bytes().unwrap();
    let same_runs = bytes_a == b.to_bytes().unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    a.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let resaved = loaded.to_bytes().unwrap() == std::fs::read(&path).unwrap();

    let seqs = pretraining_sequences(docs, &vocab, cfg.window_len, cfg.overlap).unwrap();
    let mut rng = stream_rng(4, Stream::Mask);
    let rows: Vec<MlmRow> = seqs.iter().take(16).map(|s| corrupt_for_mlm(s, vocab.len(), &mut rng, 0.15)).collect();
    let l0 = mlm_loss(&a.params, &rows, 16).unwrap();
    let l1 = mlm_loss(&loaded.params, &rows, 16).unwrap();
    let bitwise = l0.to_bits() == l1.to_bits();
    outcome(
        same_runs && resaved && bitwise,
        format!(
            "identical runs byte-equal {same_runs} ({} bytes); save-load-save byte-equal {resaved}; \
             post-load loss bitwise equal {bitwise} ({l0})",
            bytes_a.len()
        ),
    )
}

fn c8_windows() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut failures, mut full_pairs) = (0, 0);
    for _ in 0..1000 {
        let n = rng.random_range(1..=5000);
        let ids: Vec<usize> = (0..n).map(|_| rng.random_range(0..30_000)).collect();
        let windows = make_windows("d", &ids, 500, 50).unwrap();
        let mut rebuilt = windows[0].ids.clone();
        for pair in windows.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            rebuilt.extend_from_slice(&b.ids[50..]);
            if a.ids.len() == 500 && b.ids.len() == 500 {
                full_pairs += 1;
                if a.ids[450..] != b.ids[..50] || b.start != a.start + 450 {
                    failures += 1;
                }
            }
        }
        if rebuilt != ids || windows.iter().any(|w| w.ids.len() > 500) {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("1000 lengths, {full_pairs} full-window pairs checked, {failures} failures"))
}

fn c9_sizes() -> Outcome {
    let report = size_report(&reference_rows(), REFERENCE_WORDS).unwrap();
    let expected = [("ClinicalBERT", 2378.48), ("BioBERT", 2377.81), ("Psych-Search", 1073.98)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, want) in expected {
        let row = report.iter().find(|r| r.name == name).unwrap();
        let rel = (row.ratio - want).abs() / want;
        pass &= rel < 0.01;
        parts.push(format!("{name} {:.2} ({:.2}% off)", row.ratio, rel * 100.0));
    }
    let own = report.iter().find(|r| r.words == REFERENCE_WORDS).unwrap();
    pass &= own.ratio == 1.0 && !own.flag;
    let mental = report.iter().find(|r| r.name == "MentalBERT").unwrap();
    pass &= mental.flag;
    pass &= report.iter().filter(|r| r.flag).count() == 1;
    parts.push(format!("self {:.2}", own.ratio));
    parts.push(format!("MentalBERT {:.2} flagged {}", mental.ratio, mental.flag));
    outcome(pass, parts.join(", "))
}

fn main() {
    rayon::ThreadPoolBuilder::new().num_threads(1).build_global().unwrap();
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "gradient correctness", c1_gradients),
        (2, "masking statistics", c2_masking),
        (3, "mlm learnability", c3_learnability),
        (4, "pre-training effect", c4_pretraining_effect),
        (5, "accumulation equivalence", c5_accumulation),
        (6, "metrics oracle", c6_metrics),
        (7, "determinism and checkpoint integrity", c7_determinism),
        (8, "window reconstruction", c8_windows),
        (9, "relative-size report", c9_sizes),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut total = Duration::ZERO;
    for (n, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        total += t.elapsed();
        failed += usize::from(!result.pass);
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} ({name}): {verdict} - {}", result.detail);
        std::io::stdout().flush().unwrap();
    }
    println!("acceptance: {failed} failed; {:.0}s total", total.as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
