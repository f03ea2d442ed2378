use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use curricular::config::{load_config, Overrides, RunConfig};
use curricular::corpus::{corpus_stats, ingest, CorpusFormat};
use curricular::eval::{
    evaluate, load_dataset, reference_rows, render_prompt, score_responses, size_report, PromptBundle,
    RecordedResponse, SizeRow, REFERENCE_WORDS,
};
use curricular::model::{predict_batch, Preset};
use curricular::tokenizer::{build_vocab, Vocabulary};
use curricular::train::{finetune, pretrain, write_loss_log, Checkpoint, EpochLoss};

#[derive(Parser, Debug)]
#[command(name = "curricular", version, about = "Small-scale masked-LM pre-training and classification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Word, sentence and document counts as JSON.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Induce a WordPiece vocabulary.
    BuildVocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Masked-LM pre-training from a fresh initialization.
    Pretrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Fine-tune a checkpoint as a binary classifier.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Held-out set scored after training.
        #[arg(long)]
        val: Option<PathBuf>,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Score a fine-tuned checkpoint on a labeled set.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        positive_tag: Option<String>,
    },
    /// Classify one text or every line of a file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, conflicts_with = "input", required_unless_present = "input")]
        text: Option<String>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Print a one-shot yes/no prompt with the shot drawn from the training set.
    RenderPrompt {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long)]
        disorder: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        positive_tag: Option<String>,
    },
    /// Corpus sizes relative to a reference word count.
    ReportSizes {
        /// JSON array of {name, words, reported_ratio?}; built-in rows when omitted.
        #[arg(long)]
        rows: Option<PathBuf>,
        #[arg(long, default_value_t = REFERENCE_WORDS)]
        ours: u64,
    },
    /// Score recorded model responses ({"response", "label"} per line).
    ScoreResponses {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

/// Training flags; each overrides the config file.
#[derive(Args, Debug, Default)]
struct Knobs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    mask_prob: Option<f64>,
    #[arg(long)]
    window_len: Option<usize>,
    #[arg(long)]
    overlap: Option<usize>,
    #[arg(long)]
    effective_batch: Option<usize>,
    #[arg(long)]
    micro_batch: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    positive_tag: Option<String>,
}

impl Knobs {
    fn resolve(&self, pretraining: bool) -> Result<RunConfig> {
        let epochs = |p: bool| if p == pretraining { self.epochs } else { None };
        let o = Overrides {
            mask_prob: self.mask_prob,
            window_len: self.window_len,
            overlap: self.overlap,
            lr: self.lr,
            effective_batch: self.effective_batch,
            micro_batch: self.micro_batch,
            pretrain_epochs: epochs(true),
            finetune_epochs: epochs(false),
            finetune_batch: self.batch,
            seed: self.seed,
            preset: self.preset,
            dropout_prob: self.dropout,
            positive_class_tag: self.positive_tag.clone(),
        };
        Ok(load_config(self.config.as_deref(), &o)?)
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    argv: Vec<String>,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: BTreeMap<&'a str, &'a Path>,
    outputs: BTreeMap<&'a str, PathBuf>,
    tool_version: &'static str,
}

impl RunManifest<'_> {
    fn write_next_to(&self, output: &Path) -> Result<()> {
        let path = sibling(output, "manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

fn manifest<'a>(
    subcommand: &'a str,
    config: impl Serialize,
    seed: Option<u64>,
    inputs: &[(&'a str, &'a Path)],
    outputs: &[(&'a str, PathBuf)],
) -> Result<RunManifest<'a>> {
    Ok(RunManifest {
        subcommand,
        argv: std::env::args().collect(),
        config: serde_json::to_value(config)?,
        seed,
        inputs: inputs.iter().copied().collect(),
        outputs: outputs.iter().cloned().collect(),
        tool_version: env!("CARGO_PKG_VERSION"),
    })
}

/// `out.ext` becomes `out.ext.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_vocab_for(checkpoint: &Checkpoint, vocab_path: &Path) -> Result<Vocabulary> {
    let vocab = Vocabulary::load(vocab_path)?;
    let hash = vocab.hash();
    if hash != checkpoint.vocab_hash {
        return Err(curricular::Error::VocabMismatch {
            checkpoint: checkpoint.vocab_hash.clone(),
            tokenizer: hash,
        }
        .into());
    }
    Ok(vocab)
}

fn log_epoch(stage: &str) -> impl FnMut(&EpochLoss) + '_ {
    move |e| eprintln!("{stage} epoch {} loss {:.4}", e.epoch, e.loss)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("CASE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("CASE_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Stats { corpus } => {
            let docs = ingest(&corpus, CorpusFormat::detect(&corpus))?;
            print_json(&corpus_stats(&docs))?;
        }
        Command::BuildVocab { corpus, vocab_size, out } => {
            let docs = ingest(&corpus, CorpusFormat::detect(&corpus))?;
            let vocab = build_vocab(&docs, vocab_size)?;
            vocab.save(&out)?;
            eprintln!("wrote {} tokens to {}", vocab.len(), out.display());
            manifest(
                "build-vocab",
                serde_json::json!({ "vocab_size": vocab_size, "built_size": vocab.len(), "hash": vocab.hash() }),
                None,
                &[("corpus", &corpus)],
                &[("vocab", out.clone())],
            )?
            .write_next_to(&out)?;
        }
        Command::Pretrain { corpus, vocab, out, knobs } => {
            let cfg = knobs.resolve(true)?;
            let docs = ingest(&corpus, CorpusFormat::detect(&corpus))?;
            let voc = Vocabulary::load(&vocab)?;
            let model = cfg.model_config(voc.len());
            let result = pretrain(&docs, &voc, &model, &cfg.pretrain_config(), log_epoch("pretrain"))?;
            result.checkpoint.save(&out)?;
            let log = sibling(&out, "loss.jsonl");
            write_loss_log(&log, &result.losses)?;
            manifest(
                "pretrain",
                serde_json::json!({ "run": cfg, "model": model }),
                Some(cfg.seed),
                &[("corpus", &corpus), ("vocab", &vocab)],
                &[("checkpoint", out.clone()), ("loss_log", log)],
            )?
            .write_next_to(&out)?;
        }
        Command::Finetune {
            checkpoint,
            vocab,
            train,
            out,
            val,
            knobs,
        } => {
            let cfg = knobs.resolve(false)?;
            let ck = Checkpoint::load(&checkpoint)?;
            let voc = load_vocab_for(&ck, &vocab)?;
            let tag = cfg.positive_class_tag.as_deref();
            let train_set = load_dataset(&train, tag)?;
            let result = finetune(&ck, &voc, &train_set, &cfg.finetune_config(), log_epoch("finetune"))?;
            result.checkpoint.save(&out)?;
            let log = sibling(&out, "loss.jsonl");
            write_loss_log(&log, &result.losses)?;
            let mut outputs = vec![("checkpoint", out.clone()), ("loss_log", log)];
            if let Some(val) = &val {
                let report = evaluate(&result.checkpoint, &voc, &load_dataset(val, tag)?)?;
                let path = sibling(&out, "val.json");
                std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
                eprintln!("validation f1 {:.4}", report.f1);
                outputs.push(("val_report", path));
            }
            let mut inputs = vec![("checkpoint", checkpoint.as_path()), ("vocab", &vocab), ("train", &train)];
            if let Some(v) = &val {
                inputs.push(("val", v));
            }
            manifest("finetune", &cfg, Some(cfg.seed), &inputs, &outputs)?.write_next_to(&out)?;
        }
        Command::Evaluate {
            checkpoint,
            vocab,
            test,
            report,
            positive_tag,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let voc = load_vocab_for(&ck, &vocab)?;
            let test_set = load_dataset(&test, positive_tag.as_deref())?;
            let result = evaluate(&ck, &voc, &test_set)?;
            std::fs::write(&report, serde_json::to_string_pretty(&result)? + "\n")
                .with_context(|| format!("writing {}", report.display()))?;
            print_json(&result)?;
            manifest(
                "evaluate",
                serde_json::json!({ "positive_tag": positive_tag }),
                None,
                &[("checkpoint", &checkpoint), ("vocab", &vocab), ("test", &test)],
                &[("report", report.clone())],
            )?
            .write_next_to(&report)?;
        }
        Command::Predict {
            checkpoint,
            vocab,
            text,
            input,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let voc = load_vocab_for(&ck, &vocab)?;
            let texts: Vec<String> = match (text, input) {
                (Some(t), _) => vec![t],
                (None, Some(p)) => {
                    let f = std::fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?;
                    std::io::BufReader::new(f)
                        .lines()
                        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
                        .collect::<std::io::Result<_>>()?
                }
                (None, None) => bail!("one of --text or --input is required"),
            };
            let mut out = std::io::stdout().lock();
            for t in &texts {
                if curricular::corpus::normalize(t).is_empty() {
                    return Err(curricular::Error::EmptyText.into());
                }
                let ids = voc.encode(t, true);
                let p = predict_batch(&ck.params, &[ids])?[0];
                serde_json::to_writer(&mut out, &p)?;
                writeln!(out)?;
            }
        }
        Command::RenderPrompt {
            train,
            query,
            disorder,
            seed,
            positive_tag,
        } => {
            let train_set = load_dataset(&train, positive_tag.as_deref())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bundle = PromptBundle::one_shot(&train_set, &query, &disorder, &mut rng)?;
            print!("{}", render_prompt(&bundle));
        }
        Command::ReportSizes { rows, ours } => {
            let rows: Vec<SizeRow> = match rows {
                Some(p) => serde_json::from_str(
                    &std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                )
                .with_context(|| format!("parsing {}", p.display()))?,
                None => reference_rows(),
            };
            let report = size_report(&rows, ours)?;
            for r in report.iter().filter(|r| r.flag) {
                if let Some(rep) = r.reported_ratio {
                    eprintln!("warning: {} reported {rep}x but {} / {ours} = {:.2}x", r.name, r.words, r.ratio);
                }
            }
            print_json(&report)?;
        }
        Command::ScoreResponses { responses, report } => {
            let text = std::fs::read_to_string(&responses).with_context(|| format!("reading {}", responses.display()))?;
            let records = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    serde_json::from_str::<RecordedResponse>(l)
                        .with_context(|| format!("{}: line {}", responses.display(), i + 1))
                })
                .collect::<Result<Vec<_>>>()?;
            let result = score_responses(&records)?;
            if let Some(p) = &report {
                std::fs::write(p, serde_json::to_string_pretty(&result)? + "\n")?;
            }
            print_json(&result)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
