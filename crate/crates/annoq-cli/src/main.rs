//! `annoq` — command-line front end for the annotation query engine.
//!
//! Subcommands: `gen` (synthesize a corpus), `query` (run one query),
//! `bench` (time the fixed query suite), `validate` (check corpus files),
//! and `stats` (per-set aggregates).
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use annoq::bench::{
    generate, load_ground_truth, report_csv, run_bench, save_ground_truth, standard_suite,
    CorpusSpec, DEFAULT_GENIA_FRACTION, DEFAULT_SENTENCES_PER_DOC, DEFAULT_TOKENS_PER_SENTENCE,
    DEFAULT_VOCABULARY_SIZE,
};
use annoq::exec::{execute, partition, ExecConfig};
use annoq::query::{parse, BindingEnv, QueryResult};
use annoq::storage;

#[derive(Parser)]
#[command(
    name = "annoq",
    version,
    about = "Region-algebra queries over stand-off text annotations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic corpus with om and genia sets.
    Gen {
        /// Number of documents (must be positive).
        #[arg(long)]
        docs: u64,
        /// Random seed; same seed and shape flags give identical bytes.
        #[arg(long)]
        seed: u64,
        /// Mean sentences per document.
        #[arg(long, default_value_t = DEFAULT_SENTENCES_PER_DOC)]
        sentences: u64,
        /// Mean tokens per sentence.
        #[arg(long, default_value_t = DEFAULT_TOKENS_PER_SENTENCE)]
        tokens: u64,
        /// Fraction of documents that also get genia annotations.
        #[arg(long = "genia-fraction", default_value_t = DEFAULT_GENIA_FRACTION)]
        genia_fraction: f64,
        /// Vocabulary size for the Zipf word distribution.
        #[arg(long, default_value_t = DEFAULT_VOCABULARY_SIZE)]
        vocab: u64,
        /// Corpus directory to create.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate one query over a corpus and print the result count.
    Query {
        /// Corpus directory (one subdirectory per annotation set).
        #[arg(long)]
        corpus: PathBuf,
        /// Query text, e.g. 'FilterType(om, "ce:abstract")'.
        #[arg(long)]
        expr: String,
        /// Worker threads (default: ANNOQ_WORKERS or the logical core count).
        #[arg(long)]
        workers: Option<usize>,
        /// Document partitions (default: 4 x workers).
        #[arg(long)]
        partitions: Option<usize>,
        /// Write the result rows to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output encoding for dataset results; anchored results are always
        /// JSON lines of {"anchor": …, "matches": […]}.
        #[arg(long, value_enum, default_value_t = Format::Tsv)]
        format: Format,
    },
    /// Time the fixed query suite over a corpus and write a CSV report.
    Bench {
        #[arg(long)]
        corpus: PathBuf,
        /// Query suite to run.
        #[arg(long, default_value = "standard", value_parser = ["standard"])]
        suite: String,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        partitions: Option<usize>,
        /// Timed repetitions per query; the report keeps the median.
        #[arg(long, default_value_t = 3)]
        reps: u32,
        /// Report file (CSV).
        #[arg(long)]
        out: PathBuf,
    },
    /// Check every record of a corpus; list violations with file and line.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Per-set aggregates: documents, annotations, bytes on disk.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Tsv,
    Jsonl,
}

/// A failed invocation: usage errors exit 2, runtime/data errors exit 1.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn usage(message: impl std::fmt::Display) -> Failure {
        Failure::Usage(message.to_string())
    }

    fn runtime(message: impl std::fmt::Display) -> Failure {
        Failure::Runtime(message.to_string())
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen {
            docs,
            seed,
            sentences,
            tokens,
            genia_fraction,
            vocab,
            out,
        } => cmd_gen(docs, seed, sentences, tokens, genia_fraction, vocab, &out),
        Command::Query {
            corpus,
            expr,
            workers,
            partitions,
            out,
            format,
        } => cmd_query(&corpus, &expr, workers, partitions, out.as_deref(), format),
        Command::Bench {
            corpus,
            suite: _, // only "standard" passes the value parser
            workers,
            partitions,
            reps,
            out,
        } => cmd_bench(&corpus, workers, partitions, reps, &out),
        Command::Validate { corpus } => cmd_validate(&corpus),
        Command::Stats { corpus } => cmd_stats(&corpus),
    }
}

// ---------------------------------------------------------------------------
// Worker and partition resolution
// ---------------------------------------------------------------------------

/// Flag > ANNOQ_WORKERS > logical core count; partitions default to 4x.
fn resolve_config(
    workers: Option<usize>,
    partitions: Option<usize>,
) -> Result<ExecConfig, Failure> {
    let workers = match workers {
        Some(0) => return Err(Failure::usage("--workers must be at least 1")),
        Some(n) => n,
        None => default_workers()?,
    };
    let partitions = match partitions {
        Some(0) => return Err(Failure::usage("--partitions must be at least 1")),
        Some(n) => n,
        None => workers * 4,
    };
    Ok(ExecConfig::new(workers, partitions))
}

fn default_workers() -> Result<usize, Failure> {
    match std::env::var("ANNOQ_WORKERS") {
        Ok(raw) => match raw.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Failure::usage(format!(
                "ANNOQ_WORKERS must be a positive integer, got \"{raw}\""
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism()
            .map(NonZeroUsize::get)
            .unwrap_or(1)),
    }
}

fn load_corpus(path: &Path) -> Result<BindingEnv, Failure> {
    storage::load_corpus(path).map_err(Failure::runtime)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_gen(
    docs: u64,
    seed: u64,
    sentences: u64,
    tokens: u64,
    genia_fraction: f64,
    vocab: u64,
    out: &Path,
) -> Result<(), Failure> {
    let spec = CorpusSpec {
        doc_count: docs,
        sentences_per_doc_mean: sentences,
        tokens_per_sentence_mean: tokens,
        genia_fraction,
        vocabulary_size: vocab,
        seed,
    };
    let (env, truth) = generate(&spec).map_err(Failure::usage)?;
    storage::save_corpus(&env, out).map_err(Failure::runtime)?;
    save_ground_truth(&truth, out)
        .map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
    for (name, dataset) in env.iter() {
        println!(
            "{name}: {} annotations over {} documents",
            dataset.len(),
            dataset.doc_count()
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_query(
    corpus: &Path,
    expr: &str,
    workers: Option<usize>,
    partitions: Option<usize>,
    out: Option<&Path>,
    format: Format,
) -> Result<(), Failure> {
    let query = parse(expr).map_err(Failure::usage)?;
    let cfg = resolve_config(workers, partitions)?;
    let env = load_corpus(corpus)?;
    let store = partition(&env, cfg);
    // Unbound names and misplaced anchor operators are query mistakes, with
    // byte positions in the message, so they share the usage exit code.
    let (result, _metrics) = execute(&query, &store, cfg).map_err(Failure::usage)?;
    if let Some(path) = out {
        let text = render_result(&result, format)?;
        std::fs::write(path, text)
            .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    }
    println!("{}", result.len());
    Ok(())
}

fn render_result(result: &QueryResult, format: Format) -> Result<String, Failure> {
    match result {
        QueryResult::Dataset(dataset) => match format {
            Format::Tsv => Ok(storage::to_tsv(dataset)),
            Format::Jsonl => {
                let mut text = String::new();
                for record in dataset.iter() {
                    let line = serde_json::to_string(record)
                        .map_err(|e| Failure::runtime(format!("encoding record: {e}")))?;
                    text.push_str(&line);
                    text.push('\n');
                }
                Ok(text)
            }
        },
        QueryResult::Anchored(anchored) => {
            let mut text = String::new();
            for entry in anchored {
                let line = serde_json::to_string(entry)
                    .map_err(|e| Failure::runtime(format!("encoding result: {e}")))?;
                text.push_str(&line);
                text.push('\n');
            }
            Ok(text)
        }
    }
}

fn cmd_bench(
    corpus: &Path,
    workers: Option<usize>,
    partitions: Option<usize>,
    reps: u32,
    out: &Path,
) -> Result<(), Failure> {
    if reps == 0 {
        return Err(Failure::usage("--reps must be at least 1"));
    }
    let cfg = resolve_config(workers, partitions)?;
    let env = load_corpus(corpus)?;
    let suite = standard_suite();
    let report = run_bench(&suite, &env, cfg, reps);
    std::fs::write(out, report_csv(&report))
        .map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;

    println!(
        "workers={} partitions={} reps={} (partition skew max/mean {:.2})",
        report.workers, report.partitions, report.reps, report.skew.max_mean_ratio
    );
    for entry in &report.entries {
        println!(
            "{:<32} median {:>9.3} ms  count {:>9}",
            entry.name,
            entry.median.as_secs_f64() * 1000.0,
            entry.count
        );
    }
    println!("wrote {}", out.display());
    match &report.error {
        None => Ok(()),
        Some(message) => Err(Failure::runtime(format!(
            "bench aborted, report marked invalid: {message}"
        ))),
    }
}

fn cmd_validate(corpus: &Path) -> Result<(), Failure> {
    let issues = storage::validate_corpus(corpus).map_err(Failure::runtime)?;
    if issues.is_empty() {
        println!("ok");
        return Ok(());
    }
    let mut listing = String::new();
    for issue in &issues {
        writeln!(listing, "{issue}").expect("write to String");
    }
    print!("{listing}");
    Err(Failure::runtime(format!(
        "{} violation(s) in {}",
        issues.len(),
        corpus.display()
    )))
}

fn cmd_stats(corpus: &Path) -> Result<(), Failure> {
    let env = load_corpus(corpus)?;
    println!("{:<12} {:>10} {:>14} {:>14}", "set", "docs", "annotations", "bytes");
    let mut all_docs: BTreeSet<String> = BTreeSet::new();
    let (mut total_annotations, mut total_bytes) = (0u64, 0u64);
    for (name, dataset) in env.iter() {
        let bytes = set_bytes(corpus, name)?;
        println!(
            "{name:<12} {:>10} {:>14} {bytes:>14}",
            dataset.doc_count(),
            dataset.len()
        );
        for record in dataset.iter() {
            all_docs.insert(record.doc_id.clone());
        }
        total_annotations += dataset.len() as u64;
        total_bytes += bytes;
    }
    println!(
        "{:<12} {:>10} {total_annotations:>14} {total_bytes:>14}",
        "total",
        all_docs.len()
    );
    // Cross-check against the generator manifest when one is present.
    if let Ok(truth) = load_ground_truth(corpus) {
        let manifest_total = truth.total();
        if manifest_total != total_annotations {
            return Err(Failure::runtime(format!(
                "corpus has {total_annotations} annotations but the manifest records {manifest_total}"
            )));
        }
        println!("manifest: {manifest_total} annotations confirmed");
    }
    Ok(())
}

/// Total size of the set's TSV files on disk.
fn set_bytes(corpus: &Path, set: &str) -> Result<u64, Failure> {
    let dir = corpus.join(set);
    let entries = std::fs::read_dir(&dir)
        .map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
    let mut bytes = 0;
    for entry in entries {
        let entry = entry.map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
        let path = entry.path();
        if path.extension().is_some_and(|ext| ext == "tsv") {
            let meta = std::fs::metadata(&path)
                .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
            bytes += meta.len();
        }
    }
    Ok(bytes)
}
