//! Deterministic synthetic corpus generator and benchmark harness.
//!
//! [`generate`] builds two annotation sets over imaginary documents:
//!
//! - `om` (original markup): one `ce:abstract` covering the first ⌈20%⌉ of
//!   sentences, `ce:para` regions over consecutive sentence runs, and one
//!   `ce:sentence` per sentence.
//! - `genia` (NLP output), on a random subset of documents: `sentence`
//!   regions co-extensive with the om sentences, one `word` per token with
//!   an `orig` property drawn Zipf(s = 1.1) over a synthetic vocabulary, and
//!   one `NP` and one `VP` span of 1–3 consecutive tokens per sentence.
//!
//! Document text is never materialized; offsets assume each token occupies
//! as many characters as its `orig` word, tokens separated by one space and
//! sentences by `". "`. Sentence regions span first token start to last
//! token end.
//!
//! All randomness comes from one splitmix64 stream seeded by the spec, with
//! a fixed draw order per document (membership, sentence count, per-sentence
//! token counts and word draws, paragraph run lengths, then per-sentence
//! NP/VP positions), so a spec identifies a corpus byte-for-byte.
//!
//! Generation also emits a [`GroundTruth`] of exact counts — verified
//! against the datasets before returning — which benchmark consumers use as
//! an oracle. [`run_bench`] times a query suite with repeated runs and
//! median aggregation, and [`report_csv`] renders the machine-readable
//! report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use crate::exec::{execute, partition, skew, ExecConfig, SkewReport};
use crate::model::{canonical_cmp, Annotation, AnnotationDataset};
use crate::query::{parse, BindingEnv};

/// The `orig` values whose exact counts the ground truth records.
pub const MARKER_WORDS: [&str; 3] = ["the", "heart", "adrenocortical"];

/// File name of the ground-truth manifest at the corpus root.
pub const MANIFEST_FILE: &str = "ground-truth.tsv";

// ---------------------------------------------------------------------------
// Random stream
// ---------------------------------------------------------------------------

/// splitmix64: state advances by 0x9E3779B97F4A7C15 per draw, standard
/// finalizer. Chosen so an independent implementation can reproduce the
/// exact corpus from the seed.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1), 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `lo..=hi`.
    pub fn range(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        lo + self.next_u64() % (hi - lo + 1)
    }
}

// ---------------------------------------------------------------------------
// Corpus specification
// ---------------------------------------------------------------------------

/// Shape parameters of a synthetic corpus. Sentence and token counts are
/// drawn uniformly from `1..=2·mean−1`, so the stated means are exact
/// expectations.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub doc_count: u64,
    pub sentences_per_doc_mean: u64,
    pub tokens_per_sentence_mean: u64,
    /// Fraction of documents that also receive genia annotations.
    pub genia_fraction: f64,
    pub vocabulary_size: u64,
    pub seed: u64,
}

pub const DEFAULT_SENTENCES_PER_DOC: u64 = 20;
pub const DEFAULT_TOKENS_PER_SENTENCE: u64 = 12;
pub const DEFAULT_GENIA_FRACTION: f64 = 0.9;
pub const DEFAULT_VOCABULARY_SIZE: u64 = 5000;

/// The vocabulary must be able to place all its marker words: rank 1, ten
/// "he"-prefixed ranks up to 50, and "adrenocortical" in the bottom decile
/// strictly below the named ranks.
pub const MIN_VOCABULARY_SIZE: u64 = 56;

impl CorpusSpec {
    pub fn new(doc_count: u64, seed: u64) -> Self {
        CorpusSpec {
            doc_count,
            sentences_per_doc_mean: DEFAULT_SENTENCES_PER_DOC,
            tokens_per_sentence_mean: DEFAULT_TOKENS_PER_SENTENCE,
            genia_fraction: DEFAULT_GENIA_FRACTION,
            vocabulary_size: DEFAULT_VOCABULARY_SIZE,
            seed,
        }
    }

    fn validate(&self) -> Result<(), SpecError> {
        if self.doc_count == 0 {
            return Err(SpecError("docCount must be positive".into()));
        }
        if self.sentences_per_doc_mean == 0 {
            return Err(SpecError("sentencesPerDocMean must be positive".into()));
        }
        if self.tokens_per_sentence_mean == 0 {
            return Err(SpecError("tokensPerSentenceMean must be positive".into()));
        }
        if !(self.genia_fraction >= 0.0 && self.genia_fraction <= 1.0) {
            return Err(SpecError(format!(
                "geniaFraction must lie in [0, 1], got {}",
                self.genia_fraction
            )));
        }
        if self.vocabulary_size < MIN_VOCABULARY_SIZE {
            return Err(SpecError(format!(
                "vocabularySize must be at least {MIN_VOCABULARY_SIZE} to hold the marker words, got {}",
                self.vocabulary_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid corpus spec: {0}")]
pub struct SpecError(pub String);

// ---------------------------------------------------------------------------
// Vocabulary and word distribution
// ---------------------------------------------------------------------------

/// "he"-prefixed words pinned to ranks 2–50, "heart" mid-pack at rank 40.
const HE_WORDS: [(usize, &str); 11] = [
    (2, "head"),
    (7, "heavy"),
    (12, "hence"),
    (17, "hello"),
    (22, "heat"),
    (27, "heal"),
    (32, "helium"),
    (37, "herd"),
    (40, "heart"),
    (44, "hedge"),
    (48, "helmet"),
];

/// Rank-ordered vocabulary: rank 1 is "the", ranks 2–50 carry eleven
/// "he"-prefixed words including "heart" at rank 40, "adrenocortical" sits
/// at rank ⌈0.95·size⌉ (bottom decile), and every other rank r is the
/// filler word `w<r>`. Token width equals word length, so the choice of
/// word also fixes the offsets around it.
pub fn build_vocabulary(size: u64) -> Vec<String> {
    assert!(size >= MIN_VOCABULARY_SIZE);
    let mut vocab: Vec<String> = (1..=size).map(|rank| format!("w{rank}")).collect();
    vocab[0] = "the".to_string();
    for (rank, word) in HE_WORDS {
        vocab[rank - 1] = word.to_string();
    }
    let adreno_rank = (0.95 * size as f64).ceil() as usize;
    vocab[adreno_rank - 1] = "adrenocortical".to_string();
    vocab
}

/// Inverse-CDF sampler for Zipf(s) over ranks 1..=n: one uniform draw maps
/// through the precomputed cumulative rank weights to a 0-based rank index.
struct ZipfTable {
    cumulative: Vec<f64>,
}

impl ZipfTable {
    fn new(n: usize, s: f64) -> Self {
        let mut cumulative = Vec::with_capacity(n);
        let mut total = 0.0;
        for rank in 1..=n {
            total += 1.0 / (rank as f64).powf(s);
            cumulative.push(total);
        }
        for value in &mut cumulative {
            *value /= total;
        }
        // Guard the top end against rounding: a draw of 0.999… must land on
        // the last rank, never past it.
        *cumulative.last_mut().expect("n >= 1") = 1.0;
        ZipfTable { cumulative }
    }

    fn draw(&self, rng: &mut SplitMix64) -> usize {
        let u = rng.next_f64();
        self.cumulative.partition_point(|&c| c <= u)
    }
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

/// Exact counts recorded while generating a corpus, used as an oracle for
/// benchmark results and corpus reloads.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruth {
    /// Annotation count per (annotSet, annotType).
    pub set_type_counts: BTreeMap<(String, String), u64>,
    /// genia `word` count per marker `orig` value (see [`MARKER_WORDS`]).
    pub marker_counts: BTreeMap<String, u64>,
    /// Documents carrying at least one annotation, per set.
    pub doc_counts: BTreeMap<String, u64>,
}

impl GroundTruth {
    pub fn total(&self) -> u64 {
        self.set_type_counts.values().sum()
    }

    pub fn count(&self, set: &str, ty: &str) -> u64 {
        self.set_type_counts
            .get(&(set.to_string(), ty.to_string()))
            .copied()
            .unwrap_or(0)
    }
}

/// Serializes the ground truth as a small TSV manifest:
/// `kind <TAB> key1 <TAB> key2 <TAB> count` with kinds `docs`, `marker`,
/// and `settype`.
pub fn ground_truth_to_tsv(truth: &GroundTruth) -> String {
    let mut out = String::new();
    for (set, count) in &truth.doc_counts {
        writeln!(out, "docs\t{set}\t\t{count}").expect("write to String");
    }
    for (word, count) in &truth.marker_counts {
        writeln!(out, "marker\t{word}\t\t{count}").expect("write to String");
    }
    for ((set, ty), count) in &truth.set_type_counts {
        writeln!(out, "settype\t{set}\t{ty}\t{count}").expect("write to String");
    }
    out
}

pub fn ground_truth_from_tsv(text: &str) -> Result<GroundTruth, String> {
    let mut truth = GroundTruth::default();
    for (number, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(format!("manifest line {}: expected 4 fields", number + 1));
        }
        let count: u64 = fields[3]
            .parse()
            .map_err(|_| format!("manifest line {}: bad count \"{}\"", number + 1, fields[3]))?;
        match fields[0] {
            "docs" => {
                truth.doc_counts.insert(fields[1].to_string(), count);
            }
            "marker" => {
                truth.marker_counts.insert(fields[1].to_string(), count);
            }
            "settype" => {
                truth
                    .set_type_counts
                    .insert((fields[1].to_string(), fields[2].to_string()), count);
            }
            other => {
                return Err(format!("manifest line {}: unknown kind \"{other}\"", number + 1));
            }
        }
    }
    Ok(truth)
}

/// Writes the manifest to `<corpus root>/ground-truth.tsv`.
pub fn save_ground_truth(truth: &GroundTruth, root: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(root.as_ref().join(MANIFEST_FILE), ground_truth_to_tsv(truth))
}

pub fn load_ground_truth(root: impl AsRef<Path>) -> Result<GroundTruth, String> {
    let path = root.as_ref().join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    ground_truth_from_tsv(&text)
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct TokenSpan {
    start: u64,
    end: u64,
    rank: usize,
}

struct SentenceSpan {
    start: u64,
    end: u64,
    tokens: Vec<TokenSpan>,
}

/// Generates the `om` and `genia` datasets plus their ground truth. The
/// result is a pure function of the spec; the ground truth is re-verified
/// against the datasets before returning.
pub fn generate(spec: &CorpusSpec) -> Result<(BindingEnv, GroundTruth), SpecError> {
    spec.validate()?;
    let vocabulary = build_vocabulary(spec.vocabulary_size);
    let zipf = ZipfTable::new(vocabulary.len(), 1.1);
    let mut rng = SplitMix64::new(spec.seed);

    let mut om_records: Vec<Annotation> = Vec::new();
    let mut genia_records: Vec<Annotation> = Vec::new();
    let mut truth = GroundTruth::default();
    for word in MARKER_WORDS {
        truth.marker_counts.insert(word.to_string(), 0);
    }
    let mut genia_doc_count = 0u64;

    for d in 0..spec.doc_count {
        let doc_id = format!("doc{d:06}");
        let is_genia = rng.next_f64() < spec.genia_fraction;
        let sentence_count = rng.range(1, 2 * spec.sentences_per_doc_mean - 1);

        // Lay out sentences and tokens left to right.
        let mut sentences: Vec<SentenceSpan> = Vec::with_capacity(sentence_count as usize);
        let mut cursor = 0u64;
        for s in 0..sentence_count {
            if s > 0 {
                cursor += 2; // ". " between sentences
            }
            let token_count = rng.range(1, 2 * spec.tokens_per_sentence_mean - 1);
            let mut tokens = Vec::with_capacity(token_count as usize);
            for t in 0..token_count {
                if t > 0 {
                    cursor += 1; // single space between tokens
                }
                let rank = zipf.draw(&mut rng);
                let start = cursor;
                cursor += vocabulary[rank].len() as u64;
                tokens.push(TokenSpan {
                    start,
                    end: cursor,
                    rank,
                });
            }
            sentences.push(SentenceSpan {
                start: tokens[0].start,
                end: cursor,
                tokens,
            });
        }

        // Paragraphs: consecutive sentence runs of drawn length 1..=4; the
        // final run truncates at the document end.
        let mut paragraphs: Vec<(usize, usize)> = Vec::new();
        let mut next = 0usize;
        while next < sentences.len() {
            let len = rng.range(1, 4) as usize;
            let last = (next + len).min(sentences.len()) - 1;
            paragraphs.push((next, last));
            next = last + 1;
        }

        // om records for this document.
        let mut doc_om: Vec<Annotation> = Vec::new();
        let abstract_sentences = (sentence_count as usize).div_ceil(5); // ⌈20%⌉
        doc_om.push(Annotation::new(
            &doc_id,
            "om",
            "ce:abstract",
            sentences[0].start,
            sentences[abstract_sentences - 1].end,
            0,
        ));
        for &(first, last) in &paragraphs {
            doc_om.push(Annotation::new(
                &doc_id,
                "om",
                "ce:para",
                sentences[first].start,
                sentences[last].end,
                0,
            ));
        }
        for sentence in &sentences {
            doc_om.push(Annotation::new(
                &doc_id,
                "om",
                "ce:sentence",
                sentence.start,
                sentence.end,
                0,
            ));
        }
        assign_ids(&mut doc_om);
        record_counts(&mut truth, &doc_om);
        om_records.extend(doc_om);

        // genia records, for member documents only.
        if is_genia {
            genia_doc_count += 1;
            let mut doc_genia: Vec<Annotation> = Vec::new();
            for sentence in &sentences {
                doc_genia.push(Annotation::new(
                    &doc_id,
                    "genia",
                    "sentence",
                    sentence.start,
                    sentence.end,
                    0,
                ));
                for token in &sentence.tokens {
                    let word = &vocabulary[token.rank];
                    doc_genia.push(
                        Annotation::new(&doc_id, "genia", "word", token.start, token.end, 0)
                            .with_property("orig", word),
                    );
                    if let Some(count) = truth.marker_counts.get_mut(word.as_str()) {
                        *count += 1;
                    }
                }
            }
            for sentence in &sentences {
                for phrase in ["NP", "VP"] {
                    let tokens = &sentence.tokens;
                    let len = rng.range(1, tokens.len().min(3) as u64) as usize;
                    let first = rng.range(0, (tokens.len() - len) as u64) as usize;
                    doc_genia.push(Annotation::new(
                        &doc_id,
                        "genia",
                        phrase,
                        tokens[first].start,
                        tokens[first + len - 1].end,
                        0,
                    ));
                }
            }
            assign_ids(&mut doc_genia);
            record_counts(&mut truth, &doc_genia);
            genia_records.extend(doc_genia);
        }
    }

    truth.doc_counts.insert("om".to_string(), spec.doc_count);
    truth.doc_counts.insert("genia".to_string(), genia_doc_count);

    let om = AnnotationDataset::from_records(om_records)
        .expect("generated om records satisfy the model invariants");
    let genia = AnnotationDataset::from_records(genia_records)
        .expect("generated genia records satisfy the model invariants");
    let mut env = BindingEnv::new();
    env.bind("om", om);
    env.bind("genia", genia);

    verify_ground_truth(&env, &truth);
    Ok((env, truth))
}

/// Orders one document's records of one set canonically and numbers them
/// 1..=n. Ids are 0 while sorting; the sort is stable, so records that tie
/// on every other key keep their construction order.
fn assign_ids(records: &mut [Annotation]) {
    records.sort_by(canonical_cmp);
    for (index, record) in records.iter_mut().enumerate() {
        record.annot_id = index as u64 + 1;
    }
}

fn record_counts(truth: &mut GroundTruth, records: &[Annotation]) {
    for record in records {
        *truth
            .set_type_counts
            .entry((record.annot_set.clone(), record.annot_type.clone()))
            .or_insert(0) += 1;
    }
}

/// Cross-checks the recorded counts against the finished datasets; a
/// mismatch is a generator bug, not an input condition.
fn verify_ground_truth(env: &BindingEnv, truth: &GroundTruth) {
    let mut set_type: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut markers: BTreeMap<String, u64> = MARKER_WORDS
        .iter()
        .map(|w| (w.to_string(), 0u64))
        .collect();
    for (_, dataset) in env.iter() {
        for record in dataset.iter() {
            *set_type
                .entry((record.annot_set.clone(), record.annot_type.clone()))
                .or_insert(0) += 1;
            if record.annot_type == "word" {
                if let Some(orig) = record.property("orig") {
                    if let Some(count) = markers.get_mut(orig) {
                        *count += 1;
                    }
                }
            }
        }
    }
    assert_eq!(set_type, truth.set_type_counts, "set/type counts drifted");
    assert_eq!(markers, truth.marker_counts, "marker counts drifted");
}

// ---------------------------------------------------------------------------
// Query suite
// ---------------------------------------------------------------------------

/// A named benchmark query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteQuery {
    pub name: &'static str,
    pub text: &'static str,
}

/// The fixed benchmark suite: filters across rare/common types, property
/// values, and regexes, plus the containment compositions, over the `om`
/// and `genia` bindings.
pub fn standard_suite() -> Vec<SuiteQuery> {
    vec![
        SuiteQuery {
            name: "OM Type Common",
            text: r#"FilterType(om, "ce:abstract")"#,
        },
        SuiteQuery {
            name: "Genia Type Common",
            text: r#"FilterType(genia, "sentence")"#,
        },
        SuiteQuery {
            name: "Genia Type Very Common",
            text: r#"FilterType(genia, "word")"#,
        },
        SuiteQuery {
            name: "Genia Attribute Very Common",
            text: r#"FilterProperty(genia, "orig", "the")"#,
        },
        SuiteQuery {
            name: "Genia Attribute Typical",
            text: r#"FilterProperty(genia, "orig", "heart")"#,
        },
        SuiteQuery {
            name: "Genia Attribute Rare",
            text: r#"FilterProperty(genia, "orig", "adrenocortical")"#,
        },
        SuiteQuery {
            name: "Genia Attribute Regex Common",
            text: r#"RegexProperty(genia, "orig", "^he*")"#,
        },
        SuiteQuery {
            name: "Genia Attribute Regex Rare",
            text: r#"RegexProperty(genia, "orig", "^adrenoc*")"#,
        },
        SuiteQuery {
            name: "Sentence over Heart",
            text: r#"Contains(FilterType(om, "ce:sentence"), FilterProperty(genia, "orig", "heart"))"#,
        },
        SuiteQuery {
            name: "Heart in Sentence",
            text: r#"ContainedIn(FilterProperty(genia, "orig", "heart"), FilterType(genia, "sentence"))"#,
        },
        SuiteQuery {
            name: "Sentence in Abstract",
            text: r#"ContainedIn(FilterType(genia, "sentence"), FilterType(om, "ce:abstract"))"#,
        },
        SuiteQuery {
            name: "Heart in Sentence in Abstract",
            text: r#"ContainedIn(FilterProperty(genia, "orig", "heart"), ContainedIn(FilterType(om, "ce:sentence"), FilterType(om, "ce:abstract")))"#,
        },
    ]
}

// ---------------------------------------------------------------------------
// Benchmark runner
// ---------------------------------------------------------------------------

/// Timing record for one benchmark query.
#[derive(Debug, Clone)]
pub struct QueryTiming {
    pub name: String,
    /// Wall time of each repetition, in execution order.
    pub runs: Vec<Duration>,
    /// Middle of the sorted run times; mean of the two middles when even.
    pub median: Duration,
    /// Result rows, identical across repetitions.
    pub count: u64,
}

/// Results of one benchmark invocation. `error` is set when a query failed;
/// the entries up to that point remain valid, and the report as a whole is
/// flagged invalid.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub entries: Vec<QueryTiming>,
    pub reps: u32,
    pub workers: usize,
    pub partitions: usize,
    pub skew: SkewReport,
    pub error: Option<String>,
}

impl BenchReport {
    pub fn is_valid(&self) -> bool {
        self.error.is_none()
    }
}

fn median_duration(runs: &[Duration]) -> Duration {
    let mut sorted = runs.to_vec();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2
    }
}

/// Times each suite query `reps` times over the partitioned corpus and
/// aggregates medians. The corpus is partitioned once, outside the timed
/// region, so the timings cover pure query execution. Each run materializes
/// the result and records its row count; any query failure stops the run
/// and flags the report invalid.
pub fn run_bench(
    suite: &[SuiteQuery],
    env: &BindingEnv,
    cfg: ExecConfig,
    reps: u32,
) -> BenchReport {
    assert!(reps >= 1, "reps must be at least 1");
    let store = partition(env, cfg);
    let mut report = BenchReport {
        entries: Vec::with_capacity(suite.len()),
        reps,
        workers: cfg.workers,
        partitions: cfg.partitions,
        skew: skew(&store),
        error: None,
    };
    for query in suite {
        let expr = match parse(query.text) {
            Ok(expr) => expr,
            Err(error) => {
                report.error = Some(format!("{}: {error}", query.name));
                return report;
            }
        };
        let mut runs = Vec::with_capacity(reps as usize);
        let mut count: Option<u64> = None;
        for _ in 0..reps {
            match execute(&expr, &store, cfg) {
                Ok((result, metrics)) => {
                    runs.push(metrics.wall);
                    let rows = result.len() as u64;
                    assert_eq!(
                        *count.get_or_insert(rows),
                        rows,
                        "result count changed between repetitions"
                    );
                }
                Err(error) => {
                    report.error = Some(format!("{}: {error}", query.name));
                    return report;
                }
            }
        }
        report.entries.push(QueryTiming {
            name: query.name.to_string(),
            median: median_duration(&runs),
            runs,
            count: count.unwrap_or(0),
        });
    }
    report
}

/// Renders a report as CSV: header
/// `query,reps,median_ms,count,workers,partitions`, one row per query in
/// suite order. An invalid report gains a trailing `# invalid: …` marker
/// line.
pub fn report_csv(report: &BenchReport) -> String {
    let mut out = String::from("query,reps,median_ms,count,workers,partitions\n");
    for entry in &report.entries {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            entry.name,
            report.reps,
            entry.median.as_secs_f64() * 1000.0,
            entry.count,
            report.workers,
            report.partitions
        )
        .expect("write to String");
    }
    if let Some(error) = &report.error {
        writeln!(out, "# invalid: {error}").expect("write to String");
    }
    out
}
