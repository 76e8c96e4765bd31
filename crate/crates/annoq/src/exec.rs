//! Partitioned, multi-worker query execution.
//!
//! Datasets are split into partitions by a hash of the document id, so every
//! annotation of one document — across all bound datasets — lands in the
//! same partition. Since the region operators never pair annotations across
//! documents, each partition can be evaluated completely independently; a
//! final merge by document id reassembles the global result, byte-identical
//! to a single-threaded evaluation of the un-partitioned environment.
//!
//! Partitioning is zero-copy: partitions reference the same record storage
//! as the input environment, only the per-document run lists are
//! redistributed.
//!
//! Workers pull partition indexes from a shared queue (dynamic scheduling)
//! rather than being striped statically, so an unbalanced partition shows up
//! as one long-tail task — which [`skew`] quantifies — instead of idling the
//! whole pool. The first evaluation error (by partition index) aborts the
//! query; workers drain after finishing their current task.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::model::{canonical_cmp, AnnotationDataset, DocRun};
use crate::query::{evaluate, BindingEnv, EvalError, QueryExpr, QueryResult};

/// FNV-1a, 64-bit: offset basis 14695981039346656037, prime 1099511628211,
/// fold each byte with XOR then multiply.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &byte in bytes {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Partition placement of one document: the FNV-1a hash of its docId bytes
/// modulo the partition count. Public so external tooling can predict and
/// audit placement.
pub fn partition_index(doc_id: &str, partitions: usize) -> usize {
    (fnv1a64(doc_id.as_bytes()) % partitions as u64) as usize
}

/// Execution parameters: how many worker threads to run and how many
/// partitions to split documents into. Both must be at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecConfig {
    pub workers: usize,
    pub partitions: usize,
}

impl ExecConfig {
    pub fn new(workers: usize, partitions: usize) -> Self {
        assert!(workers >= 1, "workers must be at least 1");
        assert!(partitions >= 1, "partitions must be at least 1");
        ExecConfig {
            workers,
            partitions,
        }
    }
}

/// The bound datasets split into document-hash partitions. Each partition is
/// itself a complete binding environment (every dataset name bound, possibly
/// to an empty dataset), holding only the documents placed there.
#[derive(Debug, Clone)]
pub struct PartitionedStore {
    partitions: Vec<BindingEnv>,
}

impl PartitionedStore {
    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    pub fn partitions(&self) -> &[BindingEnv] {
        &self.partitions
    }

    /// Total annotations per partition, across all datasets.
    pub fn partition_sizes(&self) -> Vec<u64> {
        self.partitions
            .iter()
            .map(|env| env.iter().map(|(_, d)| d.len() as u64).sum())
            .collect()
    }
}

/// Splits every dataset of `env` into `cfg.partitions` partitions by
/// document-id hash. Record storage is shared with the input; only run
/// lists are redistributed, so partitioning preserves each document's
/// canonical record order exactly.
pub fn partition(env: &BindingEnv, cfg: ExecConfig) -> PartitionedStore {
    assert!(cfg.partitions >= 1, "partitions must be at least 1");
    let mut per_partition: Vec<BindingEnv> = vec![BindingEnv::new(); cfg.partitions];
    for (name, dataset) in env.iter() {
        let mut runs: Vec<Vec<DocRun>> = vec![Vec::new(); cfg.partitions];
        for run in dataset.runs() {
            runs[partition_index(run.doc_id(), cfg.partitions)].push(run.clone());
        }
        for (slot, runs) in per_partition.iter_mut().zip(runs) {
            slot.bind(name, AnnotationDataset::from_runs(runs));
        }
    }
    PartitionedStore {
        partitions: per_partition,
    }
}

/// Per-partition results and task times collected by one worker thread.
type WorkerOutput = (Vec<(usize, QueryResult)>, Vec<(usize, Duration)>);

/// Timing observed by one [`execute`] call.
#[derive(Debug, Clone)]
pub struct ExecMetrics {
    /// Wall-clock time around the whole execution (task loop plus merge),
    /// excluding load and partitioning.
    pub wall: Duration,
    /// Per-partition task evaluation times, indexed by partition.
    pub task_times: Vec<Duration>,
    /// Highest number of tasks observed running at once; never exceeds the
    /// configured worker count.
    pub peak_workers: usize,
}

impl ExecMetrics {
    /// The longest single partition task.
    pub fn slowest_task(&self) -> Duration {
        self.task_times.iter().max().copied().unwrap_or_default()
    }

    /// Sum of all partition task times (the serial work equivalent).
    pub fn total_task_time(&self) -> Duration {
        self.task_times.iter().sum()
    }
}

/// Runs one query over every partition with `cfg.workers` worker threads and
/// merges the per-partition results into the global result, byte-identical
/// to single-threaded evaluation over the un-partitioned environment.
pub fn execute(
    q: &QueryExpr,
    store: &PartitionedStore,
    cfg: ExecConfig,
) -> Result<(QueryResult, ExecMetrics), EvalError> {
    assert!(cfg.workers >= 1, "workers must be at least 1");
    let partitions = store.partitions();
    let n = partitions.len();
    let worker_count = cfg.workers.min(n).max(1);

    let next_task = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let active = AtomicUsize::new(0);
    let peak = AtomicUsize::new(0);
    // First failure wins, ordered by partition index for determinism.
    let failure: Mutex<Option<(usize, EvalError)>> = Mutex::new(None);

    let started = Instant::now();
    let mut worker_outputs: Vec<WorkerOutput> = Vec::with_capacity(worker_count);
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(worker_count);
        for _ in 0..worker_count {
            handles.push(scope.spawn(|| {
                let mut results = Vec::new();
                let mut times = Vec::new();
                loop {
                    if abort.load(Ordering::Acquire) {
                        break;
                    }
                    let index = next_task.fetch_add(1, Ordering::Relaxed);
                    if index >= n {
                        break;
                    }
                    let running = active.fetch_add(1, Ordering::Relaxed) + 1;
                    peak.fetch_max(running, Ordering::Relaxed);
                    let task_started = Instant::now();
                    let outcome = evaluate(q, &partitions[index]);
                    times.push((index, task_started.elapsed()));
                    active.fetch_sub(1, Ordering::Relaxed);
                    match outcome {
                        Ok(result) => results.push((index, result)),
                        Err(error) => {
                            let mut slot = failure.lock().expect("failure lock");
                            if slot.as_ref().is_none_or(|(i, _)| index < *i) {
                                *slot = Some((index, error));
                            }
                            abort.store(true, Ordering::Release);
                            break;
                        }
                    }
                }
                (results, times)
            }));
        }
        for handle in handles {
            worker_outputs.push(handle.join().expect("worker panicked"));
        }
    });

    if let Some((_, error)) = failure.into_inner().expect("failure lock") {
        return Err(error);
    }

    let mut task_times = vec![Duration::ZERO; n];
    let mut results: Vec<(usize, QueryResult)> = Vec::with_capacity(n);
    for (part_results, part_times) in worker_outputs {
        for (index, time) in part_times {
            task_times[index] = time;
        }
        results.extend(part_results);
    }
    let merged = merge_results(results);
    let metrics = ExecMetrics {
        wall: started.elapsed(),
        task_times,
        peak_workers: peak.load(Ordering::Relaxed),
    };
    Ok((merged, metrics))
}

/// Reassembles per-partition results into the global result. Documents are
/// disjoint across partitions, so datasets merge by interleaving their
/// per-document runs in document-id order and anchored matches by sorting on
/// the anchor's canonical key; no record is re-sorted or copied.
fn merge_results(results: Vec<(usize, QueryResult)>) -> QueryResult {
    let mut datasets: Vec<AnnotationDataset> = Vec::new();
    let mut anchored: Vec<crate::algebra::AnchoredMatches> = Vec::new();
    let mut saw_anchored = false;
    for (_, result) in results {
        match result {
            QueryResult::Dataset(d) => datasets.push(d),
            QueryResult::Anchored(a) => {
                saw_anchored = true;
                anchored.extend(a);
            }
        }
    }
    if saw_anchored {
        anchored.sort_by(|x, y| canonical_cmp(&x.anchor, &y.anchor));
        QueryResult::Anchored(anchored)
    } else {
        let mut runs: Vec<DocRun> = datasets
            .into_iter()
            .flat_map(|d| d.into_runs())
            .collect();
        runs.sort_by(|a, b| a.doc_id().cmp(b.doc_id()));
        QueryResult::Dataset(AnnotationDataset::from_runs(runs))
    }
}

/// Work-balance summary of a partitioned store.
#[derive(Debug, Clone)]
pub struct SkewReport {
    /// Total annotations per partition, across all datasets.
    pub partition_counts: Vec<u64>,
    /// Largest partition relative to the mean partition size.
    pub max_mean_ratio: f64,
    /// Largest partition relative to the median partition size.
    pub max_median_ratio: f64,
}

impl SkewReport {
    pub fn total(&self) -> u64 {
        self.partition_counts.iter().sum()
    }
}

/// Measures how evenly annotations are spread over partitions. A dominant
/// document forces its whole weight into one partition, which these ratios
/// surface as a value far above 1.
pub fn skew(store: &PartitionedStore) -> SkewReport {
    let counts = store.partition_sizes();
    let max = counts.iter().max().copied().unwrap_or(0);
    if max == 0 {
        return SkewReport {
            partition_counts: counts,
            max_mean_ratio: 0.0,
            max_median_ratio: 0.0,
        };
    }
    let total: u64 = counts.iter().sum();
    let mean = total as f64 / counts.len() as f64;
    let mut sorted = counts.clone();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid] as f64
    } else {
        (sorted[mid - 1] + sorted[mid]) as f64 / 2.0
    };
    SkewReport {
        partition_counts: counts,
        max_mean_ratio: max as f64 / mean,
        max_median_ratio: max as f64 / median,
    }
}
