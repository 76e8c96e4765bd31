//! Region-algebra query engine for stand-off text annotations.
//!
//! Annotations label regions of source documents by offset, in named sets
//! (e.g. one per markup origin) with a type and an optional property table.
//! The crate provides:
//!
//! - [`model`]: the [`Annotation`](model::Annotation) record and the
//!   immutable, canonically ordered [`AnnotationDataset`](model::AnnotationDataset).
//! - [`algebra`]: the region operators (filters, containment, order,
//!   sequence, property matching, and anchored nearest-neighbour search).
//! - [`query`]: a small functional query language — parser, AST,
//!   pretty-printer, and evaluator over named datasets.
//! - [`storage`]: a tab-separated on-disk format and a directory layout for
//!   corpora of annotation sets.
//! - [`exec`]: document-hash partitioning and a multi-worker executor that
//!   runs one query over many partitions with deterministic output.
//! - [`bench`]: a deterministic synthetic corpus generator with ground-truth
//!   counts, plus a fixed query suite and a benchmark runner.

pub mod algebra;
pub mod bench;
pub mod exec;
pub mod model;
pub mod query;
pub mod storage;

pub use model::{Annotation, AnnotationDataset, DatasetError, DatasetStats, Violation};
