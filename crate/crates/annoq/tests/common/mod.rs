//! Brute-force reference implementations of every operator, plus random
//! corpus builders for equivalence testing.
//!
//! The oracles are written directly from the operator contracts as plain
//! nested loops over materialized record vectors. They share no code with
//! the engine's per-document kernels, so agreement between the two is
//! meaningful evidence. Keep them dumb: no sorting tricks, no windows, no
//! early exits.

#![allow(dead_code)] // each integration test binary uses a different subset

use annoq::algebra::AnchoredMatches;
use annoq::bench::SplitMix64;
use annoq::{Annotation, AnnotationDataset};
use regex::Regex;

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

fn identical(a: &Annotation, b: &Annotation) -> bool {
    a.doc_id == b.doc_id
        && a.annot_set == b.annot_set
        && a.annot_type == b.annot_type
        && a.start_offset == b.start_offset
        && a.end_offset == b.end_offset
        && a.annot_id == b.annot_id
}

/// Full canonical key, restated independently of the library's comparator.
fn key(r: &Annotation) -> (String, u64, u64, String, String, u64) {
    (
        r.doc_id.clone(),
        r.start_offset,
        r.end_offset,
        r.annot_set.clone(),
        r.annot_type.clone(),
        r.annot_id,
    )
}

pub fn o_filter_set(a: &AnnotationDataset, set: &str) -> Vec<Annotation> {
    a.to_records()
        .into_iter()
        .filter(|r| r.annot_set == set)
        .collect()
}

pub fn o_filter_type(a: &AnnotationDataset, ty: &str) -> Vec<Annotation> {
    a.to_records()
        .into_iter()
        .filter(|r| r.annot_type == ty)
        .collect()
}

pub fn o_filter_property(a: &AnnotationDataset, name: &str, value: &str) -> Vec<Annotation> {
    a.to_records()
        .into_iter()
        .filter(|r| r.property(name) == Some(value))
        .collect()
}

pub fn o_regex_property(a: &AnnotationDataset, name: &str, pattern: &str) -> Vec<Annotation> {
    let re = Regex::new(pattern).expect("oracle pattern compiles");
    a.to_records()
        .into_iter()
        .filter(|r| r.property(name).map(|v| re.is_match(v)).unwrap_or(false))
        .collect()
}

pub fn o_contains(a: &AnnotationDataset, b: &AnnotationDataset) -> Vec<Annotation> {
    let bs = b.to_records();
    a.to_records()
        .into_iter()
        .filter(|x| {
            bs.iter().any(|y| {
                x.doc_id == y.doc_id
                    && x.start_offset <= y.start_offset
                    && x.end_offset >= y.end_offset
                    && !identical(x, y)
            })
        })
        .collect()
}

pub fn o_contained_in(a: &AnnotationDataset, b: &AnnotationDataset) -> Vec<Annotation> {
    let bs = b.to_records();
    a.to_records()
        .into_iter()
        .filter(|x| {
            bs.iter().any(|y| {
                x.doc_id == y.doc_id
                    && y.start_offset <= x.start_offset
                    && y.end_offset >= x.end_offset
                    && !identical(x, y)
            })
        })
        .collect()
}

pub fn o_before(a: &AnnotationDataset, b: &AnnotationDataset) -> Vec<Annotation> {
    let bs = b.to_records();
    a.to_records()
        .into_iter()
        .filter(|x| {
            bs.iter()
                .any(|y| x.doc_id == y.doc_id && x.end_offset <= y.start_offset)
        })
        .collect()
}

pub fn o_after(a: &AnnotationDataset, b: &AnnotationDataset) -> Vec<Annotation> {
    let bs = b.to_records();
    a.to_records()
        .into_iter()
        .filter(|x| {
            bs.iter()
                .any(|y| x.doc_id == y.doc_id && x.start_offset >= y.end_offset)
        })
        .collect()
}

pub fn o_between(
    c: &AnnotationDataset,
    a: &AnnotationDataset,
    b: &AnnotationDataset,
) -> Vec<Annotation> {
    let as_ = a.to_records();
    let bs = b.to_records();
    c.to_records()
        .into_iter()
        .filter(|x| {
            as_.iter()
                .any(|y| x.doc_id == y.doc_id && y.end_offset <= x.start_offset)
                && bs
                    .iter()
                    .any(|z| x.doc_id == z.doc_id && x.end_offset <= z.start_offset)
        })
        .collect()
}

pub fn o_sequence(
    a: &AnnotationDataset,
    b: &AnnotationDataset,
    dist: Option<u64>,
) -> Vec<Annotation> {
    let as_ = a.to_records();
    let bs = b.to_records();
    let mut fresh: Vec<Annotation> = Vec::new();
    for x in &as_ {
        for y in &bs {
            if x.doc_id == y.doc_id
                && x.end_offset <= y.start_offset
                && dist.is_none_or(|d| y.start_offset - x.end_offset <= d)
            {
                fresh.push(Annotation::new(
                    &x.doc_id,
                    "aq",
                    "seq",
                    x.start_offset,
                    y.end_offset,
                    0,
                ));
            }
        }
    }
    // Fresh ids count up per document from the largest id either input has
    // in that document, following canonical order of the new records.
    fresh.sort_by_key(key);
    let mut doc_start = 0;
    while doc_start < fresh.len() {
        let doc_id = fresh[doc_start].doc_id.clone();
        let mut doc_end = doc_start;
        while doc_end < fresh.len() && fresh[doc_end].doc_id == doc_id {
            doc_end += 1;
        }
        let max_id = as_
            .iter()
            .chain(bs.iter())
            .filter(|r| r.doc_id == doc_id)
            .map(|r| r.annot_id)
            .max()
            .unwrap_or(0);
        for (offset, record) in fresh[doc_start..doc_end].iter_mut().enumerate() {
            record.annot_id = max_id + 1 + offset as u64;
        }
        doc_start = doc_end;
    }
    fresh.sort_by_key(key);
    fresh
}

pub fn o_match_property(
    a: &AnnotationDataset,
    b: &AnnotationDataset,
    name: &str,
) -> Vec<Annotation> {
    let bs = b.to_records();
    a.to_records()
        .into_iter()
        .filter(|x| match x.property(name) {
            None => false,
            Some(value) => bs
                .iter()
                .any(|y| x.doc_id == y.doc_id && y.property(name) == Some(value)),
        })
        .collect()
}

pub fn o_preceding(
    a: &AnnotationDataset,
    b: &AnnotationDataset,
    cnt: usize,
) -> Vec<AnchoredMatches> {
    let as_ = a.to_records();
    b.to_records()
        .into_iter()
        .map(|anchor| {
            let mut matches: Vec<Annotation> = as_
                .iter()
                .filter(|x| x.doc_id == anchor.doc_id && x.end_offset <= anchor.start_offset)
                .cloned()
                .collect();
            matches.sort_by(|p, q| {
                q.end_offset
                    .cmp(&p.end_offset)
                    .then(q.start_offset.cmp(&p.start_offset))
                    .then(p.annot_id.cmp(&q.annot_id))
            });
            matches.truncate(cnt);
            AnchoredMatches { anchor, matches }
        })
        .collect()
}

pub fn o_following(
    a: &AnnotationDataset,
    b: &AnnotationDataset,
    cnt: usize,
) -> Vec<AnchoredMatches> {
    let as_ = a.to_records();
    b.to_records()
        .into_iter()
        .map(|anchor| {
            let mut matches: Vec<Annotation> = as_
                .iter()
                .filter(|x| x.doc_id == anchor.doc_id && x.start_offset >= anchor.end_offset)
                .cloned()
                .collect();
            matches.sort_by(|p, q| {
                p.start_offset
                    .cmp(&q.start_offset)
                    .then(p.end_offset.cmp(&q.end_offset))
                    .then(p.annot_id.cmp(&q.annot_id))
            });
            matches.truncate(cnt);
            AnchoredMatches { anchor, matches }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Random corpora
// ---------------------------------------------------------------------------

pub const SETS: [&str; 3] = ["om", "genia", "aux"];
pub const TYPES: [&str; 4] = ["word", "sentence", "NP", "ce:para"];
pub const WORDS: [&str; 6] = ["the", "heart", "head", "tree", "adrenocortical", "cell"];

/// One random record: small offset ranges force heavy overlap, adjacency,
/// exact-span coincidences, and zero-length regions.
fn random_record(rng: &mut SplitMix64, doc_count: u64, annot_id: u64) -> Annotation {
    let doc_id = format!("d{}", rng.range(0, doc_count - 1));
    let set = SETS[rng.range(0, SETS.len() as u64 - 1) as usize];
    let ty = TYPES[rng.range(0, TYPES.len() as u64 - 1) as usize];
    let start = rng.range(0, 40);
    let end = start + rng.range(0, 10);
    let mut record = Annotation::new(doc_id, set, ty, start, end, annot_id);
    if rng.range(0, 9) < 6 {
        let word = WORDS[rng.range(0, WORDS.len() as u64 - 1) as usize];
        record = record.with_property("orig", word);
    }
    if rng.range(0, 9) < 2 {
        record = record.with_property("pos", if rng.range(0, 1) == 0 { "nn" } else { "vb" });
    }
    record
}

/// A random dataset of `size` records over `doc_count` documents, with ids
/// drawn from `id_base..` so records from different calls never collide.
pub fn random_dataset(
    rng: &mut SplitMix64,
    doc_count: u64,
    size: usize,
    id_base: u64,
) -> AnnotationDataset {
    let records: Vec<Annotation> = (0..size)
        .map(|i| random_record(rng, doc_count, id_base + i as u64))
        .collect();
    AnnotationDataset::from_records(records).expect("random records are valid")
}

/// A pair of datasets that deliberately share some records verbatim (same
/// identity) and some identity-differing copies, to exercise the identity
/// exclusion in containment.
pub fn random_pair(
    rng: &mut SplitMix64,
    doc_count: u64,
    size: usize,
) -> (AnnotationDataset, AnnotationDataset) {
    let a = random_dataset(rng, doc_count, size, 1);
    let mut b_records: Vec<Annotation> = Vec::new();
    for record in a.iter() {
        let roll = rng.range(0, 9);
        if roll < 3 {
            // Shared verbatim: identical on every identity field.
            b_records.push(record.clone());
        } else if roll < 5 {
            // Same region, different id: matches despite the exclusion rule.
            let mut copy = record.clone();
            copy.annot_id += 10_000;
            b_records.push(copy);
        }
    }
    let fresh = random_dataset(rng, doc_count, size / 2 + 1, 20_000);
    b_records.extend(fresh.iter().cloned());
    (
        a,
        AnnotationDataset::from_records(b_records).expect("pair records are valid"),
    )
}

// ---------------------------------------------------------------------------
// Comparison helpers
// ---------------------------------------------------------------------------

/// Asserts a dataset equals an oracle's record list, record for record.
pub fn assert_matches_oracle(label: &str, actual: &AnnotationDataset, expected: &[Annotation]) {
    let actual: Vec<Annotation> = actual.to_records();
    assert_eq!(
        actual.len(),
        expected.len(),
        "{label}: count {} != oracle {}",
        actual.len(),
        expected.len()
    );
    for (index, (got, want)) in actual.iter().zip(expected).enumerate() {
        assert_eq!(got, want, "{label}: record {index} differs");
    }
}

/// Asserts anchored results equal the oracle's, including match order.
pub fn assert_anchored_matches_oracle(
    label: &str,
    actual: &[AnchoredMatches],
    expected: &[AnchoredMatches],
) {
    assert_eq!(
        actual.len(),
        expected.len(),
        "{label}: anchor count {} != oracle {}",
        actual.len(),
        expected.len()
    );
    for (index, (got, want)) in actual.iter().zip(expected).enumerate() {
        assert_eq!(got.anchor, want.anchor, "{label}: anchor {index} differs");
        assert_eq!(
            got.matches, want.matches,
            "{label}: matches for anchor {index} differ"
        );
    }
}
