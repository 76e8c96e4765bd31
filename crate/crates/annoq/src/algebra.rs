//! The thirteen region query operators.
//!
//! Every operator pairs annotations only within the same document. Unless
//! noted, the output is a sub-multiset of the first dataset argument, in
//! canonical order, with each qualifying annotation emitted once
//! (existential semantics: one witness in the second argument suffices).
//! The two exceptions are [`sequence`], which synthesizes new annotations,
//! and [`preceding`]/[`following`], which return per-anchor match lists.
//!
//! Datasets keep each document's annotations sorted by start offset, and the
//! containment/order kernels lean on that: `contains`/`contained_in` answer
//! each probe from suffix-min / prefix-max end-offset tables plus a scan
//! window over equal-start records, `before`/`after`/`between` reduce the
//! witness side to one extreme offset per document, and `sequence` binary
//! searches the witness start range. Nothing here ever compares annotations
//! across two documents.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::sync::Arc;

use regex::Regex;
use serde::Serialize;

use crate::model::{Annotation, AnnotationDataset, DocRun, DocView, Selection};

/// Default number of neighbours returned per anchor by [`preceding`] and
/// [`following`].
pub const DEFAULT_CNT: usize = 3;

/// Result element of [`preceding`] and [`following`]: one anchor from the
/// second dataset argument paired with its nearest qualifying neighbours
/// from the first, nearest-first, at most `cnt` of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnchoredMatches {
    pub anchor: Annotation,
    pub matches: Vec<Annotation>,
}

// ---------------------------------------------------------------------------
// Filters
// ---------------------------------------------------------------------------

/// Annotations of the named annotation set (exact match). An unknown set
/// yields an empty dataset, never an error.
pub fn filter_set(d: &AnnotationDataset, set_name: &str) -> AnnotationDataset {
    let mut runs = Vec::new();
    for run in d.runs() {
        let probe = run.base.set_code_of(set_name).unwrap_or(u32::MAX);
        let view = run.view();
        let picks = compacted(view, |i| view.set_code(i) == probe);
        if let Some(run) = rebuilt(run, view.len(), picks) {
            runs.push(run);
        }
    }
    AnnotationDataset::from_runs(runs)
}

/// Annotations of the named annotation type (exact match).
pub fn filter_type(d: &AnnotationDataset, type_name: &str) -> AnnotationDataset {
    let mut runs = Vec::new();
    for run in d.runs() {
        let probe = run.base.type_code_of(type_name).unwrap_or(u32::MAX);
        let view = run.view();
        let picks = compacted(view, |i| view.type_code(i) == probe);
        if let Some(run) = rebuilt(run, view.len(), picks) {
            runs.push(run);
        }
    }
    AnnotationDataset::from_runs(runs)
}

/// Annotations carrying the property `name` with exactly the value `value`.
/// Records without the property never match and never error.
pub fn filter_property(d: &AnnotationDataset, name: &str, value: &str) -> AnnotationDataset {
    filter_property_metered(d, name, value).0
}

/// [`filter_property`] plus the number of input records visited. The filter
/// is a full scan, so the count equals the input size regardless of how many
/// records match — the property the instrumentation exists to demonstrate.
pub fn filter_property_metered(
    d: &AnnotationDataset,
    name: &str,
    value: &str,
) -> (AnnotationDataset, u64) {
    let mut visited = 0u64;
    let out = filter_runs(d, |r| {
        visited += 1;
        r.property(name).is_some_and(|v| value_eq(v, value))
    });
    (out, visited)
}

/// Fixed-pace string equality for scan predicates. The work done for one
/// record depends only on that record's own value — the fold always walks
/// the whole value, bytes past the probe's end XOR with themselves, and a
/// length mismatch is folded in as a flag rather than branched on. Every
/// probe value therefore drives the exact same per-record instruction and
/// branch sequence, so a filter costs the same whether its value matches a
/// handful of records or most of them. An early-exit comparison would look
/// cheaper on mismatches and dearer on hits, which is precisely the
/// selectivity dependence the scan operators promise not to have.
#[inline]
fn value_eq(value: &str, probe: &str) -> bool {
    let (value, probe) = (value.as_bytes(), probe.as_bytes());
    let mut diff = u8::from(value.len() != probe.len());
    for (i, &x) in value.iter().enumerate() {
        diff |= x ^ probe.get(i).copied().unwrap_or(x);
    }
    diff == 0
}

/// Annotations whose value for property `name` contains a match of the
/// pattern (find semantics; `^`/`$` anchor to the value's start/end).
/// Patterns are compiled by the caller, so an invalid pattern is rejected
/// before any scanning starts.
pub fn regex_property(d: &AnnotationDataset, name: &str, pattern: &Regex) -> AnnotationDataset {
    filter_runs(d, |r| r.property(name).is_some_and(|v| pattern.is_match(v)))
}

// ---------------------------------------------------------------------------
// Containment
// ---------------------------------------------------------------------------

/// Annotations of `a` whose range covers at least one annotation of `b` in
/// the same document: `a.start ≤ b.start` and `b.end ≤ a.end`, boundaries
/// inclusive. A record never matches itself (same docId, set, type, offsets,
/// and annotId), but an otherwise identical region does.
pub fn contains(a: &AnnotationDataset, b: &AnnotationDataset) -> AnnotationDataset {
    let mut runs = Vec::new();
    for_each_paired_doc(a, b, |arun, bview| {
        let aview = arun.view();
        let n = bview.len();
        // suff_min_end[i] = min end offset among b[i..]; b is sorted by start.
        let mut suff_min_end = vec![u64::MAX; n + 1];
        for i in (0..n).rev() {
            suff_min_end[i] = suff_min_end[i + 1].min(bview.get(i).end_offset);
        }
        let mut picks = Vec::new();
        // lo = first b with b.start ≥ a.start; hi = first b with b.start > a.start.
        // Both advance monotonically because a is scanned in ascending start order.
        let (mut lo, mut hi) = (0usize, 0usize);
        for i in 0..aview.len() {
            let ar = aview.get(i);
            while lo < n && bview.get(lo).start_offset < ar.start_offset {
                lo += 1;
            }
            if hi < lo {
                hi = lo;
            }
            while hi < n && bview.get(hi).start_offset <= ar.start_offset {
                hi += 1;
            }
            // Any b with b.start > a.end also has b.end > a.end, so the
            // suffix minimum alone decides existence.
            if suff_min_end[lo] <= ar.end_offset {
                if suff_min_end[hi] <= ar.end_offset {
                    // Witness with b.start > a.start: a different region,
                    // identity exclusion cannot apply.
                    picks.push(aview.src_index(i));
                } else {
                    // All witnesses share a's start; scan that run and skip
                    // the (at most one) record identical to a.
                    for j in lo..hi {
                        let br = bview.get(j);
                        if br.end_offset <= ar.end_offset && !ar.same_identity(br) {
                            picks.push(aview.src_index(i));
                            break;
                        }
                    }
                }
            }
        }
        if let Some(run) = rebuilt(arun, aview.len(), picks) {
            runs.push(run);
        }
    });
    AnnotationDataset::from_runs(runs)
}

/// Annotations of `a` whose range is covered by at least one annotation of
/// `b` in the same document: the mirror of [`contains`], with the same
/// inclusive boundaries and identity exclusion.
pub fn contained_in(a: &AnnotationDataset, b: &AnnotationDataset) -> AnnotationDataset {
    let mut runs = Vec::new();
    for_each_paired_doc(a, b, |arun, bview| {
        let aview = arun.view();
        let n = bview.len();
        // pref_max_end[k] = max end offset among the first k records of b.
        let mut pref_max_end = vec![0u64; n + 1];
        for i in 0..n {
            pref_max_end[i + 1] = pref_max_end[i].max(bview.get(i).end_offset);
        }
        let mut picks = Vec::new();
        // lo = first b with b.start ≥ a.start; hi = first b with b.start > a.start.
        let (mut lo, mut hi) = (0usize, 0usize);
        for i in 0..aview.len() {
            let ar = aview.get(i);
            while lo < n && bview.get(lo).start_offset < ar.start_offset {
                lo += 1;
            }
            if hi < lo {
                hi = lo;
            }
            while hi < n && bview.get(hi).start_offset <= ar.start_offset {
                hi += 1;
            }
            // Witnesses need b.start ≤ a.start, i.e. indices below hi.
            if lo > 0 && pref_max_end[lo] >= ar.end_offset {
                // Witness with b.start < a.start: never identical to a.
                picks.push(aview.src_index(i));
            } else {
                for j in lo..hi {
                    let br = bview.get(j);
                    if br.end_offset >= ar.end_offset && !ar.same_identity(br) {
                        picks.push(aview.src_index(i));
                        break;
                    }
                }
            }
        }
        if let Some(run) = rebuilt(arun, aview.len(), picks) {
            runs.push(run);
        }
    });
    AnnotationDataset::from_runs(runs)
}

// ---------------------------------------------------------------------------
// Order
// ---------------------------------------------------------------------------

/// Annotations of `a` that end at or before the start of some annotation of
/// `b` in the same document. A gap of zero (adjacency) satisfies the
/// relation: offsets index the gaps between characters, so equal offsets
/// still order the regions.
pub fn before(a: &AnnotationDataset, b: &AnnotationDataset) -> AnnotationDataset {
    let mut runs = Vec::new();
    for_each_paired_doc(a, b, |arun, bview| {
        // One witness is enough, so only b's maximal start matters.
        let max_b_start = bview.into_iter().map(|r| r.start_offset).max().unwrap();
        let aview = arun.view();
        let mut picks = Vec::new();
        for i in 0..aview.len() {
            if aview.get(i).end_offset <= max_b_start {
                picks.push(aview.src_index(i));
            }
        }
        if let Some(run) = rebuilt(arun, aview.len(), picks) {
            runs.push(run);
        }
    });
    AnnotationDataset::from_runs(runs)
}

/// Annotations of `a` that start at or after the end of some annotation of
/// `b` in the same document; adjacency satisfies the relation.
pub fn after(a: &AnnotationDataset, b: &AnnotationDataset) -> AnnotationDataset {
    let mut runs = Vec::new();
    for_each_paired_doc(a, b, |arun, bview| {
        let min_b_end = bview.into_iter().map(|r| r.end_offset).min().unwrap();
        let aview = arun.view();
        let mut picks = Vec::new();
        for i in 0..aview.len() {
            if aview.get(i).start_offset >= min_b_end {
                picks.push(aview.src_index(i));
            }
        }
        if let Some(run) = rebuilt(arun, aview.len(), picks) {
            runs.push(run);
        }
    });
    AnnotationDataset::from_runs(runs)
}

/// Annotations of `c` lying after some annotation of `a` and before some
/// annotation of `b`, all in the same document. Equivalent to the
/// intersection of `after(c, a)` and `before(c, b)`.
pub fn between(
    c: &AnnotationDataset,
    a: &AnnotationDataset,
    b: &AnnotationDataset,
) -> AnnotationDataset {
    let mut runs = Vec::new();
    let (a_runs, b_runs) = (a.runs(), b.runs());
    let (mut ai, mut bi) = (0usize, 0usize);
    for crun in c.runs() {
        let doc = crun.doc_id();
        while ai < a_runs.len() && a_runs[ai].doc_id() < doc {
            ai += 1;
        }
        while bi < b_runs.len() && b_runs[bi].doc_id() < doc {
            bi += 1;
        }
        let a_here = ai < a_runs.len() && a_runs[ai].doc_id() == doc;
        let b_here = bi < b_runs.len() && b_runs[bi].doc_id() == doc;
        if !(a_here && b_here) {
            continue;
        }
        let min_a_end = a_runs[ai].iter().map(|r| r.end_offset).min().unwrap();
        let max_b_start = b_runs[bi].iter().map(|r| r.start_offset).max().unwrap();
        let cview = crun.view();
        let mut picks = Vec::new();
        for i in 0..cview.len() {
            let cr = cview.get(i);
            if cr.start_offset >= min_a_end && cr.end_offset <= max_b_start {
                picks.push(cview.src_index(i));
            }
        }
        if let Some(run) = rebuilt(crun, cview.len(), picks) {
            runs.push(run);
        }
    }
    AnnotationDataset::from_runs(runs)
}

// ---------------------------------------------------------------------------
// Sequence
// ---------------------------------------------------------------------------

/// One new annotation per ordered pair `(a, b)` in the same document with
/// `a.end ≤ b.start` and, when `dist` is given, a gap of at most `dist`
/// characters. Each output annotation spans `[a.start, b.end]` under
/// annotation set `"aq"`, type `"seq"`, no properties; fresh annotIds are
/// assigned per document as the maximum existing annotId in that document
/// across both inputs plus 1, 2, … in canonical output order.
///
/// Without `dist` every ordered pair qualifies, so the output (and the
/// running time) can be quadratic in the per-document annotation counts.
pub fn sequence(
    a: &AnnotationDataset,
    b: &AnnotationDataset,
    dist: Option<u64>,
) -> AnnotationDataset {
    let mut base: Vec<Annotation> = Vec::new();
    for_each_paired_doc(a, b, |arun, bview| {
        let aview = arun.view();
        let doc_id = arun.doc_id();
        let b_starts: Vec<u64> = bview.into_iter().map(|r| r.start_offset).collect();
        // (start, end, a.annotId, b.annotId) per qualifying pair; the id pair
        // makes fresh-id assignment deterministic when spans coincide.
        let mut pairs: Vec<(u64, u64, u64, u64)> = Vec::new();
        for i in 0..aview.len() {
            let ar = aview.get(i);
            let lo = b_starts.partition_point(|&s| s < ar.end_offset);
            let hi = match dist {
                Some(d) => b_starts.partition_point(|&s| s <= ar.end_offset.saturating_add(d)),
                None => b_starts.len(),
            };
            for j in lo..hi {
                let br = bview.get(j);
                pairs.push((ar.start_offset, br.end_offset, ar.annot_id, br.annot_id));
            }
        }
        if pairs.is_empty() {
            return;
        }
        pairs.sort_unstable();
        let max_id = aview
            .into_iter()
            .chain(bview)
            .map(|r| r.annot_id)
            .max()
            .unwrap();
        for (k, (start, end, _, _)) in pairs.into_iter().enumerate() {
            base.push(Annotation::new(
                doc_id,
                "aq",
                "seq",
                start,
                end,
                max_id + 1 + k as u64,
            ));
        }
    });
    AnnotationDataset::from_base(base)
}

// ---------------------------------------------------------------------------
// Property matching
// ---------------------------------------------------------------------------

/// Annotations of `a` carrying property `name` whose value equals the value
/// of property `name` on some annotation of `b` in the same document.
/// Records missing the property on either side never match.
pub fn match_property(
    a: &AnnotationDataset,
    b: &AnnotationDataset,
    name: &str,
) -> AnnotationDataset {
    let mut runs = Vec::new();
    for_each_paired_doc(a, b, |arun, bview| {
        let values: HashSet<&str> = bview.into_iter().filter_map(|r| r.property(name)).collect();
        if values.is_empty() {
            return;
        }
        let aview = arun.view();
        let mut picks = Vec::new();
        for i in 0..aview.len() {
            if aview
                .get(i)
                .property(name)
                .is_some_and(|v| values.contains(v))
            {
                picks.push(aview.src_index(i));
            }
        }
        if let Some(run) = rebuilt(arun, aview.len(), picks) {
            runs.push(run);
        }
    });
    AnnotationDataset::from_runs(runs)
}

// ---------------------------------------------------------------------------
// Anchored neighbours
// ---------------------------------------------------------------------------

/// For every anchor `b ∈ b` (in canonical order, empty-match anchors
/// included), the at most `cnt` nearest annotations of `a` in the same
/// document that end at or before the anchor's start. Matches are
/// nearest-first: descending end offset, then descending start offset, then
/// ascending annotId.
pub fn preceding(a: &AnnotationDataset, b: &AnnotationDataset, cnt: usize) -> Vec<AnchoredMatches> {
    let mut out = Vec::with_capacity(b.len());
    for_each_anchor_doc(a, b, |aview, bview| {
        // Order a by (end asc, start asc, id desc); walking that order
        // backwards yields exactly the nearest-first match order.
        let mut order: Vec<u32> = (0..aview.len() as u32).collect();
        order.sort_unstable_by(|&x, &y| {
            let (rx, ry) = (aview.get(x as usize), aview.get(y as usize));
            rx.end_offset
                .cmp(&ry.end_offset)
                .then_with(|| rx.start_offset.cmp(&ry.start_offset))
                .then_with(|| ry.annot_id.cmp(&rx.annot_id))
        });
        let ends: Vec<u64> = order
            .iter()
            .map(|&x| aview.get(x as usize).end_offset)
            .collect();
        for bi in 0..bview.len() {
            let anchor = bview.get(bi);
            let k = ends.partition_point(|&e| e <= anchor.start_offset);
            let matches: Vec<Annotation> = order[..k]
                .iter()
                .rev()
                .take(cnt)
                .map(|&x| aview.get(x as usize).clone())
                .collect();
            out.push(AnchoredMatches {
                anchor: anchor.clone(),
                matches,
            });
        }
    });
    out
}

/// For every anchor `b ∈ b`, the at most `cnt` nearest annotations of `a`
/// in the same document that start at or after the anchor's end.
/// Nearest-first: ascending start offset, then ascending end offset, then
/// ascending annotId.
pub fn following(a: &AnnotationDataset, b: &AnnotationDataset, cnt: usize) -> Vec<AnchoredMatches> {
    let mut out = Vec::with_capacity(b.len());
    for_each_anchor_doc(a, b, |aview, bview| {
        let mut order: Vec<u32> = (0..aview.len() as u32).collect();
        order.sort_unstable_by(|&x, &y| {
            let (rx, ry) = (aview.get(x as usize), aview.get(y as usize));
            rx.start_offset
                .cmp(&ry.start_offset)
                .then_with(|| rx.end_offset.cmp(&ry.end_offset))
                .then_with(|| rx.annot_id.cmp(&ry.annot_id))
        });
        let starts: Vec<u64> = order
            .iter()
            .map(|&x| aview.get(x as usize).start_offset)
            .collect();
        for bi in 0..bview.len() {
            let anchor = bview.get(bi);
            let k = starts.partition_point(|&s| s < anchor.end_offset);
            let matches: Vec<Annotation> = order[k..]
                .iter()
                .take(cnt)
                .map(|&x| aview.get(x as usize).clone())
                .collect();
            out.push(AnchoredMatches {
                anchor: anchor.clone(),
                matches,
            });
        }
    });
    out
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Keeps the records of `d` satisfying `keep`, preserving canonical order
/// and sharing record storage with the input.
fn filter_runs(
    d: &AnnotationDataset,
    mut keep: impl FnMut(&Annotation) -> bool,
) -> AnnotationDataset {
    let mut runs = Vec::new();
    for run in d.runs() {
        let view = run.view();
        let picks = compacted(view, |i| keep(view.get(i)));
        if let Some(run) = rebuilt(run, view.len(), picks) {
            runs.push(run);
        }
    }
    AnnotationDataset::from_runs(runs)
}

/// Branchless compaction of one run: every record's base index is written to
/// the current staging slot and the slot only advances on a match. The scan
/// thus does identical work per record whether the predicate keeps none,
/// some, or all of them — selectivity affects only the final truncation.
fn compacted(view: DocView<'_>, mut keep: impl FnMut(usize) -> bool) -> Vec<u32> {
    let n = view.len();
    let mut picks = vec![0u32; n];
    let mut kept = 0usize;
    for i in 0..n {
        picks[kept] = view.src_index(i);
        kept += keep(i) as usize;
    }
    picks.truncate(kept);
    picks
}

/// Wraps per-document picks back into a run over the same base storage.
/// Empty picks drop the document; full picks reuse the input selection.
fn rebuilt(run: &DocRun, input_len: usize, picks: Vec<u32>) -> Option<DocRun> {
    if picks.is_empty() {
        None
    } else if picks.len() == input_len {
        Some(run.clone())
    } else {
        Some(DocRun {
            base: Arc::clone(&run.base),
            sel: Selection::Picks(picks),
        })
    }
}

/// Calls `f` once per document present in both datasets, with `a`'s run and
/// `b`'s view for that document. Documents missing from either side produce
/// no output for the binary operators, so they are skipped outright.
fn for_each_paired_doc<'a>(
    a: &'a AnnotationDataset,
    b: &'a AnnotationDataset,
    mut f: impl FnMut(&'a DocRun, DocView<'a>),
) {
    let (a_runs, b_runs) = (a.runs(), b.runs());
    let (mut i, mut j) = (0usize, 0usize);
    while i < a_runs.len() && j < b_runs.len() {
        match a_runs[i].doc_id().cmp(b_runs[j].doc_id()) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                f(&a_runs[i], b_runs[j].view());
                i += 1;
                j += 1;
            }
        }
    }
}

/// Calls `f` once per document of the anchor dataset `b` — every anchor
/// document, paired with `a`'s view for it or an empty view.
fn for_each_anchor_doc<'a>(
    a: &'a AnnotationDataset,
    b: &'a AnnotationDataset,
    mut f: impl FnMut(DocView<'a>, DocView<'a>),
) {
    let a_runs = a.runs();
    let mut i = 0usize;
    for brun in b.runs() {
        while i < a_runs.len() && a_runs[i].doc_id() < brun.doc_id() {
            i += 1;
        }
        let aview = if i < a_runs.len() && a_runs[i].doc_id() == brun.doc_id() {
            a_runs[i].view()
        } else {
            DocView::empty()
        };
        f(aview, brun.view());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(doc: &str, set: &str, ty: &str, start: u64, end: u64, id: u64) -> Annotation {
        Annotation::new(doc, set, ty, start, end, id)
    }

    fn ds(records: Vec<Annotation>) -> AnnotationDataset {
        AnnotationDataset::from_records(records).unwrap()
    }

    fn listing_record() -> Annotation {
        ann("123456789", "ge", "NP", 1439, 1450, 376)
            .with_property("orig", "other trees")
            .with_property("pos", "jj nns")
    }

    #[test]
    fn filter_set_exact_match() {
        let d = ds(vec![listing_record()]);
        assert_eq!(filter_set(&d, "ge").to_records(), vec![listing_record()]);
        assert!(filter_set(&d, "nosuch").is_empty());
        assert!(filter_set(&d, "g").is_empty());
    }

    #[test]
    fn filter_type_exact_match() {
        let d = ds(vec![listing_record()]);
        assert_eq!(filter_type(&d, "NP").to_records(), vec![listing_record()]);
        assert!(filter_type(&d, "").is_empty());
    }

    #[test]
    fn filter_property_matches_name_and_value() {
        let d = ds(vec![listing_record()]);
        assert_eq!(
            filter_property(&d, "pos", "jj nns").to_records(),
            vec![listing_record()]
        );
        assert!(filter_property(&d, "pos", "jj").is_empty());
        assert!(filter_property(&d, "lemma", "jj nns").is_empty());
    }

    #[test]
    fn filter_property_never_matches_without_properties() {
        let d = ds(vec![ann("d", "om", "p", 0, 3, 1)]);
        assert!(filter_property(&d, "orig", "").is_empty());
    }

    #[test]
    fn filter_property_visits_every_record_regardless_of_selectivity() {
        let records: Vec<Annotation> = (0..100)
            .map(|i| {
                ann("d", "ge", "w", i, i + 1, i).with_property(
                    "orig",
                    if i == 0 { "rare" } else { "common" },
                )
            })
            .collect();
        let d = ds(records);
        let (hits_common, visited_common) = filter_property_metered(&d, "orig", "common");
        let (hits_rare, visited_rare) = filter_property_metered(&d, "orig", "rare");
        assert_eq!(hits_common.len(), 99);
        assert_eq!(hits_rare.len(), 1);
        assert_eq!(visited_common, 100);
        assert_eq!(visited_rare, visited_common);
    }

    #[test]
    fn regex_property_uses_find_semantics() {
        let d = ds(vec![
            ann("d", "ge", "w", 0, 5, 1).with_property("orig", "heart"),
            ann("d", "ge", "w", 6, 11, 2).with_property("orig", "ahead"),
            ann("d", "ge", "w", 12, 15, 3),
        ]);
        let prefix = Regex::new("^he.*").unwrap();
        assert_eq!(regex_property(&d, "orig", &prefix).len(), 1);
        // Unanchored pattern finds "he" inside "ahead" too.
        let anywhere = Regex::new("he").unwrap();
        assert_eq!(regex_property(&d, "orig", &anywhere).len(), 2);
        // Universal pattern keeps exactly the records having the property.
        let universal = Regex::new("^.*$").unwrap();
        assert_eq!(regex_property(&d, "orig", &universal).len(), 2);
    }

    #[test]
    fn contains_strict_nesting() {
        let a = ds(vec![ann("d", "om", "p", 0, 10, 1)]);
        let b = ds(vec![ann("d", "ge", "w", 2, 5, 1)]);
        assert_eq!(contains(&a, &b).len(), 1);
        assert!(contains(&b, &a).is_empty());
    }

    #[test]
    fn contains_identical_offsets_distinct_annotations() {
        let a = ds(vec![ann("d", "om", "p", 2, 5, 1)]);
        let b = ds(vec![ann("d", "ge", "w", 2, 5, 7)]);
        assert_eq!(contains(&a, &b).len(), 1);
        assert_eq!(contained_in(&a, &b).len(), 1);
    }

    #[test]
    fn contains_never_matches_itself() {
        let x = ds(vec![ann("d", "om", "p", 2, 5, 1)]);
        assert!(contains(&x, &x).is_empty());
        assert!(contained_in(&x, &x).is_empty());
        // With a second nested record, the outer one has a real witness.
        let y = ds(vec![ann("d", "om", "p", 2, 5, 1), ann("d", "om", "p", 3, 4, 2)]);
        assert_eq!(contains(&y, &y).len(), 1);
        assert_eq!(contains(&y, &y).to_records()[0].annot_id, 1);
    }

    #[test]
    fn contained_in_basic_and_cross_document() {
        let a = ds(vec![ann("d1", "ge", "w", 2, 5, 1)]);
        let b_same = ds(vec![ann("d1", "om", "p", 0, 10, 1)]);
        let b_other = ds(vec![ann("d2", "om", "p", 0, 10, 1)]);
        assert_eq!(contained_in(&a, &b_same).len(), 1);
        assert!(contained_in(&a, &b_other).is_empty());
    }

    #[test]
    fn contains_equal_start_run_skips_only_identity() {
        // All witnesses share a's start offset; just one is identical to a.
        let a = ds(vec![ann("d", "om", "p", 2, 9, 1)]);
        let b = ds(vec![
            ann("d", "om", "p", 2, 9, 1),
            ann("d", "om", "p", 2, 7, 2),
        ]);
        assert_eq!(contains(&a, &b).len(), 1);
        let only_self = ds(vec![ann("d", "om", "p", 2, 9, 1)]);
        assert!(contains(&a, &only_self).is_empty());
    }

    #[test]
    fn before_adjacency_counts_overlap_does_not() {
        let a = ds(vec![ann("d", "om", "p", 0, 5, 1)]);
        let adjacent = ds(vec![ann("d", "om", "q", 5, 9, 1)]);
        let overlapping = ds(vec![ann("d", "om", "q", 3, 9, 1)]);
        assert_eq!(before(&a, &adjacent).len(), 1);
        assert!(before(&a, &overlapping).is_empty());
    }

    #[test]
    fn after_mirrors_before() {
        let a = ds(vec![ann("d", "om", "p", 5, 9, 1)]);
        let adjacent = ds(vec![ann("d", "om", "q", 0, 5, 1)]);
        let overlapping = ds(vec![ann("d", "om", "q", 0, 7, 1)]);
        assert_eq!(after(&a, &adjacent).len(), 1);
        assert!(after(&a, &overlapping).is_empty());
    }

    #[test]
    fn between_needs_witnesses_on_both_sides() {
        let c = ds(vec![ann("d", "om", "p", 3, 5, 1)]);
        let a = ds(vec![ann("d", "om", "q", 0, 2, 1)]);
        let b = ds(vec![ann("d", "om", "r", 6, 9, 1)]);
        assert_eq!(between(&c, &a, &b).len(), 1);
        // Same evidence reversed: c is not after b, nor before a.
        assert!(between(&c, &b, &a).is_empty());
    }

    #[test]
    fn sequence_single_pair() {
        let a = ds(vec![ann("d", "om", "p", 0, 3, 1)]);
        let b = ds(vec![ann("d", "om", "q", 5, 9, 2)]);
        let out = sequence(&a, &b, Some(10));
        assert_eq!(out.len(), 1);
        let rec = &out.to_records()[0];
        assert_eq!(
            (rec.start_offset, rec.end_offset),
            (0, 9),
        );
        assert_eq!(rec.annot_set, "aq");
        assert_eq!(rec.annot_type, "seq");
        assert_eq!(rec.doc_id, "d");
        assert!(rec.properties.is_empty());
        // Fresh id: max existing id across both inputs in the doc, plus one.
        assert_eq!(rec.annot_id, 3);
    }

    #[test]
    fn sequence_respects_distance_bound() {
        let a = ds(vec![ann("d", "om", "p", 0, 3, 1)]);
        let b = ds(vec![ann("d", "om", "q", 5, 9, 2)]);
        assert!(sequence(&a, &b, Some(1)).is_empty());
        assert_eq!(sequence(&a, &b, Some(2)).len(), 1);
        assert_eq!(sequence(&a, &b, None).len(), 1);
    }

    #[test]
    fn sequence_ids_follow_canonical_output_order() {
        let a = ds(vec![
            ann("d", "om", "p", 0, 1, 10),
            ann("d", "om", "p", 2, 3, 11),
        ]);
        let b = ds(vec![
            ann("d", "om", "q", 4, 6, 20),
            ann("d", "om", "q", 5, 7, 21),
        ]);
        let out = sequence(&a, &b, None).to_records();
        assert_eq!(out.len(), 4);
        let spans: Vec<(u64, u64, u64)> = out
            .iter()
            .map(|r| (r.start_offset, r.end_offset, r.annot_id))
            .collect();
        assert_eq!(spans, vec![(0, 6, 22), (0, 7, 23), (2, 6, 24), (2, 7, 25)]);
    }

    #[test]
    fn match_property_joins_within_document_only() {
        let a = ds(vec![
            ann("d1", "ge", "w", 0, 5, 1).with_property("orig", "heart"),
            ann("d2", "ge", "w", 0, 5, 1).with_property("orig", "lung"),
        ]);
        let b = ds(vec![
            ann("d1", "ge", "NP", 10, 15, 2).with_property("orig", "heart"),
            ann("d3", "ge", "NP", 0, 5, 1).with_property("orig", "lung"),
        ]);
        let out = match_property(&a, &b, "orig");
        assert_eq!(out.len(), 1);
        assert_eq!(out.to_records()[0].doc_id, "d1");
    }

    #[test]
    fn match_property_requires_the_property_on_both_sides() {
        let a = ds(vec![ann("d", "ge", "w", 0, 5, 1)]);
        let b = ds(vec![ann("d", "ge", "w", 6, 9, 2)]);
        assert!(match_property(&a, &b, "orig").is_empty());
    }

    #[test]
    fn preceding_nearest_first() {
        let a = ds(vec![
            ann("d", "ge", "w", 0, 2, 1),
            ann("d", "ge", "w", 3, 5, 2),
            ann("d", "ge", "w", 6, 9, 3),
        ]);
        let b = ds(vec![ann("d", "ge", "NP", 10, 12, 4)]);
        let out = preceding(&a, &b, 2);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].anchor.annot_id, 4);
        let ids: Vec<u64> = out[0].matches.iter().map(|m| m.annot_id).collect();
        assert_eq!(ids, vec![3, 2]);
    }

    #[test]
    fn preceding_emits_empty_match_anchors() {
        let a = AnnotationDataset::empty();
        let b = ds(vec![
            ann("d1", "ge", "NP", 10, 12, 1),
            ann("d2", "ge", "NP", 0, 2, 1),
        ]);
        let out = preceding(&a, &b, DEFAULT_CNT);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|am| am.matches.is_empty()));
    }

    #[test]
    fn preceding_adjacency_and_tie_order() {
        // Two matches end exactly at the anchor start; ties break by
        // descending start, then ascending annotId.
        let a = ds(vec![
            ann("d", "ge", "w", 0, 10, 5),
            ann("d", "ge", "x", 2, 10, 3),
            ann("d", "ge", "y", 2, 10, 9),
        ]);
        let b = ds(vec![ann("d", "ge", "NP", 10, 12, 1)]);
        let out = preceding(&a, &b, 3);
        let ids: Vec<u64> = out[0].matches.iter().map(|m| m.annot_id).collect();
        assert_eq!(ids, vec![3, 9, 5]);
    }

    #[test]
    fn following_nearest_first() {
        let a = ds(vec![
            ann("d", "ge", "w", 3, 5, 1),
            ann("d", "ge", "w", 6, 9, 2),
            ann("d", "ge", "w", 10, 12, 3),
        ]);
        let b = ds(vec![ann("d", "ge", "NP", 0, 3, 4)]);
        let out = following(&a, &b, 2);
        assert_eq!(out.len(), 1);
        let ids: Vec<u64> = out[0].matches.iter().map(|m| m.annot_id).collect();
        assert_eq!(ids, vec![1, 2]);
    }

    #[test]
    fn following_tie_order() {
        let a = ds(vec![
            ann("d", "ge", "w", 5, 7, 8),
            ann("d", "ge", "x", 5, 7, 2),
            ann("d", "ge", "y", 5, 9, 1),
        ]);
        let b = ds(vec![ann("d", "ge", "NP", 0, 5, 4)]);
        let out = following(&a, &b, 3);
        let ids: Vec<u64> = out[0].matches.iter().map(|m| m.annot_id).collect();
        assert_eq!(ids, vec![2, 8, 1]);
    }

    #[test]
    fn anchors_arrive_in_canonical_order_across_documents() {
        let a = ds(vec![ann("d2", "ge", "w", 0, 2, 1)]);
        let b = ds(vec![
            ann("d2", "ge", "NP", 5, 7, 2),
            ann("d1", "ge", "NP", 5, 7, 1),
        ]);
        let out = preceding(&a, &b, 1);
        assert_eq!(out[0].anchor.doc_id, "d1");
        assert!(out[0].matches.is_empty());
        assert_eq!(out[1].anchor.doc_id, "d2");
        assert_eq!(out[1].matches.len(), 1);
    }

    #[test]
    fn outputs_preserve_canonical_order_and_subset_closure() {
        let a = ds(vec![
            ann("d1", "om", "p", 0, 4, 1),
            ann("d1", "om", "p", 6, 9, 2),
            ann("d2", "om", "p", 1, 3, 1),
        ]);
        let b = ds(vec![
            ann("d1", "ge", "w", 1, 3, 1),
            ann("d2", "ge", "w", 1, 3, 1),
        ]);
        let out = contains(&a, &b);
        let records = out.to_records();
        let mut sorted = records.clone();
        sorted.sort_by(crate::model::canonical_cmp);
        assert_eq!(records, sorted);
        let input: Vec<Annotation> = a.to_records();
        assert!(records.iter().all(|r| input.contains(r)));
    }
}
