//! Annotation records and the immutable dataset container every query
//! operator consumes and produces.
//!
//! An [`Annotation`] labels a region of a source document. Regions are
//! addressed by character-gap offsets, so `end_offset - start_offset` is the
//! region length; zero-length regions are allowed, negative lengths are not.
//!
//! [`AnnotationDataset`] is an ordered, immutable collection of annotations.
//! Internally it is a list of per-document views into shared record storage:
//! operators select indices out of a shared base instead of copying records,
//! which keeps filter output proportional to an index write rather than a
//! record clone. Record storage is only rebuilt when a dataset is constructed
//! from raw records or when brand-new annotations are synthesized.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

/// One stand-off region over a document, with set/type labels and an
/// optional property table (an empty table means "no properties").
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Annotation {
    pub doc_id: String,
    pub annot_set: String,
    pub annot_type: String,
    pub start_offset: u64,
    pub end_offset: u64,
    pub annot_id: u64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub properties: BTreeMap<String, String>,
}

impl Annotation {
    pub fn new(
        doc_id: impl Into<String>,
        annot_set: impl Into<String>,
        annot_type: impl Into<String>,
        start_offset: u64,
        end_offset: u64,
        annot_id: u64,
    ) -> Self {
        Annotation {
            doc_id: doc_id.into(),
            annot_set: annot_set.into(),
            annot_type: annot_type.into(),
            start_offset,
            end_offset,
            annot_id,
            properties: BTreeMap::new(),
        }
    }

    pub fn with_property(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.properties.insert(name.into(), value.into());
        self
    }

    /// Region length in characters.
    pub fn len(&self) -> u64 {
        self.end_offset.saturating_sub(self.start_offset)
    }

    /// True for zero-length regions (start and end coincide).
    pub fn is_empty(&self) -> bool {
        self.start_offset == self.end_offset
    }

    /// Property lookup; records without the property simply don't match.
    pub fn property(&self, name: &str) -> Option<&str> {
        self.properties.get(name).map(String::as_str)
    }

    /// Checks every per-record invariant and returns one entry per violation.
    /// Violations are data, not failures: an empty list means the record is
    /// well formed.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.doc_id.is_empty() {
            out.push(Violation::EmptyField { field: "docId" });
        }
        if self.annot_set.is_empty() {
            out.push(Violation::EmptyField { field: "annotSet" });
        }
        if self.annot_type.is_empty() {
            out.push(Violation::EmptyField { field: "annotType" });
        }
        if self.annot_set.chars().any(|c| c.is_uppercase()) {
            out.push(Violation::AnnotSetNotLowercase);
        }
        for (field, value) in [
            ("docId", &self.doc_id),
            ("annotSet", &self.annot_set),
            ("annotType", &self.annot_type),
        ] {
            if value.contains(['\t', '\n', '\r']) {
                out.push(Violation::ControlCharacter { field });
            }
        }
        if self.end_offset < self.start_offset {
            out.push(Violation::NegativeLength {
                start_offset: self.start_offset,
                end_offset: self.end_offset,
            });
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.violations().is_empty()
    }

    /// Identity as used by the containment operators: a record never matches
    /// itself. Properties are deliberately not part of identity.
    pub fn same_identity(&self, other: &Annotation) -> bool {
        self.annot_id == other.annot_id
            && self.start_offset == other.start_offset
            && self.end_offset == other.end_offset
            && self.doc_id == other.doc_id
            && self.annot_set == other.annot_set
            && self.annot_type == other.annot_type
    }
}

/// Canonical dataset order: ascending by
/// (docId, startOffset, endOffset, annotSet, annotType, annotId).
pub fn canonical_cmp(a: &Annotation, b: &Annotation) -> Ordering {
    a.doc_id
        .cmp(&b.doc_id)
        .then_with(|| a.start_offset.cmp(&b.start_offset))
        .then_with(|| a.end_offset.cmp(&b.end_offset))
        .then_with(|| a.annot_set.cmp(&b.annot_set))
        .then_with(|| a.annot_type.cmp(&b.annot_type))
        .then_with(|| a.annot_id.cmp(&b.annot_id))
}

/// A single invariant breach on one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyField { field: &'static str },
    AnnotSetNotLowercase,
    ControlCharacter { field: &'static str },
    NegativeLength { start_offset: u64, end_offset: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyField { field } => write!(f, "{field} must not be empty"),
            Violation::AnnotSetNotLowercase => write!(f, "annotSet must be lowercase"),
            Violation::ControlCharacter { field } => {
                write!(f, "{field} contains tab, newline, or carriage return")
            }
            Violation::NegativeLength {
                start_offset,
                end_offset,
            } => write!(
                f,
                "negative length: endOffset {end_offset} < startOffset {start_offset}"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("invalid record at position {index}: {}", format_violations(.violations))]
    InvalidRecord {
        index: usize,
        violations: Vec<Violation>,
    },
    #[error("annotId {annot_id} is not unique within document {doc_id}")]
    DuplicateAnnotId { doc_id: String, annot_id: u64 },
}

fn format_violations(violations: &[Violation]) -> String {
    let parts: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
    parts.join("; ")
}

// ---------------------------------------------------------------------------
// Dataset storage
// ---------------------------------------------------------------------------

/// Shared record storage behind one or more datasets: the canonically
/// ordered records plus dictionary-encoded annotSet / annotType columns.
/// Label filters compare the u32 codes instead of the strings, so a scan
/// costs the same per record no matter which label is probed or how many
/// records carry it.
#[derive(Debug)]
pub(crate) struct BaseStore {
    pub(crate) records: Vec<Annotation>,
    pub(crate) set_codes: Vec<u32>,
    pub(crate) type_codes: Vec<u32>,
    set_names: Vec<String>,
    type_names: Vec<String>,
}

impl BaseStore {
    fn new(records: Vec<Annotation>) -> Self {
        let mut set_names: Vec<String> = Vec::new();
        let mut type_names: Vec<String> = Vec::new();
        let mut set_codes = Vec::with_capacity(records.len());
        let mut type_codes = Vec::with_capacity(records.len());
        for record in &records {
            set_codes.push(intern(&mut set_names, &record.annot_set));
            type_codes.push(intern(&mut type_names, &record.annot_type));
        }
        BaseStore {
            records,
            set_codes,
            type_codes,
            set_names,
            type_names,
        }
    }

    /// Dictionary code of a set name; `None` when no record uses it.
    pub(crate) fn set_code_of(&self, name: &str) -> Option<u32> {
        self.set_names.iter().position(|n| n == name).map(|p| p as u32)
    }

    /// Dictionary code of a type name; `None` when no record uses it.
    pub(crate) fn type_code_of(&self, name: &str) -> Option<u32> {
        self.type_names.iter().position(|n| n == name).map(|p| p as u32)
    }
}

/// Code of `value` in the dictionary, extending it on first sight.
fn intern(names: &mut Vec<String>, value: &str) -> u32 {
    match names.iter().position(|n| n == value) {
        Some(pos) => pos as u32,
        None => {
            names.push(value.to_owned());
            (names.len() - 1) as u32
        }
    }
}

/// Which records of a shared base a run selects.
#[derive(Debug, Clone)]
pub(crate) enum Selection {
    /// Contiguous base index range `[start, end)`.
    Range(u32, u32),
    /// Explicit base indices, in order.
    Picks(Vec<u32>),
}

impl Selection {
    fn len(&self) -> usize {
        match self {
            Selection::Range(s, e) => (e - s) as usize,
            Selection::Picks(v) => v.len(),
        }
    }
}

/// All selected records of one document. Every record of a run shares the
/// same `doc_id`, and a dataset's runs are strictly ascending by document.
#[derive(Debug, Clone)]
pub(crate) struct DocRun {
    pub(crate) base: Arc<BaseStore>,
    pub(crate) sel: Selection,
}

impl DocRun {
    pub(crate) fn doc_id(&self) -> &str {
        &self.base.records[match &self.sel {
            Selection::Range(s, _) => *s as usize,
            Selection::Picks(v) => v[0] as usize,
        }]
        .doc_id
    }

    pub(crate) fn len(&self) -> usize {
        self.sel.len()
    }

    pub(crate) fn view(&self) -> DocView<'_> {
        DocView {
            records: &self.base.records,
            set_codes: &self.base.set_codes,
            type_codes: &self.base.type_codes,
            sel: match &self.sel {
                Selection::Range(s, e) => SelView::Range(*s, *e),
                Selection::Picks(v) => SelView::Picks(v),
            },
        }
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = &Annotation> {
        self.view().into_iter()
    }
}

/// Borrowed view of one document's records, the unit the per-document
/// operator kernels work on.
#[derive(Clone, Copy)]
pub(crate) struct DocView<'a> {
    records: &'a [Annotation],
    set_codes: &'a [u32],
    type_codes: &'a [u32],
    sel: SelView<'a>,
}

#[derive(Clone, Copy)]
pub(crate) enum SelView<'a> {
    Range(u32, u32),
    Picks(&'a [u32]),
}

impl<'a> DocView<'a> {
    pub(crate) fn empty() -> DocView<'static> {
        DocView {
            records: &[],
            set_codes: &[],
            type_codes: &[],
            sel: SelView::Range(0, 0),
        }
    }

    pub(crate) fn len(&self) -> usize {
        match self.sel {
            SelView::Range(s, e) => (e - s) as usize,
            SelView::Picks(v) => v.len(),
        }
    }

    #[inline]
    fn base_index(&self, i: usize) -> usize {
        match self.sel {
            SelView::Range(s, _) => s as usize + i,
            SelView::Picks(v) => v[i] as usize,
        }
    }

    #[inline]
    pub(crate) fn get(&self, i: usize) -> &'a Annotation {
        &self.records[self.base_index(i)]
    }

    /// Dictionary code of the i-th record's annotSet.
    #[inline]
    pub(crate) fn set_code(&self, i: usize) -> u32 {
        self.set_codes[self.base_index(i)]
    }

    /// Dictionary code of the i-th record's annotType.
    #[inline]
    pub(crate) fn type_code(&self, i: usize) -> u32 {
        self.type_codes[self.base_index(i)]
    }

    /// Base index of the i-th selected record, for building output picks.
    #[inline]
    pub(crate) fn src_index(&self, i: usize) -> u32 {
        match self.sel {
            SelView::Range(s, _) => s + i as u32,
            SelView::Picks(v) => v[i],
        }
    }
}

impl<'a> IntoIterator for DocView<'a> {
    type Item = &'a Annotation;
    type IntoIter = DocViewIter<'a>;

    fn into_iter(self) -> Self::IntoIter {
        DocViewIter { view: self, pos: 0 }
    }
}

pub(crate) struct DocViewIter<'a> {
    view: DocView<'a>,
    pos: usize,
}

impl<'a> Iterator for DocViewIter<'a> {
    type Item = &'a Annotation;

    #[inline]
    fn next(&mut self) -> Option<&'a Annotation> {
        if self.pos < self.view.len() {
            let item = self.view.get(self.pos);
            self.pos += 1;
            Some(item)
        } else {
            None
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = self.view.len() - self.pos;
        (rest, Some(rest))
    }
}

// ---------------------------------------------------------------------------
// AnnotationDataset
// ---------------------------------------------------------------------------

/// Immutable ordered collection of annotations, the operand type of every
/// query operator. Records are kept in canonical order; operators return new
/// datasets that share record storage with their inputs.
#[derive(Debug, Clone, Default)]
pub struct AnnotationDataset {
    runs: Vec<DocRun>,
    len: usize,
}

impl AnnotationDataset {
    pub fn empty() -> Self {
        AnnotationDataset::default()
    }

    /// Builds a dataset from raw records: validates each record, sorts into
    /// canonical order, and drops full duplicates (all seven fields equal).
    /// The construction is idempotent: feeding a dataset's records back in
    /// reproduces it exactly.
    ///
    /// Fails on the first invalid record (reported with its position in the
    /// input) and on annotId collisions within a document.
    pub fn from_records(records: Vec<Annotation>) -> Result<Self, DatasetError> {
        for (index, record) in records.iter().enumerate() {
            let violations = record.violations();
            if !violations.is_empty() {
                return Err(DatasetError::InvalidRecord { index, violations });
            }
        }
        let mut records = records;
        records.sort_by(canonical_cmp);
        records.dedup();

        // annotId must be unique among the records of one document.
        let mut ids: Vec<u64> = Vec::new();
        let mut start = 0;
        while start < records.len() {
            let doc_id = &records[start].doc_id;
            let mut end = start + 1;
            while end < records.len() && records[end].doc_id == *doc_id {
                end += 1;
            }
            ids.clear();
            ids.extend(records[start..end].iter().map(|r| r.annot_id));
            ids.sort_unstable();
            if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
                return Err(DatasetError::DuplicateAnnotId {
                    doc_id: doc_id.clone(),
                    annot_id: w[0],
                });
            }
            start = end;
        }

        Ok(Self::from_base(records))
    }

    /// Wraps an already canonically ordered, validated record vector.
    pub(crate) fn from_base(records: Vec<Annotation>) -> Self {
        let base = Arc::new(BaseStore::new(records));
        let records = &base.records;
        let mut runs = Vec::new();
        let mut len = 0;
        let mut start = 0;
        while start < records.len() {
            let doc_id = &records[start].doc_id;
            let mut end = start + 1;
            while end < records.len() && records[end].doc_id == *doc_id {
                end += 1;
            }
            runs.push(DocRun {
                base: Arc::clone(&base),
                sel: Selection::Range(start as u32, end as u32),
            });
            len += end - start;
            start = end;
        }
        AnnotationDataset { runs, len }
    }

    /// Assembles a dataset from per-document runs. Runs must be non-empty
    /// and strictly ascending by document id.
    pub(crate) fn from_runs(runs: Vec<DocRun>) -> Self {
        let len = runs.iter().map(DocRun::len).sum();
        AnnotationDataset { runs, len }
    }

    pub(crate) fn runs(&self) -> &[DocRun] {
        &self.runs
    }

    pub(crate) fn into_runs(self) -> Vec<DocRun> {
        self.runs
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of distinct documents with at least one record.
    pub fn doc_count(&self) -> usize {
        self.runs.len()
    }

    /// Records in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = &Annotation> {
        self.runs.iter().flat_map(|run| run.iter())
    }

    /// Clones the records out into a plain vector, in canonical order.
    pub fn to_records(&self) -> Vec<Annotation> {
        let mut out = Vec::with_capacity(self.len);
        out.extend(self.iter().cloned());
        out
    }

    /// Collection statistics: totals, distinct documents, and per
    /// (annotSet, annotType) counts.
    pub fn stats(&self) -> DatasetStats {
        let mut by_set_type: BTreeMap<(String, String), u64> = BTreeMap::new();
        for record in self.iter() {
            *by_set_type
                .entry((record.annot_set.clone(), record.annot_type.clone()))
                .or_insert(0) += 1;
        }
        DatasetStats {
            total: self.len as u64,
            doc_count: self.runs.len() as u64,
            by_set_type,
        }
    }
}

impl PartialEq for AnnotationDataset {
    /// Record-for-record equality in canonical order.
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.iter().eq(other.iter())
    }
}

impl Eq for AnnotationDataset {}

impl FromIterator<Annotation> for Result<AnnotationDataset, DatasetError> {
    fn from_iter<T: IntoIterator<Item = Annotation>>(iter: T) -> Self {
        AnnotationDataset::from_records(iter.into_iter().collect())
    }
}

/// Table-style aggregates over one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetStats {
    pub total: u64,
    pub doc_count: u64,
    pub by_set_type: BTreeMap<(String, String), u64>,
}
