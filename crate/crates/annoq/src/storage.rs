//! Bit-exact load/save of annotation datasets as tab-separated text, plus
//! the on-disk corpus layout.
//!
//! One record per line, newline-terminated, with exactly 7 tab-separated
//! fields: docId, annotSet, annotType, startOffset, endOffset, annotId,
//! properties. The properties field holds `key=value` pairs joined by `&`,
//! sorted ascending by key; within keys and values the characters `%`, `&`,
//! `=`, tab, LF, and CR are percent-encoded (`%25 %26 %3D %09 %0A %0D`), so
//! any property text survives a round-trip. An absent or empty property
//! table serializes as an empty 7th field. Lines appear in canonical dataset
//! order, which makes equal datasets serialize to identical bytes.
//!
//! A corpus directory holds one subdirectory per annotation set, named after
//! it, containing any number of `*.tsv` files of that set's records:
//! `<root>/<setName>/<anything>.tsv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::model::{Annotation, AnnotationDataset, DatasetError};
use crate::query::BindingEnv;

/// Default file name for datasets written by [`save_corpus`].
const CORPUS_DATA_FILE: &str = "data.tsv";

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: invalid record: {message}")]
    InvalidRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: record of set \"{found}\" in corpus directory \"{expected}\"")]
    MixedSet {
        path: PathBuf,
        line: usize,
        expected: String,
        found: String,
    },
    #[error("{path}: {source}")]
    Dataset {
        path: PathBuf,
        #[source]
        source: DatasetError,
    },
}

// ---------------------------------------------------------------------------
// Record encoding
// ---------------------------------------------------------------------------

fn encode_component(text: &str, out: &mut String) {
    for ch in text.chars() {
        match ch {
            '%' => out.push_str("%25"),
            '&' => out.push_str("%26"),
            '=' => out.push_str("%3D"),
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            _ => out.push(ch),
        }
    }
}

fn decode_component(text: &str) -> Result<String, String> {
    if !text.contains('%') {
        return Ok(text.to_string());
    }
    let bytes = text.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = bytes
                .get(i + 1..i + 3)
                .ok_or_else(|| format!("truncated percent-escape in \"{text}\""))?;
            let byte = u8::from_str_radix(std::str::from_utf8(hex).map_err(err_escape(text))?, 16)
                .map_err(err_escape(text))?;
            out.push(byte);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| format!("percent-escape decodes to invalid UTF-8 in \"{text}\""))
}

fn err_escape<E>(text: &str) -> impl Fn(E) -> String + '_ {
    move |_| format!("invalid percent-escape in \"{text}\"")
}

/// Serializes the property table: `key=value` pairs joined by `&`, sorted
/// ascending by key, reserved characters percent-encoded.
pub fn encode_properties(properties: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (i, (key, value)) in properties.iter().enumerate() {
        if i > 0 {
            out.push('&');
        }
        encode_component(key, &mut out);
        out.push('=');
        encode_component(value, &mut out);
    }
    out
}

/// Parses a properties field. The empty field is the empty table.
pub fn decode_properties(field: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    if field.is_empty() {
        return Ok(out);
    }
    for pair in field.split('&') {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| format!("property pair \"{pair}\" has no '='"))?;
        if value.contains('=') {
            return Err(format!("property pair \"{pair}\" has more than one '='"));
        }
        out.insert(decode_component(key)?, decode_component(value)?);
    }
    Ok(out)
}

/// One record as a TSV line, without the terminating newline.
pub fn format_record(a: &Annotation) -> String {
    let mut line = String::new();
    write!(
        line,
        "{}\t{}\t{}\t{}\t{}\t{}\t{}",
        a.doc_id,
        a.annot_set,
        a.annot_type,
        a.start_offset,
        a.end_offset,
        a.annot_id,
        encode_properties(&a.properties)
    )
    .expect("writing to a String cannot fail");
    line
}

/// Parses one TSV line into a record. The message of the error names what
/// went wrong; the caller attaches file and line number.
pub fn parse_record(line: &str) -> Result<Annotation, String> {
    if line.contains('\r') {
        return Err("raw carriage return in line (must be percent-encoded)".to_string());
    }
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 7 {
        return Err(format!("expected 7 tab-separated fields, found {}", fields.len()));
    }
    let number = |name: &str, text: &str| -> Result<u64, String> {
        text.parse::<u64>()
            .map_err(|_| format!("{name} \"{text}\" is not a non-negative integer"))
    };
    Ok(Annotation {
        doc_id: fields[0].to_string(),
        annot_set: fields[1].to_string(),
        annot_type: fields[2].to_string(),
        start_offset: number("startOffset", fields[3])?,
        end_offset: number("endOffset", fields[4])?,
        annot_id: number("annotId", fields[5])?,
        properties: decode_properties(fields[6])?,
    })
}

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------

/// The full TSV contents of a dataset, newline-terminated lines in canonical
/// order.
pub fn to_tsv(d: &AnnotationDataset) -> String {
    let mut out = String::new();
    for record in d.iter() {
        out.push_str(&format_record(record));
        out.push('\n');
    }
    out
}

pub fn save_tsv(d: &AnnotationDataset, path: impl AsRef<Path>) -> Result<(), StorageError> {
    let path = path.as_ref();
    fs::write(path, to_tsv(d)).map_err(|source| StorageError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads one TSV file as a normalized dataset. Reports the first problem
/// with its 1-based line number.
pub fn load_tsv(path: impl AsRef<Path>) -> Result<AnnotationDataset, StorageError> {
    let path = path.as_ref();
    let mut records = Vec::new();
    read_records_into(path, None, &mut records)?;
    AnnotationDataset::from_records(records).map_err(|source| StorageError::Dataset {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses and validates each line of `path`, appending the records. When
/// `expected_set` is given, records of any other annotation set are errors
/// (corpus layout invariant).
fn read_records_into(
    path: &Path,
    expected_set: Option<&str>,
    records: &mut Vec<Annotation>,
) -> Result<(), StorageError> {
    let text = fs::read_to_string(path).map_err(|source| StorageError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    collect_records(path, &text, expected_set, records)
}

/// Parses TSV text into a normalized dataset, the inverse of [`to_tsv`].
/// Errors carry the synthetic path `<tsv>` since no file backs the text.
pub fn from_tsv(text: &str, expected_set: Option<&str>) -> Result<AnnotationDataset, StorageError> {
    let path = Path::new("<tsv>");
    let mut records = Vec::new();
    collect_records(path, text, expected_set, &mut records)?;
    AnnotationDataset::from_records(records).map_err(|source| StorageError::Dataset {
        path: path.to_path_buf(),
        source,
    })
}

fn collect_records(
    path: &Path,
    text: &str,
    expected_set: Option<&str>,
    records: &mut Vec<Annotation>,
) -> Result<(), StorageError> {
    for (line, record) in parse_lines(text) {
        let record = record.map_err(|message| StorageError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        })?;
        let violations = record.violations();
        if !violations.is_empty() {
            let parts: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(StorageError::InvalidRecord {
                path: path.to_path_buf(),
                line,
                message: parts.join("; "),
            });
        }
        if let Some(expected) = expected_set {
            if record.annot_set != expected {
                return Err(StorageError::MixedSet {
                    path: path.to_path_buf(),
                    line,
                    expected: expected.to_string(),
                    found: record.annot_set,
                });
            }
        }
        records.push(record);
    }
    Ok(())
}

/// Pairs each data line with its 1-based line number. A single trailing
/// empty segment (the usual final newline) is not a line.
fn parse_lines(text: &str) -> impl Iterator<Item = (usize, Result<Annotation, String>)> + '_ {
    let mut segments: Vec<&str> = text.split('\n').collect();
    if segments.last() == Some(&"") {
        segments.pop();
    }
    segments
        .into_iter()
        .enumerate()
        .map(|(i, line)| (i + 1, parse_record(line)))
}

// ---------------------------------------------------------------------------
// Corpus directories
// ---------------------------------------------------------------------------

/// Loads every set subdirectory of `root` into one binding per set, each the
/// normalized union of that set's `*.tsv` files. An empty root (or one with
/// no subdirectories) yields an empty environment.
pub fn load_corpus(root: impl AsRef<Path>) -> Result<BindingEnv, StorageError> {
    let root = root.as_ref();
    let mut env = BindingEnv::new();
    for (set_name, files) in corpus_layout(root)? {
        let mut records = Vec::new();
        for file in &files {
            read_records_into(file, Some(&set_name), &mut records)?;
        }
        let dataset =
            AnnotationDataset::from_records(records).map_err(|source| StorageError::Dataset {
                path: root.join(&set_name),
                source,
            })?;
        env.bind(set_name, dataset);
    }
    Ok(env)
}

/// Writes each binding of `env` to `<root>/<setName>/data.tsv`, creating
/// directories as needed.
pub fn save_corpus(env: &BindingEnv, root: impl AsRef<Path>) -> Result<(), StorageError> {
    let root = root.as_ref();
    for (name, dataset) in env.iter() {
        let dir = root.join(name);
        fs::create_dir_all(&dir).map_err(|source| StorageError::Io {
            path: dir.clone(),
            source,
        })?;
        save_tsv(dataset, dir.join(CORPUS_DATA_FILE))?;
    }
    Ok(())
}

/// One problem found by [`validate_corpus`], anchored to a file and line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusIssue {
    pub path: PathBuf,
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for CorpusIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.path.display(), self.line, self.message)
    }
}

/// Checks every record of a corpus directory against the parse rules, the
/// per-record invariants, and the one-set-per-directory layout rule,
/// collecting all problems instead of stopping at the first. I/O failures
/// still abort.
pub fn validate_corpus(root: impl AsRef<Path>) -> Result<Vec<CorpusIssue>, StorageError> {
    let root = root.as_ref();
    let mut issues = Vec::new();
    for (set_name, files) in corpus_layout(root)? {
        for file in files {
            let text = fs::read_to_string(&file).map_err(|source| StorageError::Io {
                path: file.clone(),
                source,
            })?;
            for (line, record) in parse_lines(&text) {
                match record {
                    Err(message) => issues.push(CorpusIssue {
                        path: file.clone(),
                        line,
                        message,
                    }),
                    Ok(record) => {
                        for violation in record.violations() {
                            issues.push(CorpusIssue {
                                path: file.clone(),
                                line,
                                message: violation.to_string(),
                            });
                        }
                        if record.annot_set != set_name && !record.annot_set.is_empty() {
                            issues.push(CorpusIssue {
                                path: file.clone(),
                                line,
                                message: format!(
                                    "record of set \"{}\" in corpus directory \"{}\"",
                                    record.annot_set, set_name
                                ),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(issues)
}

/// Set subdirectories of `root` with their `*.tsv` files, both sorted by
/// name for deterministic processing order.
fn corpus_layout(root: &Path) -> Result<Vec<(String, Vec<PathBuf>)>, StorageError> {
    let io_err = |source| StorageError::Io {
        path: root.to_path_buf(),
        source,
    };
    let mut sets = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err)? {
        let entry = entry.map_err(io_err)?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let mut files = Vec::new();
        for file in fs::read_dir(&path).map_err(|source| StorageError::Io {
            path: path.clone(),
            source,
        })? {
            let file = file.map_err(|source| StorageError::Io {
                path: path.clone(),
                source,
            })?;
            let file_path = file.path();
            if file_path.extension().and_then(|e| e.to_str()) == Some("tsv") && file_path.is_file()
            {
                files.push(file_path);
            }
        }
        files.sort();
        sets.push((name.to_string(), files));
    }
    sets.sort();
    Ok(sets)
}
