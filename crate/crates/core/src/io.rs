//! SVMlight datasets, JSON-lines competition logs and the label mappings used
//! when importing annotated competition data.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{GradedDataset, GradedDoc};
use crate::domain::{CompetitionLog, DocumentSnapshot, FeatureVector};
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Version tag written on every JSONL line.
pub const LOG_SCHEMA_VERSION: u32 = 1;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Parses `<grade> qid:<q> <idx>:<val> ... [# comment]` lines.
///
/// Indices are 1-based and strictly ascending; missing ones are zero. The
/// dimension is the largest index seen unless `dim` fixes it. A non-empty
/// comment becomes the document id, otherwise `<qid>-L<line>` is used. Blank
/// and comment-only lines are skipped.
pub fn parse_svmlight_str<T: Scalar>(text: &str, dim: Option<usize>) -> Result<GradedDataset<T>> {
    struct Row {
        line: usize,
        grade: u8,
        qid: String,
        doc_id: String,
        entries: Vec<(usize, f64)>,
    }

    let mut rows = Vec::new();
    let mut max_index = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let (body, comment) = match raw.split_once('#') {
            Some((b, c)) => (b, Some(c.trim())),
            None => (raw, None),
        };
        let mut tokens = body.split_whitespace();
        let Some(grade_tok) = tokens.next() else { continue };
        let grade: u8 = grade_tok.parse().map_err(|_| parse_err(line, format!("bad grade `{grade_tok}`")))?;
        let qid = tokens
            .next()
            .and_then(|t| t.strip_prefix("qid:"))
            .filter(|q| !q.is_empty())
            .ok_or_else(|| parse_err(line, "expected `qid:<id>` after the grade"))?
            .to_string();
        let mut entries = Vec::new();
        let mut last = 0;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| parse_err(line, format!("expected `idx:val`, got `{tok}`")))?;
            let idx: usize = idx.parse().map_err(|_| parse_err(line, format!("bad feature index `{idx}`")))?;
            if idx == 0 {
                return Err(parse_err(line, "feature indices are 1-based"));
            }
            if idx <= last {
                return Err(parse_err(line, format!("feature index {idx} does not follow {last}")));
            }
            let val: f64 = val.parse().map_err(|_| parse_err(line, format!("bad feature value `{val}`")))?;
            if !val.is_finite() {
                return Err(parse_err(line, format!("non-finite feature value `{val}`")));
            }
            if let Some(m) = dim {
                if idx > m {
                    return Err(parse_err(line, format!("feature index {idx} exceeds dimension {m}")));
                }
            }
            last = idx;
            entries.push((idx, val));
        }
        max_index = max_index.max(last);
        let doc_id = match comment {
            Some(c) if !c.is_empty() => c.to_string(),
            _ => format!("{qid}-L{line}"),
        };
        rows.push(Row { line, grade, qid, doc_id, entries });
    }

    let m = dim.unwrap_or(max_index);
    let mut seen = std::collections::HashSet::new();
    let mut docs = Vec::with_capacity(rows.len());
    for row in rows {
        if !seen.insert(row.doc_id.clone()) {
            return Err(parse_err(row.line, format!("duplicate document id `{}`", row.doc_id)));
        }
        let mut dense = vec![0.0; m];
        for (idx, v) in row.entries {
            dense[idx - 1] = v;
        }
        docs.push(GradedDoc { query_id: row.qid, doc_id: row.doc_id, grade: row.grade, features: FeatureVector::from_f64(&dense) });
    }
    GradedDataset::new(docs)
}

pub fn parse_svmlight<T: Scalar>(path: impl AsRef<Path>, dim: Option<usize>) -> Result<GradedDataset<T>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_svmlight_str(&text, dim)
}

/// Writes every feature explicitly with the document id as the comment, so
/// parsing the output reproduces the dataset.
pub fn write_svmlight<T: Scalar, W: Write>(dataset: &GradedDataset<T>, mut out: W) -> Result<()> {
    for d in &dataset.docs {
        if d.query_id.is_empty() || d.query_id.chars().any(|c| c.is_whitespace() || c == '#') {
            return Err(invalid(format!("query id `{}` cannot be written as SVMlight", d.query_id)));
        }
        if d.doc_id.trim() != d.doc_id || d.doc_id.is_empty() || d.doc_id.contains(['\n', '\r']) {
            return Err(invalid(format!("document id `{}` cannot be written as SVMlight", d.doc_id)));
        }
        write!(out, "{} qid:{}", d.grade, d.query_id)?;
        for (i, v) in d.features.as_slice().iter().enumerate() {
            write!(out, " {}:{}", i + 1, v)?;
        }
        writeln!(out, " # {}", d.doc_id)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_svmlight_file<T: Scalar>(dataset: &GradedDataset<T>, path: impl AsRef<Path>) -> Result<()> {
    write_svmlight(dataset, BufWriter::new(File::create(path)?))
}

/// Quality score of a document given `k` keyword-stuffing and `s` spam
/// labels out of five annotators: `100 − 20(k + s)`, or 100 for the example
/// relevant documents.
pub fn quality_feature_score(k: u32, s: u32, is_example_relevant: bool) -> Result<f64> {
    if k + s > 5 {
        return Err(invalid(format!("k + s must be at most 5, got {k} + {s}")));
    }
    if is_example_relevant {
        return Ok(100.0);
    }
    Ok(100.0 - 20.0 * f64::from(k + s))
}

/// Graded relevance from the number of annotators (of five) who marked the
/// document relevant: 0–2 → 0, 3 → 1, 4 → 2, 5 → 3.
pub fn relevance_grade(relevant_label_count: u32) -> Result<u8> {
    match relevant_label_count {
        0..=2 => Ok(0),
        3 => Ok(1),
        4 => Ok(2),
        5 => Ok(3),
        n => Err(invalid(format!("relevant label count must be in 0..=5, got {n}"))),
    }
}

/// Binary relevance: at least three annotators said relevant.
pub fn is_relevant(grade: u8) -> bool {
    grade >= 1
}

#[derive(Serialize)]
#[serde(bound = "T: Scalar")]
struct LogLineOut<'a, T: Scalar> {
    schema: u32,
    #[serde(flatten)]
    snapshot: &'a DocumentSnapshot<T>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct LogLineIn<T: Scalar> {
    schema: u32,
    #[serde(flatten)]
    snapshot: DocumentSnapshot<T>,
}

/// One snapshot object per line, each tagged with [`LOG_SCHEMA_VERSION`].
pub fn write_log_jsonl<T: Scalar, W: Write>(log: &CompetitionLog<T>, mut out: W) -> Result<()> {
    for s in &log.snapshots {
        serde_json::to_writer(&mut out, &LogLineOut { schema: LOG_SCHEMA_VERSION, snapshot: s })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_log_jsonl<T: Scalar, R: BufRead>(input: R) -> Result<CompetitionLog<T>> {
    let mut snapshots = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLineIn<T> = serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        if parsed.schema != LOG_SCHEMA_VERSION {
            return Err(parse_err(i + 1, format!("unsupported schema version {}", parsed.schema)));
        }
        snapshots.push(parsed.snapshot);
    }
    CompetitionLog::new(snapshots)
}

pub fn write_log_file<T: Scalar>(log: &CompetitionLog<T>, path: impl AsRef<Path>) -> Result<()> {
    write_log_jsonl(log, BufWriter::new(File::create(path)?))
}

pub fn read_log_file<T: Scalar>(path: impl AsRef<Path>) -> Result<CompetitionLog<T>> {
    read_log_jsonl(BufReader::new(File::open(path)?))
}
