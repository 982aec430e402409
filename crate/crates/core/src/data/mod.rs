//! JSONL dataset records, synthetic data generation and table-level splits.
//!
//! Each line of a dataset file is one JSON object with these keys (written
//! in sorted order):
//!
//! | key | type |
//! |---|---|
//! | `annotation_status` | optional string, `"ok"` or `"skipped:<reason>"` |
//! | `answers` | list of strings |
//! | `id` | string |
//! | `question` | string |
//! | `relevant_columns` | optional list of column indices |
//! | `relevant_rows` | optional list of row indices |
//! | `sql` | optional string |
//! | `table` | `{"columns": [string], "rows": [[string or number or null]]}` |
//!
//! Unknown keys are kept and written back unchanged.

mod split;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{AnnotationStatus, RelevanceAnnotation};
use crate::table::{Instance, Table};

pub use split::{split_by_table, Split, SplitRatios};
pub use synth::{generate_synthetic, QueryMix, SynthConfig, HEADER_WORDS};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A malformed record, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub question: String,
    pub table: Table,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sql: Option<String>,
    #[serde(default)]
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant_columns: Option<BTreeSet<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant_rows: Option<BTreeSet<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation_status: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl InstanceRecord {
    pub fn from_instance(instance: Instance) -> Self {
        InstanceRecord {
            id: instance.id,
            question: instance.question,
            table: instance.table,
            sql: instance.sql,
            answers: instance.answers,
            relevant_columns: None,
            relevant_rows: None,
            annotation_status: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn instance(&self) -> Instance {
        Instance {
            id: self.id.clone(),
            question: self.question.clone(),
            table: self.table.clone(),
            sql: self.sql.clone(),
            answers: self.answers.clone(),
        }
    }

    /// Stored annotation, if the record carries a parseable status.
    pub fn annotation(&self) -> Option<RelevanceAnnotation> {
        let status = AnnotationStatus::from_label(self.annotation_status.as_deref()?)?;
        Some(RelevanceAnnotation {
            relevant_columns: self.relevant_columns.clone().unwrap_or_default(),
            relevant_rows: self.relevant_rows.clone(),
            status,
        })
    }

    pub fn set_annotation(&mut self, ann: &RelevanceAnnotation) {
        self.annotation_status = Some(ann.status.to_label());
        match ann.status {
            AnnotationStatus::Ok => {
                self.relevant_columns = Some(ann.relevant_columns.clone());
                self.relevant_rows = ann.relevant_rows.clone();
            }
            AnnotationStatus::Skipped(_) => {
                self.relevant_columns = None;
                self.relevant_rows = None;
            }
        }
    }

    /// Canonical single-line JSON with sorted keys.
    pub fn to_json_line(&self) -> String {
        let value = serde_json::to_value(self).expect("records serialize");
        serde_json::to_string(&value).expect("values serialize")
    }
}

pub fn parse_record(line: &str) -> Result<InstanceRecord, String> {
    let record: InstanceRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    record.instance().validate().map_err(|e| e.to_string())?;
    Ok(record)
}

/// Parse JSONL text; blank lines are skipped, malformed lines become
/// errors without stopping the stream.
pub fn parse_jsonl(text: &str) -> Vec<Result<InstanceRecord, RecordError>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_record(l).map_err(|message| RecordError { line: i + 1, message }))
        .collect()
}

/// Streaming reader over a JSONL file.
pub fn read_records(path: &Path) -> Result<impl Iterator<Item = Result<InstanceRecord, RecordError>>, DataError> {
    let reader = BufReader::new(File::open(path)?);
    Ok(reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(parse_record(&l).map_err(|message| RecordError { line: i + 1, message })),
            Err(e) => Some(Err(RecordError {
                line: i + 1,
                message: e.to_string(),
            })),
        }))
}

/// Load a whole file, returning good records and per-line errors.
pub fn load_dataset(path: &Path) -> Result<(Vec<InstanceRecord>, Vec<RecordError>), DataError> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for item in read_records(path)? {
        match item {
            Ok(r) => records.push(r),
            Err(e) => errors.push(e),
        }
    }
    Ok((records, errors))
}

pub fn save_dataset<'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a InstanceRecord>,
) -> Result<(), DataError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        writeln!(w, "{}", r.to_json_line())?;
    }
    w.flush()?;
    Ok(())
}

/// Records with an `ok` annotation, paired with it.
pub fn annotated_pairs(records: &[InstanceRecord]) -> Vec<(Instance, RelevanceAnnotation)> {
    records
        .iter()
        .filter_map(|r| {
            let ann = r.annotation()?;
            (ann.status == AnnotationStatus::Ok).then(|| (r.instance(), ann))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Cell;

    const LINE: &str = r#"{"answers":["Beijing"],"id":"q1","question":"where in 2008?","source":{"split":"dev"},"sql":"select city where year = 2008","table":{"columns":["year","city"],"rows":[[2008,"Beijing"],["2,004","Athens"],[null,"x"]]}}"#;

    #[test]
    fn round_trip_is_byte_stable_and_keeps_extras() {
        let r = parse_record(LINE).unwrap();
        assert_eq!(r.extra["source"]["split"], "dev");
        assert_eq!(r.table.rows()[1][0], Cell::text("2,004"));
        assert_eq!(r.table.rows()[0][0], Cell::Number(2008.0));
        assert_eq!(r.to_json_line(), LINE);
    }

    #[test]
    fn bad_lines_are_reported() {
        let text = format!("{LINE}\n{{not json\n\n{LINE}\n{}\n", r#"{"id":"x","question":"q","table":{"columns":["a","a"],"rows":[]}}"#);
        let parsed = parse_jsonl(&text);
        assert_eq!(parsed.len(), 4);
        assert!(parsed[0].is_ok() && parsed[2].is_ok());
        assert_eq!(parsed[1].as_ref().unwrap_err().line, 2);
        assert_eq!(parsed[3].as_ref().unwrap_err().line, 5);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut r = parse_record(LINE).unwrap();
        r.set_annotation(&RelevanceAnnotation {
            relevant_columns: [0, 1].into(),
            relevant_rows: Some([0].into()),
            status: AnnotationStatus::Ok,
        });
        let records = vec![r.clone(), parse_record(LINE).unwrap()];
        save_dataset(&path, &records).unwrap();
        let (back, errors) = load_dataset(&path).unwrap();
        assert!(errors.is_empty());
        assert_eq!(back, records);
        assert_eq!(back[0].annotation().unwrap().relevant_rows, Some([0].into()));
        assert_eq!(annotated_pairs(&back).len(), 1);
        let text = std::fs::read_to_string(&path).unwrap();
        save_dataset(&path, &back).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
    }
}
