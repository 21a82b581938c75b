//! Parsing of raw attempt logs.
//!
//! Two input formats share one schema: comma-separated text with a header
//! row, and JSON lines with the same field names. Rows that break a record
//! invariant are rejected individually and listed in the [`IngestReport`];
//! a header without one of the required columns aborts the parse.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::model::{AttemptRecord, RecordError};

pub const COLUMNS: [&str; 7] =
    ["student_id", "question_id", "correct", "difficulty", "knowledge_raw", "ability_raw", "duration"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    /// 1-based line number in the source file.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: usize,
    pub rejections: Vec<Rejection>,
}

impl IngestReport {
    fn reject(&mut self, line: u64, reason: impl Into<String>) {
        self.rejected += 1;
        self.rejections.push(Rejection { line, reason: reason.into() });
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed input: {0}")]
    Read(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    JsonLines,
}

impl InputFormat {
    /// `.jsonl` / `.ndjson` are JSON lines, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("jsonl") || ext.eq_ignore_ascii_case("ndjson") => {
                InputFormat::JsonLines
            }
            _ => InputFormat::Csv,
        }
    }
}

pub type Parsed = (Vec<AttemptRecord>, IngestReport);

pub fn parse_attempts_path(path: &Path) -> Result<Parsed, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io { path: path.to_owned(), source })?;
    match InputFormat::from_path(path) {
        InputFormat::Csv => parse_attempts_csv(file),
        InputFormat::JsonLines => parse_attempts_jsonl(BufReader::new(file)),
    }
}

struct RawRow<'a> {
    fields: [Option<&'a str>; 7],
}

fn parse_u8(field: &str) -> Option<u8> {
    let t = field.trim();
    t.parse::<u8>().ok().or_else(|| {
        // Some exports write integers as `1.0`.
        t.parse::<f64>().ok().filter(|v| v.fract() == 0.0 && (0.0..=255.0).contains(v)).map(|v| v as u8)
    })
}

fn build_record(row: RawRow<'_>) -> Result<AttemptRecord, String> {
    let get = |i: usize| row.fields[i].ok_or_else(|| format!("missing {}", COLUMNS[i]));
    let student = get(0)?.trim();
    let question = get(1)?.trim();
    if student.is_empty() {
        return Err("empty student_id".into());
    }
    if question.is_empty() {
        return Err("empty question_id".into());
    }
    let correct = parse_u8(get(2)?).ok_or("correct out of range")?;
    let difficulty = parse_u8(get(3)?).ok_or("difficulty out of range")?;
    let duration: f64 = get(6)?.trim().parse().map_err(|_| "non-numeric duration".to_owned())?;
    AttemptRecord::new(student, question, correct, difficulty, get(4)?.trim(), get(5)?.trim(), duration).map_err(|e| {
        match e {
            RecordError::NonFiniteDuration => "non-numeric duration".to_owned(),
            e => e.to_string(),
        }
    })
}

/// Parses comma-separated attempts with a header row.
pub fn parse_attempts_csv<R: Read>(reader: R) -> Result<Parsed, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| IngestError::Read(e.to_string()))?.clone();
    let mut positions = [0usize; 7];
    for (slot, col) in positions.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim().trim_start_matches('\u{feff}') == col)
            .ok_or(IngestError::MissingColumn(col))?;
    }

    let mut records = Vec::new();
    let mut report = IngestReport::default();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line());
                let row = RawRow { fields: positions.map(|p| record.get(p)) };
                match build_record(row) {
                    Ok(r) => {
                        report.accepted += 1;
                        records.push(r);
                    }
                    Err(reason) => report.reject(line, reason),
                }
            }
            Err(e) => {
                // Invalid UTF-8 and similar row-level faults reject the row.
                let line = e.position().map_or(0, |p| p.line());
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    return Err(IngestError::Read(e.to_string()));
                }
                report.reject(line, format!("unreadable row: {e}"));
            }
        }
    }
    Ok((records, report))
}

fn json_field(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(u8::from(*b).to_string()),
        _ => None,
    }
}

/// Parses JSON-lines attempts. Blank lines are skipped and not counted.
pub fn parse_attempts_jsonl<R: BufRead>(reader: R) -> Result<Parsed, IngestError> {
    let mut records = Vec::new();
    let mut report = IngestReport::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| IngestError::Read(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let obj = match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(serde_json::Value::Object(m)) => m,
            Ok(_) => {
                report.reject(line_no, "not a JSON object");
                continue;
            }
            Err(e) => {
                report.reject(line_no, format!("invalid JSON: {e}"));
                continue;
            }
        };
        let owned: Vec<Option<String>> = COLUMNS.iter().map(|c| obj.get(*c).and_then(json_field)).collect();
        let mut fields = [None; 7];
        for (slot, v) in fields.iter_mut().zip(&owned) {
            *slot = v.as_deref();
        }
        match build_record(RawRow { fields }) {
            Ok(r) => {
                report.accepted += 1;
                records.push(r);
            }
            Err(reason) => report.reject(line_no, reason),
        }
    }
    Ok((records, report))
}
