//! Batch report generation and persistence.
//!
//! For each requested student the stored tag vector is rendered into a
//! prompt and sent through the gateway. Each report lands in
//! `report_<id>.md`; everything that varies between runs (timestamps,
//! timing, usage) goes to the `report_<id>.meta.json` sidecar so the
//! markdown stays byte-stable under the mock backend.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::gateway::{CompletionParams, CompletionResult, FinishReason, Gateway, GatewayError, TokenUsage};
use crate::model::{AttemptRecord, StudentId, TagId, TagSet, TAG_COUNT};
use crate::parallel::Exec;
use crate::preprocess::{self, CategoryMapping, MappingError, UnmappedReport};
use crate::promptgen::{render_prompt, PromptTemplate, StudentTagDataset};
use crate::tagger;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagSnapshot {
    pub flags: Vec<u8>,
    pub set: Vec<TagId>,
}

impl TagSnapshot {
    pub fn of(tags: &TagSet) -> Self {
        TagSnapshot { flags: tags.to_flags().to_vec(), set: tags.iter().collect() }
    }

    pub fn to_tagset(&self) -> Option<TagSet> {
        (self.flags.len() == TAG_COUNT).then(|| TagSet::from_flags(&self.flags).ok()).flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentReport {
    pub student_id: StudentId,
    pub tags: TagSnapshot,
    pub prompt: String,
    pub completion: String,
    pub generated_at: String,
    pub backend: String,
    pub params: CompletionParams,
    pub finish_reason: FinishReason,
    pub truncated: bool,
    pub retries: u32,
    pub usage: TokenUsage,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BatchFailure {
    pub student_id: StudentId,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct BatchOutcome {
    /// Reports in student-id order.
    pub reports: Vec<StudentReport>,
    pub failures: Vec<BatchFailure>,
    pub written: Vec<PathBuf>,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// File-name-safe form of a student id.
pub fn file_stem(id: &StudentId) -> String {
    let cleaned: String =
        id.as_str().chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    format!("report_{cleaned}")
}

pub fn report_paths(out_dir: &Path, id: &StudentId) -> (PathBuf, PathBuf) {
    let stem = file_stem(id);
    (out_dir.join(format!("{stem}.md")), out_dir.join(format!("{stem}.meta.json")))
}

fn write(path: &Path, contents: &[u8]) -> Result<(), ReportError> {
    std::fs::write(path, contents).map_err(|source| ReportError::Io { path: path.to_owned(), source })
}

fn build_report(
    id: StudentId,
    tags: &TagSet,
    prompt: String,
    res: CompletionResult,
    backend: &str,
    params: &CompletionParams,
    elapsed_ms: u64,
) -> StudentReport {
    StudentReport {
        student_id: id,
        tags: TagSnapshot::of(tags),
        prompt,
        truncated: res.is_truncated(),
        completion: res.text,
        generated_at: chrono::Utc::now().to_rfc3339(),
        backend: backend.to_owned(),
        params: params.clone(),
        finish_reason: res.finish_reason,
        retries: res.retries,
        usage: res.usage,
        elapsed_ms,
    }
}

/// Generates reports for `students` (deduplicated, sorted by id).
///
/// Per-student problems (unknown id, invalid tags, backend errors) become
/// failure entries; only output I/O aborts the batch. A truncated
/// completion is still written, with `truncated: true` in the sidecar.
pub fn generate_batch(
    students: &[StudentId],
    dataset: &StudentTagDataset,
    template: &PromptTemplate,
    gateway: &Gateway,
    params: &CompletionParams,
    out_dir: Option<&Path>,
) -> Result<BatchOutcome, ReportError> {
    let ordered: BTreeSet<&StudentId> = students.iter().collect();
    let mut outcome = BatchOutcome::default();
    let mut jobs: Vec<((StudentId, TagSet), String)> = Vec::new();
    for id in ordered {
        let prepared = dataset.get_student_tags(id).and_then(|tags| render_prompt(&tags, template).map(|p| (tags, p)));
        match prepared {
            Ok((tags, prompt)) => jobs.push(((id.clone(), tags), prompt)),
            Err(e) => outcome.failures.push(BatchFailure { student_id: id.clone(), error: e.to_string() }),
        }
    }

    let started = Instant::now();
    let results = gateway.complete_batch(&jobs, params);
    let elapsed_ms = started.elapsed().as_millis() as u64;
    for (((id, tags), res), (_, prompt)) in results.into_iter().zip(jobs) {
        let res = match res {
            Ok(r) => r,
            Err(GatewayError::Truncated(partial)) => {
                log::warn!("report for {id} was truncated at max_tokens");
                *partial
            }
            Err(e) => {
                outcome.failures.push(BatchFailure { student_id: id, error: e.to_string() });
                continue;
            }
        };
        outcome.reports.push(build_report(id, &tags, prompt, res, gateway.backend_name(), params, elapsed_ms));
    }
    outcome.failures.sort_by(|a, b| a.student_id.cmp(&b.student_id));

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_owned(), source })?;
        for r in &outcome.reports {
            let (md, meta) = report_paths(dir, &r.student_id);
            let mut text = r.completion.clone();
            if !text.ends_with('\n') {
                text.push('\n');
            }
            write(&md, text.as_bytes())?;
            let json = serde_json::to_vec_pretty(r).expect("report serializes");
            write(&meta, &json)?;
            outcome.written.push(md);
            outcome.written.push(meta);
        }
    }
    Ok(outcome)
}

/// Counts from running the tag pipeline on raw attempts.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub input_records: usize,
    pub after_dedup: usize,
    pub clean_attempts: usize,
    pub students: usize,
    pub unmapped: UnmappedReport,
}

/// Raw attempts to the `student_tag` dataset: dedup, mapping, tagging.
pub fn dataset_from_attempts(
    records: &[AttemptRecord],
    mapping: &CategoryMapping,
    cfg: &PipelineConfig,
    exec: Exec,
) -> Result<(StudentTagDataset, PipelineSummary), MappingError> {
    let deduped = preprocess::dedup_attempts(records);
    let (clean, unmapped) = preprocess::apply_mapping(&deduped, mapping)?;
    let tags = tagger::tag_cohort_with(exec, &clean, cfg);
    let summary = PipelineSummary {
        input_records: records.len(),
        after_dedup: deduped.len(),
        clean_attempts: clean.len(),
        students: tags.len(),
        unmapped,
    };
    Ok((StudentTagDataset::new(tags), summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn dataset() -> StudentTagDataset {
        let mut rows = BTreeMap::new();
        rows.insert(StudentId::new("2965"), TagSet::from_tags([TagId::Tag_1_1, TagId::Tag_2_5]));
        rows.insert(StudentId::new("12"), TagSet::from_tags([TagId::Tag_3_9]));
        StudentTagDataset::new(rows)
    }

    #[test]
    fn single_student_mock() {
        let dir = tempfile::tempdir().unwrap();
        let out = generate_batch(
            &["2965".into()],
            &dataset(),
            &PromptTemplate::default(),
            &Gateway::mock(),
            &CompletionParams::default(),
            Some(dir.path()),
        )
        .unwrap();
        assert_eq!(out.reports.len(), 1);
        assert!(out.failures.is_empty());
        let md = std::fs::read_to_string(dir.path().join("report_2965.md")).unwrap();
        for t in crate::promptgen::SECTION_TITLES {
            assert!(md.contains(&format!("## {t}")));
        }
        let meta: StudentReport =
            serde_json::from_slice(&std::fs::read(dir.path().join("report_2965.meta.json")).unwrap()).unwrap();
        assert_eq!(meta.params, CompletionParams::default());
        assert_eq!(meta.backend, "mock");
        let tags = meta.tags.to_tagset().unwrap();
        assert_eq!(render_prompt(&tags, &PromptTemplate::default()).unwrap(), meta.prompt);
    }

    #[test]
    fn empty_request() {
        let out = generate_batch(
            &[],
            &dataset(),
            &PromptTemplate::default(),
            &Gateway::mock(),
            &CompletionParams::default(),
            None,
        )
        .unwrap();
        assert!(out.reports.is_empty() && out.failures.is_empty());
    }

    #[test]
    fn partial_failure_keeps_going() {
        let ids: Vec<StudentId> = vec!["2965".into(), "nobody".into(), "12".into()];
        let out = generate_batch(
            &ids,
            &dataset(),
            &PromptTemplate::default(),
            &Gateway::mock(),
            &CompletionParams::default(),
            None,
        )
        .unwrap();
        let got: Vec<_> = out.reports.iter().map(|r| r.student_id.as_str()).collect();
        assert_eq!(got, ["12", "2965"]);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].student_id.as_str(), "nobody");
    }

    #[test]
    fn truncated_reports_are_flagged() {
        let params = CompletionParams { max_tokens: 5, ..Default::default() };
        let out =
            generate_batch(&["12".into()], &dataset(), &PromptTemplate::default(), &Gateway::mock(), &params, None)
                .unwrap();
        assert!(out.reports[0].truncated);
        assert_eq!(out.reports[0].finish_reason, FinishReason::Length);
    }

    #[test]
    fn file_names_are_sanitized() {
        assert_eq!(file_stem(&"../etc/x".into()), "report____etc_x");
        assert_eq!(file_stem(&"s-01_a".into()), "report_s-01_a");
    }
}
