//! Tag annotation pipeline for student question-attempt logs.
//!
//! Raw attempt events are ingested, cleaned and consolidated into a fixed
//! taxonomy, reduced to a 34-flag tag vector per student, rendered into a
//! structured prompt and sent to a chat-completion backend that writes the
//! feedback report. A small survey-statistics module summarizes teacher
//! ratings of the generated reports.
//!
//! Stages, in pipeline order:
//!
//! - [`ingest`]: CSV / JSON-lines attempt logs into [`model::AttemptRecord`]s
//! - [`preprocess`]: duplicate and zero-duration removal, category mapping
//! - [`tagger`]: per-student aggregates, peer speed ranking, tag rules
//! - [`promptgen`]: `student_tag` dataset access and prompt rendering
//! - [`gateway`]: chat-completion client (HTTP and offline mock)
//! - [`report`]: batch orchestration and report persistence
//! - [`evalstats`]: questionnaire filtering and boxplot statistics
//! - [`synth`]: seeded synthetic cohorts with planted skill profiles

pub mod cli;
pub mod config;
pub mod evalstats;
pub mod gateway;
pub mod ingest;
mod kv;
pub mod model;
pub mod parallel;
pub mod preprocess;
pub mod promptgen;
pub mod report;
pub mod synth;
pub mod tagger;

pub use config::PipelineConfig;
pub use model::{AbilityDomain, AttemptRecord, KnowledgeArea, QuestionId, StudentId, TagCategory, TagId, TagSet};
pub use parallel::Exec;
