//! Per-student aggregates and the tag rules.
//!
//! Accuracy bands are strict: above the adequate threshold is positive,
//! below the struggling threshold is negative, and the band in between
//! (boundaries included) produces no tag. Speed is peer-relative: students
//! are ranked by mean duration per difficulty level. Cohorts up to the
//! cutoff are split at the median; larger cohorts tag only the fastest and
//! slowest extremes.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::config::PipelineConfig;
use crate::model::{AbilityDomain, Difficulty, KnowledgeArea, Polarity, SpeedClass, StudentId, TagId, TagSet};
use crate::parallel::{self, Exec};
use crate::preprocess::CleanAttempt;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LevelStats {
    pub attempts: usize,
    pub correct: usize,
    pub total_duration: f64,
}

impl LevelStats {
    pub fn accuracy(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.correct as f64 / self.attempts as f64)
    }

    pub fn mean_duration(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.total_duration / self.attempts as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CountStats {
    pub attempts: usize,
    pub correct: usize,
}

impl CountStats {
    pub fn accuracy(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.correct as f64 / self.attempts as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudentAggregate {
    pub student_id: StudentId,
    pub levels: [LevelStats; 3],
    pub knowledge: [CountStats; 5],
    pub ability: [CountStats; 6],
}

impl StudentAggregate {
    pub fn empty(student_id: StudentId) -> Self {
        StudentAggregate {
            student_id,
            levels: Default::default(),
            knowledge: Default::default(),
            ability: Default::default(),
        }
    }

    pub fn level(&self, d: Difficulty) -> &LevelStats {
        &self.levels[d.index()]
    }

    pub fn area(&self, k: KnowledgeArea) -> &CountStats {
        &self.knowledge[k.index()]
    }

    pub fn domain(&self, a: AbilityDomain) -> &CountStats {
        &self.ability[a.index()]
    }

    fn from_attempts(student_id: StudentId, mut attempts: Vec<&CleanAttempt>) -> Self {
        // Canonical order keeps duration sums independent of input order.
        attempts.sort_by(|a, b| a.question_id.cmp(&b.question_id).then(a.duration.total_cmp(&b.duration)));
        let mut agg = StudentAggregate::empty(student_id);
        for a in attempts {
            let c = usize::from(a.correct);
            let lvl = &mut agg.levels[a.difficulty.index()];
            lvl.attempts += 1;
            lvl.correct += c;
            lvl.total_duration += a.duration;
            let k = &mut agg.knowledge[a.knowledge.index()];
            k.attempts += 1;
            k.correct += c;
            let ab = &mut agg.ability[a.ability.index()];
            ab.attempts += 1;
            ab.correct += c;
        }
        agg
    }
}

fn group_by_student(attempts: &[CleanAttempt]) -> Vec<(StudentId, Vec<&CleanAttempt>)> {
    let mut groups: BTreeMap<&StudentId, Vec<&CleanAttempt>> = BTreeMap::new();
    for a in attempts {
        groups.entry(&a.student_id).or_default().push(a);
    }
    groups.into_iter().map(|(k, v)| (k.clone(), v)).collect()
}

pub fn aggregate(attempts: &[CleanAttempt]) -> BTreeMap<StudentId, StudentAggregate> {
    aggregate_with(Exec::default(), attempts)
}

pub fn aggregate_with(exec: Exec, attempts: &[CleanAttempt]) -> BTreeMap<StudentId, StudentAggregate> {
    let groups = group_by_student(attempts);
    parallel::map(exec, &groups, |(id, list)| StudentAggregate::from_attempts(id.clone(), list.clone()))
        .into_iter()
        .map(|agg| (agg.student_id.clone(), agg))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccuracyBand {
    Adequate,
    Struggling,
    Middle,
}

pub fn accuracy_band(accuracy: f64, cfg: &PipelineConfig) -> AccuracyBand {
    if accuracy > cfg.adequate_threshold {
        AccuracyBand::Adequate
    } else if accuracy < cfg.struggling_threshold {
        AccuracyBand::Struggling
    } else {
        AccuracyBand::Middle
    }
}

fn polarity(accuracy: f64, cfg: &PipelineConfig) -> Option<Polarity> {
    match accuracy_band(accuracy, cfg) {
        AccuracyBand::Adequate => Some(Polarity::Positive),
        AccuracyBand::Struggling => Some(Polarity::Negative),
        AccuracyBand::Middle => None,
    }
}

/// Number of students tagged at each extreme for a cohort of `n`.
pub fn extreme_count(n: usize, cfg: &PipelineConfig) -> usize {
    if n <= cfg.speed_cohort_cutoff {
        n.div_ceil(2)
    } else {
        // Guard against products like 0.1 * 50 landing a hair above an integer.
        ((cfg.speed_extreme_fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
    }
}

/// Speed class of every student with at least one attempt at `level`.
///
/// Ranking is by mean duration ascending, ties broken by student id.
pub fn classify_speed(
    aggregates: &BTreeMap<StudentId, StudentAggregate>,
    level: Difficulty,
    cfg: &PipelineConfig,
) -> BTreeMap<StudentId, SpeedClass> {
    let mut cohort: Vec<(&StudentId, f64)> =
        aggregates.iter().filter_map(|(id, agg)| agg.level(level).mean_duration().map(|m| (id, m))).collect();
    cohort.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let n = cohort.len();
    let k = extreme_count(n, cfg);
    let median_split = n <= cfg.speed_cohort_cutoff;
    cohort
        .into_iter()
        .enumerate()
        .map(|(i, (id, _))| {
            let rank = i + 1;
            let class = if rank <= k {
                SpeedClass::Fast
            } else if median_split || rank > n - k {
                SpeedClass::Slow
            } else {
                SpeedClass::Neither
            };
            (id.clone(), class)
        })
        .collect()
}

/// Speed class per difficulty level; `None` where the student has no attempts.
pub type SpeedProfile = [Option<SpeedClass>; 3];

/// Runs [`classify_speed`] for every level and regroups by student.
pub fn speed_profiles(
    aggregates: &BTreeMap<StudentId, StudentAggregate>,
    cfg: &PipelineConfig,
) -> BTreeMap<StudentId, SpeedProfile> {
    let mut out: BTreeMap<StudentId, SpeedProfile> = aggregates.keys().map(|id| (id.clone(), [None; 3])).collect();
    for d in Difficulty::ALL {
        for (id, class) in classify_speed(aggregates, d, cfg) {
            if let Some(p) = out.get_mut(&id) {
                p[d.index()] = Some(class);
            }
        }
    }
    out
}

pub fn performance_tags(agg: &StudentAggregate, speed: &SpeedProfile, cfg: &PipelineConfig) -> TagSet {
    let mut tags = TagSet::new();
    for d in Difficulty::ALL {
        let stats = agg.level(d);
        if stats.attempts < cfg.min_attempts_per_dimension {
            continue;
        }
        let (Some(acc), Some(class)) = (stats.accuracy(), speed[d.index()]) else { continue };
        if let Some(tag) = polarity(acc, cfg).and_then(|p| TagId::performance(d, p, class)) {
            tags.insert(tag);
        }
    }
    tags
}

pub fn knowledge_tags(agg: &StudentAggregate, cfg: &PipelineConfig) -> TagSet {
    let mut tags = TagSet::new();
    for k in KnowledgeArea::ALL {
        let stats = agg.area(k);
        if stats.attempts < cfg.min_attempts_per_dimension {
            continue;
        }
        if let Some(p) = stats.accuracy().and_then(|a| polarity(a, cfg)) {
            tags.insert(TagId::knowledge(k, p));
        }
    }
    tags
}

pub fn ability_tags(agg: &StudentAggregate, cfg: &PipelineConfig) -> TagSet {
    let mut tags = TagSet::new();
    for a in AbilityDomain::ALL {
        let stats = agg.domain(a);
        if stats.attempts < cfg.min_attempts_per_dimension {
            continue;
        }
        if let Some(p) = stats.accuracy().and_then(|acc| polarity(acc, cfg)) {
            tags.insert(TagId::ability(a, p));
        }
    }
    tags
}

pub fn tag_student(agg: &StudentAggregate, speed: &SpeedProfile, cfg: &PipelineConfig) -> TagSet {
    performance_tags(agg, speed, cfg).union(&knowledge_tags(agg, cfg)).union(&ability_tags(agg, cfg))
}

pub fn tag_cohort(attempts: &[CleanAttempt], cfg: &PipelineConfig) -> BTreeMap<StudentId, TagSet> {
    tag_cohort_with(Exec::default(), attempts, cfg)
}

/// Aggregates, ranks speed across the cohort, then tags each student.
pub fn tag_cohort_with(exec: Exec, attempts: &[CleanAttempt], cfg: &PipelineConfig) -> BTreeMap<StudentId, TagSet> {
    let aggregates = aggregate_with(exec, attempts);
    let speeds = speed_profiles(&aggregates, cfg);
    let students: Vec<&StudentAggregate> = aggregates.values().collect();
    parallel::map(exec, &students, |agg| {
        let speed = speeds.get(&agg.student_id).copied().unwrap_or([None; 3]);
        (agg.student_id.clone(), tag_student(agg, &speed, cfg))
    })
    .into_iter()
    .collect()
}

/// Header row of the `student_tag` file.
pub fn student_tag_header() -> String {
    std::iter::once("student_id").chain(TagId::ALL.iter().map(|t| t.name())).collect::<Vec<_>>().join(",")
}

/// Writes the `student_tag` dataset: a header, then one row per student with
/// 34 comma-separated 0/1 flags in tag order.
pub fn write_student_tags<W: Write>(mut w: W, tags: &BTreeMap<StudentId, TagSet>) -> std::io::Result<()> {
    writeln!(w, "{}", student_tag_header())?;
    for (id, set) in tags {
        let flags: Vec<String> = set.to_flags().iter().map(u8::to_string).collect();
        writeln!(w, "{},{}", id, flags.join(","))?;
    }
    w.flush()
}
