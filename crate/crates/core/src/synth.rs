//! Synthetic cohorts with planted skill and speed profiles.
//!
//! Each student has a true correctness probability per knowledge area and
//! ability domain, and a log-normal response time per difficulty. Attempts
//! come in two probe blocks: one block per knowledge area and one per
//! ability domain, `attempts_per_dimension` each. The label on the other
//! axis is drawn from categories on the same side of 0.5 where possible so
//! that planted strengths and weaknesses do not wash each other out.
//!
//! Noise rows exercise cleaning: shorter duplicates of real attempts, and
//! attempts whose only duration is zero.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use thiserror::Error;

use crate::ingest::COLUMNS;
use crate::kv::{self, KvError};
use crate::model::{AbilityDomain, AttemptRecord, Difficulty, KnowledgeArea, QuestionId, StudentId};
use crate::parallel::{self, Exec};
use crate::preprocess::CategoryMapping;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentProfile {
    pub student_id: StudentId,
    pub knowledge_p: [f64; 5],
    pub ability_p: [f64; 6],
    /// Mean of log-duration per difficulty (seconds).
    pub log_mu: [f64; 3],
    pub log_sigma: [f64; 3],
    pub attempts_per_dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("{student}: probability {value} outside [0, 1]")]
    Probability { student: String, value: f64 },
    #[error("{student}: duration spread must be positive, got {value}")]
    Spread { student: String, value: f64 },
    #[error("{student}: non-finite duration parameter")]
    Duration { student: String },
}

impl LatentProfile {
    /// Uniform probability `p`, 20 attempts per dimension, default timings.
    pub fn uniform(student_id: impl Into<String>, p: f64) -> Self {
        LatentProfile {
            student_id: StudentId::new(student_id),
            knowledge_p: [p; 5],
            ability_p: [p; 6],
            log_mu: DEFAULT_LOG_MU,
            log_sigma: DEFAULT_LOG_SIGMA,
            attempts_per_dimension: 20,
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let student = || self.student_id.to_string();
        for &p in self.knowledge_p.iter().chain(&self.ability_p) {
            if !(0.0..=1.0).contains(&p) {
                return Err(ProfileError::Probability { student: student(), value: p });
            }
        }
        for &s in &self.log_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(ProfileError::Spread { student: student(), value: s });
            }
        }
        if self.log_mu.iter().any(|m| !m.is_finite()) {
            return Err(ProfileError::Duration { student: student() });
        }
        Ok(())
    }
}

pub const DEFAULT_LOG_MU: [f64; 3] = [3.4, 3.9, 4.4];
pub const DEFAULT_LOG_SIGMA: [f64; 3] = [0.35, 0.35, 0.35];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseRates {
    /// Chance that an attempt gets a shorter duplicate.
    pub duplicate: f64,
    /// Zero-duration rows added, as a fraction of real attempts.
    pub zero_duration: f64,
}

impl Default for NoiseRates {
    fn default() -> Self {
        NoiseRates { duplicate: 0.2, zero_duration: 0.05 }
    }
}

fn raw_labels<T: Copy + PartialEq>(map: &std::collections::HashMap<String, T>, all: &[T]) -> Vec<Vec<String>> {
    all.iter()
        .map(|c| {
            let mut labels: Vec<String> = map.iter().filter(|(_, v)| *v == c).map(|(k, _)| k.clone()).collect();
            labels.sort();
            labels
        })
        .collect()
}

/// Raw labels per category, used to dress generated rows.
#[derive(Debug, Clone)]
pub struct LabelSource {
    knowledge: Vec<Vec<String>>,
    ability: Vec<Vec<String>>,
}

impl LabelSource {
    /// Every category needs at least one raw label.
    pub fn from_mapping(m: &CategoryMapping) -> Option<Self> {
        let knowledge = raw_labels(&m.knowledge, &KnowledgeArea::ALL);
        let ability = raw_labels(&m.ability, &AbilityDomain::ALL);
        let complete = knowledge.iter().chain(&ability).all(|l| !l.is_empty());
        complete.then_some(LabelSource { knowledge, ability })
    }
}

impl Default for LabelSource {
    fn default() -> Self {
        LabelSource::from_mapping(&CategoryMapping::illustrative_default()).expect("illustrative mapping is complete")
    }
}

fn student_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Categories whose probability sits on the same side of 0.5 as `p`, or all
/// of them if none does.
fn same_side(p: f64, probs: &[f64]) -> Vec<usize> {
    let side: Vec<usize> = (0..probs.len()).filter(|&i| (probs[i] >= 0.5) == (p >= 0.5)).collect();
    if side.is_empty() {
        (0..probs.len()).collect()
    } else {
        side
    }
}

fn generate_student(
    profile: &LatentProfile,
    rng: &mut ChaCha8Rng,
    labels: &LabelSource,
    noise: NoiseRates,
) -> Vec<AttemptRecord> {
    let timing: Vec<LogNormal<f64>> =
        (0..3).map(|i| LogNormal::new(profile.log_mu[i], profile.log_sigma[i]).expect("validated profile")).collect();
    let sid = profile.student_id.as_str();
    let n = profile.attempts_per_dimension;

    // (question, knowledge index, ability index, probability)
    let mut plan: Vec<(String, usize, usize, f64)> = Vec::new();
    for (k, &p) in profile.knowledge_p.iter().enumerate() {
        let pool = same_side(p, &profile.ability_p);
        for j in 0..n {
            plan.push((format!("k{k}-{j:03}"), k, *pool.choose(rng).unwrap(), p));
        }
    }
    for (a, &p) in profile.ability_p.iter().enumerate() {
        let pool = same_side(p, &profile.knowledge_p);
        for j in 0..n {
            plan.push((format!("a{a}-{j:03}"), *pool.choose(rng).unwrap(), a, p));
        }
    }

    let mut rows = Vec::with_capacity(plan.len() * 5 / 4);
    for (i, (qid, k, a, p)) in plan.iter().enumerate() {
        let d = Difficulty::ALL[i % 3];
        let dist = &timing[d.index()];
        let k_raw = labels.knowledge[*k].choose(rng).unwrap();
        let a_raw = labels.ability[*a].choose(rng).unwrap();
        let make = |correct: bool, duration: f64| AttemptRecord {
            student_id: profile.student_id.clone(),
            question_id: qid.as_str().into(),
            correct,
            difficulty: d,
            knowledge_raw: k_raw.clone(),
            ability_raw: a_raw.clone(),
            duration,
        };
        let duration = dist.sample(rng).max(1.0);
        rows.push(make(rng.random_bool(*p), duration));
        if rng.random_bool(noise.duplicate) {
            let shorter = duration * rng.random_range(0.05..0.9);
            rows.push(make(rng.random_bool(*p), shorter));
        }
    }
    let zeros = (plan.len() as f64 * noise.zero_duration).round() as usize;
    for z in 0..zeros {
        let d = Difficulty::ALL[z % 3];
        rows.push(AttemptRecord {
            student_id: profile.student_id.clone(),
            question_id: QuestionId::new(format!("z-{z:03}")),
            correct: rng.random_bool(0.5),
            difficulty: d,
            knowledge_raw: labels.knowledge[z % 5][0].clone(),
            ability_raw: labels.ability[z % 6][0].clone(),
            duration: 0.0,
        });
    }
    rows.shuffle(rng);
    debug_assert!(rows.iter().all(|r| r.student_id.as_str() == sid));
    rows
}

/// Attempts for every profile, in profile order. Same inputs and seed give
/// identical output under either execution mode.
pub fn generate_cohort(profiles: &[LatentProfile], seed: u64) -> Result<Vec<AttemptRecord>, ProfileError> {
    generate_cohort_with(Exec::default(), profiles, seed, &LabelSource::default(), NoiseRates::default())
}

pub fn generate_cohort_with(
    exec: Exec,
    profiles: &[LatentProfile],
    seed: u64,
    labels: &LabelSource,
    noise: NoiseRates,
) -> Result<Vec<AttemptRecord>, ProfileError> {
    for p in profiles {
        p.validate()?;
    }
    let noise = NoiseRates { duplicate: noise.duplicate.clamp(0.0, 1.0), zero_duration: noise.zero_duration.max(0.0) };
    let indexed: Vec<(usize, &LatentProfile)> = profiles.iter().enumerate().collect();
    Ok(parallel::flat_map(exec, &indexed, |(i, p)| {
        let mut rng = student_rng(seed, *i);
        generate_student(p, &mut rng, labels, noise)
    }))
}

/// Writes records in the ingest CSV schema.
pub fn write_attempts_csv<W: Write>(w: W, records: &[AttemptRecord]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(COLUMNS)?;
    for r in records {
        wtr.write_record([
            r.student_id.as_str(),
            r.question_id.as_str(),
            if r.correct { "1" } else { "0" },
            &r.difficulty.level().to_string(),
            &r.knowledge_raw,
            &r.ability_raw,
            &format!("{}", r.duration),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileMode {
    /// Every student uses the probabilities given in the spec file.
    Fixed,
    /// Each dimension independently gets `high_p` or `low_p`.
    Extreme,
    /// Each dimension drawn uniformly from [0, 1].
    Uniform,
}

/// Cohort description read from a flat `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub students: usize,
    pub id_prefix: String,
    pub attempts_per_dimension: usize,
    pub mode: ProfileMode,
    pub high_p: f64,
    pub low_p: f64,
    /// Used by [`ProfileMode::Fixed`].
    pub knowledge_p: [f64; 5],
    pub ability_p: [f64; 6],
    pub log_mu: [f64; 3],
    pub log_sigma: [f64; 3],
    /// Per-student shift of all log-mean durations, drawn from N(0, jitter).
    pub speed_jitter: f64,
    pub noise: NoiseRates,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            students: 100,
            id_prefix: "s".into(),
            attempts_per_dimension: 20,
            mode: ProfileMode::Extreme,
            high_p: 0.95,
            low_p: 0.15,
            knowledge_p: [0.7; 5],
            ability_p: [0.7; 6],
            log_mu: DEFAULT_LOG_MU,
            log_sigma: DEFAULT_LOG_SIGMA,
            speed_jitter: 0.3,
            noise: NoiseRates::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error(transparent)]
    Syntax(#[from] KvError),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {value}")]
    BadValue { key: String, value: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn level_key(s: &str) -> Option<usize> {
    match s {
        "easy" | "1" => Some(0),
        "medium" | "2" => Some(1),
        "hard" | "3" => Some(2),
        _ => None,
    }
}

impl CohortSpec {
    pub fn from_kv_str(text: &str) -> Result<Self, SpecError> {
        let mut spec = CohortSpec::default();
        for (key, value) in kv::parse(text)? {
            let bad = || SpecError::BadValue { key: key.clone(), value: value.clone() };
            let num = || value.parse::<f64>().map_err(|_| bad());
            let count = || value.parse::<usize>().map_err(|_| bad());
            let parts: Vec<&str> = key.split('.').collect();
            match parts.as_slice() {
                ["students"] => spec.students = count()?,
                ["id_prefix"] => spec.id_prefix = value.clone(),
                ["attempts_per_dimension"] => spec.attempts_per_dimension = count()?,
                ["mode"] => {
                    spec.mode = match value.to_ascii_lowercase().as_str() {
                        "fixed" => ProfileMode::Fixed,
                        "extreme" => ProfileMode::Extreme,
                        "uniform" => ProfileMode::Uniform,
                        _ => return Err(bad()),
                    }
                }
                ["high_p"] => spec.high_p = num()?,
                ["low_p"] => spec.low_p = num()?,
                ["speed_jitter"] => spec.speed_jitter = num()?,
                ["noise", "duplicate"] => spec.noise.duplicate = num()?,
                ["noise", "zero_duration"] => spec.noise.zero_duration = num()?,
                ["knowledge", name] => {
                    let area: KnowledgeArea = name.parse().map_err(|_| SpecError::UnknownKey(key.clone()))?;
                    spec.knowledge_p[area.index()] = num()?;
                }
                ["ability", name] => {
                    let dom: AbilityDomain = name.parse().map_err(|_| SpecError::UnknownKey(key.clone()))?;
                    spec.ability_p[dom.index()] = num()?;
                }
                ["duration", level, field] => {
                    let i = level_key(level).ok_or_else(|| SpecError::UnknownKey(key.clone()))?;
                    match *field {
                        "mu" => spec.log_mu[i] = num()?,
                        "sigma" => spec.log_sigma[i] = num()?,
                        _ => return Err(SpecError::UnknownKey(key.clone())),
                    }
                }
                _ => return Err(SpecError::UnknownKey(key.clone())),
            }
        }
        let probs = [spec.high_p, spec.low_p, spec.noise.duplicate];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || spec.noise.zero_duration < 0.0 || spec.speed_jitter < 0.0 {
            return Err(SpecError::BadValue { key: "probabilities".into(), value: format!("{probs:?}") });
        }
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io { path: path.to_owned(), source })?;
        Self::from_kv_str(&text)
    }

    /// Concrete profiles. Deterministic in `seed`, independent of the seed
    /// used for attempt generation.
    pub fn profiles(&self, seed: u64) -> Vec<LatentProfile> {
        let width = self.students.max(1).to_string().len().max(3);
        (0..self.students)
            .map(|i| {
                let mut rng = student_rng(seed ^ 0x005e_ed0f_9a7e, i);
                let mut draw = |fixed: f64| match self.mode {
                    ProfileMode::Fixed => fixed,
                    ProfileMode::Extreme => {
                        if rng.random_bool(0.5) {
                            self.high_p
                        } else {
                            self.low_p
                        }
                    }
                    ProfileMode::Uniform => rng.random::<f64>(),
                };
                let knowledge_p = self.knowledge_p.map(&mut draw);
                let ability_p = self.ability_p.map(&mut draw);
                let shift = if self.speed_jitter > 0.0 {
                    rand_distr::Normal::new(0.0, self.speed_jitter).unwrap().sample(&mut rng)
                } else {
                    0.0
                };
                LatentProfile {
                    student_id: StudentId::new(format!("{}{:0width$}", self.id_prefix, i + 1)),
                    knowledge_p,
                    ability_p,
                    log_mu: self.log_mu.map(|m| m + shift),
                    log_sigma: self.log_sigma,
                    attempts_per_dimension: self.attempts_per_dimension,
                }
            })
            .collect()
    }
}

/// Planted ground truth per student, keyed by id.
pub fn profile_index(profiles: &[LatentProfile]) -> BTreeMap<StudentId, &LatentProfile> {
    profiles.iter().map(|p| (p.student_id.clone(), p)).collect()
}
