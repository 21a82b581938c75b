//! Cleaning rules and category consolidation.
//!
//! Multiple attempts at one question by one student collapse to the attempt
//! with the longest duration. Zero-duration entries never win that
//! selection; a pair whose entries are all zero-duration is dropped. Raw
//! category labels are then mapped onto the consolidated taxonomy.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::model::{AbilityDomain, AttemptRecord, Difficulty, KnowledgeArea, QuestionId, StudentId, UnknownName};

/// An attempt after cleaning, carrying consolidated categories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CleanAttempt {
    pub student_id: StudentId,
    pub question_id: QuestionId,
    pub correct: bool,
    pub difficulty: Difficulty,
    pub knowledge: KnowledgeArea,
    pub ability: AbilityDomain,
    /// Seconds, strictly positive.
    pub duration: f64,
}

/// Orders two candidates for the same pair: longer duration wins, then a
/// correct answer, then the later input position.
fn outranks(cand: (&AttemptRecord, usize), best: (&AttemptRecord, usize)) -> bool {
    let key = |(r, i): (&AttemptRecord, usize)| (r.duration, r.correct, i);
    let (a, b) = (key(cand), key(best));
    a.0 > b.0 || (a.0 == b.0 && (a.1, a.2) > (b.1, b.2))
}

/// Picks one record among attempts at the same question. Candidates are
/// given in input order; returns `None` only for an empty slice.
pub fn tie_break(candidates: &[AttemptRecord]) -> Option<&AttemptRecord> {
    let mut best: Option<(&AttemptRecord, usize)> = None;
    for (i, r) in candidates.iter().enumerate() {
        if best.is_none_or(|b| outranks((r, i), b)) {
            best = Some((r, i));
        }
    }
    best.map(|(r, _)| r)
}

/// Keeps one record per (student, question), the one with the longest
/// duration. Output follows the first appearance of each pair.
pub fn dedup_attempts(records: &[AttemptRecord]) -> Vec<AttemptRecord> {
    let mut slot_of: HashMap<(&StudentId, &QuestionId), usize> = HashMap::with_capacity(records.len());
    let mut chosen: Vec<usize> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match slot_of.entry((&r.student_id, &r.question_id)) {
            Entry::Vacant(e) => {
                e.insert(chosen.len());
                chosen.push(i);
            }
            Entry::Occupied(e) => {
                let best = &mut chosen[*e.get()];
                if outranks((r, i), (&records[*best], *best)) {
                    *best = i;
                }
            }
        }
    }
    chosen.into_iter().map(|i| &records[i]).filter(|r| r.duration > 0.0).cloned().collect()
}

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("cannot read mapping {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("mapping line {line}: expected two columns `raw_label<TAB>consolidated_name`")]
    Syntax { line: usize },
    #[error("mapping line {line}: {source}")]
    UnknownTarget { line: usize, source: UnknownName },
    #[error("category mapping is empty")]
    EmptyMapping,
}

/// A duplicated raw label in a mapping file; the later line wins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateKey {
    pub label: String,
    pub first_line: usize,
    pub line: usize,
}

/// Parses a two-column mapping (`raw_label`, consolidated name) separated by
/// a tab, or by a comma when the line has no tab. `#` starts a comment line.
pub fn parse_mapping<T>(text: &str) -> Result<(HashMap<String, T>, Vec<DuplicateKey>), MappingError>
where
    T: std::str::FromStr<Err = UnknownName>,
{
    let mut map = HashMap::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut dups = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim_start_matches('\u{feff}').trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (label, target) =
            trimmed.split_once('\t').or_else(|| trimmed.rsplit_once(',')).ok_or(MappingError::Syntax { line })?;
        let (label, target) = (label.trim(), target.trim());
        if label.is_empty() || target.is_empty() {
            return Err(MappingError::Syntax { line });
        }
        // Optional header row.
        if line == 1 && label.eq_ignore_ascii_case("raw_label") {
            continue;
        }
        let value = target.parse::<T>().map_err(|source| MappingError::UnknownTarget { line, source })?;
        if let Some(first_line) = seen.insert(label.to_owned(), line) {
            log::warn!(
                "mapping line {line}: duplicate label `{label}` (first at line {first_line}), keeping the later entry"
            );
            dups.push(DuplicateKey { label: label.to_owned(), first_line, line });
        }
        map.insert(label.to_owned(), value);
    }
    Ok((map, dups))
}

fn read_mapping<T>(path: &Path) -> Result<(HashMap<String, T>, Vec<DuplicateKey>), MappingError>
where
    T: std::str::FromStr<Err = UnknownName>,
{
    let text = std::fs::read_to_string(path).map_err(|source| MappingError::Io { path: path.to_owned(), source })?;
    parse_mapping(&text)
}

/// Raw label to consolidated category, one table per taxonomy dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryMapping {
    pub knowledge: HashMap<String, KnowledgeArea>,
    pub ability: HashMap<String, AbilityDomain>,
}

const ILLUSTRATIVE_KNOWLEDGE: &[(&str, KnowledgeArea)] = &[
    ("行程问题", KnowledgeArea::SpeedAndTime),
    ("速度", KnowledgeArea::SpeedAndTime),
    ("时间计算", KnowledgeArea::SpeedAndTime),
    ("平面图形", KnowledgeArea::GeometricShapes),
    ("立体图形", KnowledgeArea::GeometricShapes),
    ("周长与面积", KnowledgeArea::GeometricShapes),
    ("统计图表", KnowledgeArea::DataStatisticsProbability),
    ("可能性", KnowledgeArea::DataStatisticsProbability),
    ("平均数", KnowledgeArea::DataStatisticsProbability),
    ("方程", KnowledgeArea::AlgebraFunctions),
    ("用字母表示数", KnowledgeArea::AlgebraFunctions),
    ("正反比例", KnowledgeArea::AlgebraFunctions),
    ("四则运算", KnowledgeArea::ArithmeticOperations),
    ("分数运算", KnowledgeArea::ArithmeticOperations),
    ("运算定律", KnowledgeArea::ArithmeticOperations),
];

const ILLUSTRATIVE_ABILITY: &[(&str, AbilityDomain)] = &[
    ("应用意识", AbilityDomain::PracticalApplication),
    ("解决问题", AbilityDomain::PracticalApplication),
    ("数据分析", AbilityDomain::DataOrganizationStatistics),
    ("数据整理", AbilityDomain::DataOrganizationStatistics),
    ("计算", AbilityDomain::Computational),
    ("运算能力", AbilityDomain::Computational),
    ("空间观念", AbilityDomain::GeometricThinking),
    ("几何直观", AbilityDomain::GeometricThinking),
    ("推理能力", AbilityDomain::ReasoningLogical),
    ("逻辑思维", AbilityDomain::ReasoningLogical),
    ("创新意识", AbilityDomain::InnovativeAbstract),
    ("抽象能力", AbilityDomain::InnovativeAbstract),
];

impl CategoryMapping {
    /// Small built-in mapping covering every consolidated category. The
    /// deployment mapping is loaded from files instead.
    pub fn illustrative_default() -> Self {
        CategoryMapping {
            knowledge: ILLUSTRATIVE_KNOWLEDGE.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect(),
            ability: ILLUSTRATIVE_ABILITY.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect(),
        }
    }

    /// Loads both mapping files, logging any duplicated labels.
    pub fn from_files(knowledge: &Path, ability: &Path) -> Result<(Self, Vec<DuplicateKey>), MappingError> {
        let (k, mut dups) = read_mapping(knowledge)?;
        let (a, dups_a) = read_mapping(ability)?;
        dups.extend(dups_a);
        Ok((CategoryMapping { knowledge: k, ability: a }, dups))
    }

    /// Writes the mapping as two sorted TSV texts (knowledge, ability).
    pub fn to_tsv(&self) -> (String, String) {
        fn render<T: std::fmt::Display>(m: &HashMap<String, T>) -> String {
            let sorted: BTreeMap<_, _> = m.iter().collect();
            sorted.into_iter().map(|(k, v)| format!("{k}\t{v}\n")).collect()
        }
        (render(&self.knowledge), render(&self.ability))
    }
}

/// Raw labels that had no entry in the mapping, with occurrence counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct UnmappedReport {
    pub knowledge: BTreeMap<String, usize>,
    pub ability: BTreeMap<String, usize>,
    /// Records excluded because at least one label was unmapped.
    pub excluded: usize,
}

impl UnmappedReport {
    pub fn is_empty(&self) -> bool {
        self.excluded == 0
    }
}

/// Replaces raw labels with consolidated categories. Records with an
/// unmapped label are excluded and counted in the report.
pub fn apply_mapping(
    records: &[AttemptRecord],
    mapping: &CategoryMapping,
) -> Result<(Vec<CleanAttempt>, UnmappedReport), MappingError> {
    if mapping.knowledge.is_empty() || mapping.ability.is_empty() {
        return Err(MappingError::EmptyMapping);
    }
    let mut out = Vec::with_capacity(records.len());
    let mut report = UnmappedReport::default();
    for r in records {
        let k = mapping.knowledge.get(&r.knowledge_raw);
        let a = mapping.ability.get(&r.ability_raw);
        if k.is_none() {
            *report.knowledge.entry(r.knowledge_raw.clone()).or_default() += 1;
        }
        if a.is_none() {
            *report.ability.entry(r.ability_raw.clone()).or_default() += 1;
        }
        match (k, a) {
            (Some(&knowledge), Some(&ability)) if r.duration > 0.0 => out.push(CleanAttempt {
                student_id: r.student_id.clone(),
                question_id: r.question_id.clone(),
                correct: r.correct,
                difficulty: r.difficulty,
                knowledge,
                ability,
                duration: r.duration,
            }),
            (Some(_), Some(_)) => {}
            _ => report.excluded += 1,
        }
    }
    Ok((out, report))
}

/// Dedup followed by mapping.
pub fn preprocess(
    records: &[AttemptRecord],
    mapping: &CategoryMapping,
) -> Result<(Vec<CleanAttempt>, UnmappedReport), MappingError> {
    apply_mapping(&dedup_attempts(records), mapping)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn rec(s: &str, q: &str, correct: u8, dur: f64) -> AttemptRecord {
        AttemptRecord::new(s, q, correct, 1, "行程问题", "计算", dur).unwrap()
    }

    #[test]
    fn keeps_longest_attempt() {
        let out = dedup_attempts(&[rec("s1", "q1", 0, 3.0), rec("s1", "q1", 1, 10.0), rec("s1", "q1", 0, 0.0)]);
        assert_eq!(out, vec![rec("s1", "q1", 1, 10.0)]);
    }

    #[test]
    fn all_zero_pair_dropped() {
        assert!(dedup_attempts(&[rec("s1", "q1", 1, 0.0)]).is_empty());
        assert!(dedup_attempts(&[rec("s1", "q1", 1, 0.0), rec("s1", "q1", 0, 0.0)]).is_empty());
    }

    #[test]
    fn distinct_students_are_distinct_pairs() {
        let input = [rec("s1", "q1", 1, 5.0), rec("s2", "q1", 1, 7.0)];
        assert_eq!(dedup_attempts(&input), input.to_vec());
    }

    #[test]
    fn tie_break_rules() {
        let a = rec("s", "q", 0, 10.0);
        let b = rec("s", "q", 1, 10.0);
        assert_eq!(tie_break(&[a.clone(), b.clone()]), Some(&b));

        let mut first = rec("s", "q", 1, 10.0);
        first.knowledge_raw = "first".into();
        let mut second = rec("s", "q", 1, 10.0);
        second.knowledge_raw = "second".into();
        assert_eq!(tie_break(&[first.clone(), second.clone()]).unwrap().knowledge_raw, "second");
        assert_eq!(tie_break(std::slice::from_ref(&a)), Some(&a));
        assert_eq!(tie_break(&[]), None);

        // dedup applies the same rule
        assert_eq!(dedup_attempts(&[first, second.clone()]), vec![second]);
        assert_eq!(dedup_attempts(&[b.clone(), a]), vec![b]);
    }

    #[test]
    fn mapping_lookup_and_unmapped() {
        let mapping = CategoryMapping::illustrative_default();
        let mut x = rec("s1", "q2", 1, 4.0);
        x.knowledge_raw = "X".into();
        let (clean, report) = apply_mapping(&[rec("s1", "q1", 1, 4.0), x.clone(), x], &mapping).unwrap();
        assert_eq!(clean.len(), 1);
        assert_eq!(clean[0].knowledge, KnowledgeArea::SpeedAndTime);
        assert_eq!(clean[0].ability, AbilityDomain::Computational);
        assert_eq!(report.knowledge.get("X"), Some(&2));
        assert_eq!(report.excluded, 2);
    }

    #[test]
    fn empty_mapping_aborts() {
        let err = apply_mapping(&[], &CategoryMapping::default()).unwrap_err();
        assert!(matches!(err, MappingError::EmptyMapping));
    }

    #[test]
    fn duplicate_mapping_key_last_wins() {
        let text =
            "raw_label\tconsolidated\n行程问题\tSpeedAndTime\n方程\tAlgebraFunctions\n行程问题,GeometricShapes\n";
        let (map, dups) = parse_mapping::<KnowledgeArea>(text).unwrap();
        assert_eq!(map["行程问题"], KnowledgeArea::GeometricShapes);
        assert_eq!(map.len(), 2);
        assert_eq!(dups, vec![DuplicateKey { label: "行程问题".into(), first_line: 2, line: 4 }]);
    }

    #[test]
    fn mapping_file_errors() {
        assert!(matches!(parse_mapping::<KnowledgeArea>("nocolumns\n"), Err(MappingError::Syntax { line: 1 })));
        assert!(matches!(
            parse_mapping::<AbilityDomain>("a\tPoetry\n"),
            Err(MappingError::UnknownTarget { line: 1, .. })
        ));
    }

    #[test]
    fn illustrative_mapping_covers_taxonomy() {
        let m = CategoryMapping::illustrative_default();
        let ks: HashSet<_> = m.knowledge.values().collect();
        let abs: HashSet<_> = m.ability.values().collect();
        assert_eq!(ks.len(), 5);
        assert_eq!(abs.len(), 6);
        let (kt, at) = m.to_tsv();
        let (k2, _) = parse_mapping::<KnowledgeArea>(&kt).unwrap();
        let (a2, _) = parse_mapping::<AbilityDomain>(&at).unwrap();
        assert_eq!(CategoryMapping { knowledge: k2, ability: a2 }, m);
    }

    fn arb_records() -> impl Strategy<Value = Vec<AttemptRecord>> {
        let one = (0..6u8, 0..8u8, 0..2u8, prop_oneof![Just(0.0), Just(5.0), 0.0..50.0f64]);
        prop::collection::vec(one, 0..120)
            .prop_map(|v| v.into_iter().map(|(s, q, c, d)| rec(&format!("s{s}"), &format!("q{q}"), c, d)).collect())
    }

    proptest! {
        #[test]
        fn dedup_invariants(records in arb_records()) {
            let out = dedup_attempts(&records);
            prop_assert_eq!(dedup_attempts(&out), out.clone());
            let pairs: HashSet<_> = records.iter().map(|r| (&r.student_id, &r.question_id)).collect();
            prop_assert!(out.len() <= pairs.len());
            let mut seen = HashSet::new();
            for r in &out {
                prop_assert!(r.duration > 0.0);
                prop_assert!(seen.insert((&r.student_id, &r.question_id)));
                let max = records
                    .iter()
                    .filter(|x| x.student_id == r.student_id && x.question_id == r.question_id)
                    .map(|x| x.duration)
                    .fold(0.0, f64::max);
                prop_assert_eq!(r.duration, max);
            }
            // every pair with some positive duration survives
            let positive: HashSet<_> = records
                .iter()
                .filter(|r| r.duration > 0.0)
                .map(|r| (&r.student_id, &r.question_id))
                .collect();
            prop_assert_eq!(positive.len(), out.len());
        }

        #[test]
        fn mapping_never_invents_categories(records in arb_records()) {
            let mapping = CategoryMapping::illustrative_default();
            let deduped = dedup_attempts(&records);
            let (clean, _) = apply_mapping(&deduped, &mapping).unwrap();
            prop_assert_eq!(clean.len(), deduped.len());
            for (c, r) in clean.iter().zip(&deduped) {
                prop_assert_eq!(Some(&c.knowledge), mapping.knowledge.get(&r.knowledge_raw));
                prop_assert_eq!(Some(&c.ability), mapping.ability.get(&r.ability_raw));
            }
        }
    }
}
