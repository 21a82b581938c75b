//! Domain types shared by every stage: attempt records, the consolidated
//! taxonomy and the 34-tag vocabulary.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque student identifier as it appears in the source export.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StudentId(pub String);

impl StudentId {
    pub fn new(id: impl Into<String>) -> Self {
        StudentId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StudentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StudentId {
    fn from(s: &str) -> Self {
        StudentId(s.to_owned())
    }
}

/// Opaque question identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuestionId(pub String);

impl QuestionId {
    pub fn new(id: impl Into<String>) -> Self {
        QuestionId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for QuestionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for QuestionId {
    fn from(s: &str) -> Self {
        QuestionId(s.to_owned())
    }
}

/// Question difficulty, 1 (easy) to 3 (difficult).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Difficulty {
    Easy = 1,
    Medium = 2,
    Hard = 3,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    /// Zero-based position, usable as an array index.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn level(self) -> u8 {
        self as u8
    }

    pub fn from_level(level: u8) -> Option<Self> {
        match level {
            1 => Some(Difficulty::Easy),
            2 => Some(Difficulty::Medium),
            3 => Some(Difficulty::Hard),
            _ => None,
        }
    }
}

impl TryFrom<u8> for Difficulty {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Difficulty::from_level(v).ok_or_else(|| format!("difficulty {v} out of range"))
    }
}

impl From<Difficulty> for u8 {
    fn from(d: Difficulty) -> u8 {
        d as u8
    }
}

/// One raw answer event as exported by the learning platform.
///
/// Constructed through [`AttemptRecord::new`], which enforces the field
/// invariants: `correct` in {0, 1}, difficulty in 1..=3 and a finite,
/// non-negative duration in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub student_id: StudentId,
    pub question_id: QuestionId,
    pub correct: bool,
    pub difficulty: Difficulty,
    pub knowledge_raw: String,
    pub ability_raw: String,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("correct out of range")]
    CorrectOutOfRange,
    #[error("difficulty out of range")]
    DifficultyOutOfRange,
    #[error("negative duration")]
    NegativeDuration,
    #[error("non-finite duration")]
    NonFiniteDuration,
}

impl AttemptRecord {
    pub fn new(
        student_id: impl Into<String>,
        question_id: impl Into<String>,
        correct: u8,
        difficulty: u8,
        knowledge_raw: impl Into<String>,
        ability_raw: impl Into<String>,
        duration: f64,
    ) -> Result<Self, RecordError> {
        let correct = match correct {
            0 => false,
            1 => true,
            _ => return Err(RecordError::CorrectOutOfRange),
        };
        let difficulty = Difficulty::from_level(difficulty).ok_or(RecordError::DifficultyOutOfRange)?;
        if !duration.is_finite() {
            return Err(RecordError::NonFiniteDuration);
        }
        if duration < 0.0 {
            return Err(RecordError::NegativeDuration);
        }
        Ok(AttemptRecord {
            student_id: StudentId(student_id.into()),
            question_id: QuestionId(question_id.into()),
            correct,
            difficulty,
            knowledge_raw: knowledge_raw.into(),
            ability_raw: ability_raw.into(),
            duration,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} name `{name}`")]
pub struct UnknownName {
    pub kind: &'static str,
    pub name: String,
}

/// Consolidated knowledge areas, in tag order (Tag_2_1 ... Tag_2_5).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KnowledgeArea {
    SpeedAndTime,
    GeometricShapes,
    DataStatisticsProbability,
    AlgebraFunctions,
    ArithmeticOperations,
}

impl KnowledgeArea {
    pub const ALL: [KnowledgeArea; 5] = [
        KnowledgeArea::SpeedAndTime,
        KnowledgeArea::GeometricShapes,
        KnowledgeArea::DataStatisticsProbability,
        KnowledgeArea::AlgebraFunctions,
        KnowledgeArea::ArithmeticOperations,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            KnowledgeArea::SpeedAndTime => "SpeedAndTime",
            KnowledgeArea::GeometricShapes => "GeometricShapes",
            KnowledgeArea::DataStatisticsProbability => "DataStatisticsProbability",
            KnowledgeArea::AlgebraFunctions => "AlgebraFunctions",
            KnowledgeArea::ArithmeticOperations => "ArithmeticOperations",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            KnowledgeArea::SpeedAndTime => "Calculations of Speed and Time",
            KnowledgeArea::GeometricShapes => "Geometric Shapes and Properties",
            KnowledgeArea::DataStatisticsProbability => "Data Statistics and Probability",
            KnowledgeArea::AlgebraFunctions => "Algebra and Functions",
            KnowledgeArea::ArithmeticOperations => "Arithmetic Operations and Properties",
        }
    }
}

impl FromStr for KnowledgeArea {
    type Err = UnknownName;

    /// Accepts the identifier name or the display label, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        KnowledgeArea::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s) || k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownName { kind: "knowledge area", name: s.to_owned() })
    }
}

impl fmt::Display for KnowledgeArea {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Consolidated ability domains, in tag order (Tag_3_1 ... Tag_3_6).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AbilityDomain {
    PracticalApplication,
    DataOrganizationStatistics,
    Computational,
    GeometricThinking,
    ReasoningLogical,
    InnovativeAbstract,
}

impl AbilityDomain {
    pub const ALL: [AbilityDomain; 6] = [
        AbilityDomain::PracticalApplication,
        AbilityDomain::DataOrganizationStatistics,
        AbilityDomain::Computational,
        AbilityDomain::GeometricThinking,
        AbilityDomain::ReasoningLogical,
        AbilityDomain::InnovativeAbstract,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            AbilityDomain::PracticalApplication => "PracticalApplication",
            AbilityDomain::DataOrganizationStatistics => "DataOrganizationStatistics",
            AbilityDomain::Computational => "Computational",
            AbilityDomain::GeometricThinking => "GeometricThinking",
            AbilityDomain::ReasoningLogical => "ReasoningLogical",
            AbilityDomain::InnovativeAbstract => "InnovativeAbstract",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AbilityDomain::PracticalApplication => "Practical Mathematical Application Skills",
            AbilityDomain::DataOrganizationStatistics => "Data Organization and Statistical Skills",
            AbilityDomain::Computational => "Computational Skills",
            AbilityDomain::GeometricThinking => "Geometric Thinking Skills",
            AbilityDomain::ReasoningLogical => "Reasoning and Logical Thinking",
            AbilityDomain::InnovativeAbstract => "Innovative and Abstract Thinking",
        }
    }
}

impl FromStr for AbilityDomain {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        AbilityDomain::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s) || a.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownName { kind: "ability domain", name: s.to_owned() })
    }
}

impl fmt::Display for AbilityDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which analysis block a tag belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TagCategory {
    Basic,
    Knowledge,
    Ability,
}

pub const TAG_COUNT: usize = 34;

/// The fixed tag vocabulary. Discriminants are positions in a [`TagSet`].
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum TagId {
    Tag_1_1,
    Tag_1_2,
    Tag_1_3,
    Tag_1_4,
    Tag_1_5,
    Tag_1_6,
    Tag_1_7,
    Tag_1_8,
    Tag_1_9,
    Tag_1_10,
    Tag_1_11,
    Tag_1_12,
    Tag_2_1,
    Tag_2_2,
    Tag_2_3,
    Tag_2_4,
    Tag_2_5,
    Tag_2_6,
    Tag_2_7,
    Tag_2_8,
    Tag_2_9,
    Tag_2_10,
    Tag_3_1,
    Tag_3_2,
    Tag_3_3,
    Tag_3_4,
    Tag_3_5,
    Tag_3_6,
    Tag_3_7,
    Tag_3_8,
    Tag_3_9,
    Tag_3_10,
    Tag_3_11,
    Tag_3_12,
}

struct TagInfo {
    name: &'static str,
    description: &'static str,
}

const TAG_TABLE: [TagInfo; TAG_COUNT] = [
    TagInfo { name: "Tag_1_1", description: "Correctly and quickly on easy questions." },
    TagInfo { name: "Tag_1_2", description: "Correctly and quickly on medium difficulty questions." },
    TagInfo { name: "Tag_1_3", description: "Correctly and quickly on difficult questions." },
    TagInfo { name: "Tag_1_4", description: "Correctly but completed slowly on easy questions." },
    TagInfo { name: "Tag_1_5", description: "Correctly but completed slowly on medium difficulty questions." },
    TagInfo { name: "Tag_1_6", description: "Correctly but completed slowly on difficult questions." },
    TagInfo { name: "Tag_1_7", description: "Incorrectly but completed quickly on easy questions." },
    TagInfo { name: "Tag_1_8", description: "Answered incorrectly but quickly on medium difficulty questions." },
    TagInfo { name: "Tag_1_9", description: "Incorrectly but completed quickly on difficult questions." },
    TagInfo { name: "Tag_1_10", description: "Incorrectly but completed slowly on easy questions." },
    TagInfo { name: "Tag_1_11", description: "Incorrectly but completed slowly on medium difficulty questions." },
    TagInfo { name: "Tag_1_12", description: "Incorrectly but completed slowly on difficult questions." },
    TagInfo { name: "Tag_2_1", description: "Outstanding performance in calculations speed and time." },
    TagInfo { name: "Tag_2_2", description: "Outstanding in the identification and geometric shapes." },
    TagInfo { name: "Tag_2_3", description: "Outstanding in data statistics and probability problems." },
    TagInfo { name: "Tag_2_4", description: "Outstanding in algebraic equations and functions." },
    TagInfo { name: "Tag_2_5", description: "Outstanding in arithmetic operations and properties." },
    TagInfo { name: "Tag_2_6", description: "Struggling with calculations involving speed and time." },
    TagInfo { name: "Tag_2_7", description: "Struggling to recognize and work with geometric shapes." },
    TagInfo { name: "Tag_2_8", description: "Finding data statistics and probability problems challenging." },
    TagInfo { name: "Tag_2_9", description: "Struggling with algebraic equations and functions." },
    TagInfo { name: "Tag_2_10", description: "Struggling with arithmetic operations and properties." },
    TagInfo { name: "Tag_3_1", description: "Strong capabilities in practical application of mathematics." },
    TagInfo { name: "Tag_3_2", description: "Strong capabilities in statistical analysis." },
    TagInfo { name: "Tag_3_3", description: "Strong computational skills." },
    TagInfo { name: "Tag_3_4", description: "Strong geometric thinking skills." },
    TagInfo { name: "Tag_3_5", description: "Strong logical reasoning skills." },
    TagInfo { name: "Tag_3_6", description: "Strong innovative and abstract thinking skills." },
    TagInfo { name: "Tag_3_7", description: "Challenged by the practical application of mathematics." },
    TagInfo { name: "Tag_3_8", description: "Challenged by statistical analysis." },
    TagInfo { name: "Tag_3_9", description: "Challenged by computational skills." },
    TagInfo { name: "Tag_3_10", description: "Challenged by geometric thinking skills." },
    TagInfo { name: "Tag_3_11", description: "Challenged by logical reasoning." },
    TagInfo { name: "Tag_3_12", description: "Challenged by innovative and abstract thinking." },
];

/// Which side of the accuracy bands a tag reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

/// Speed class used in the performance tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SpeedClass {
    Fast,
    Slow,
    Neither,
}

impl TagId {
    pub const ALL: [TagId; TAG_COUNT] = {
        use TagId::*;
        [
            Tag_1_1, Tag_1_2, Tag_1_3, Tag_1_4, Tag_1_5, Tag_1_6, Tag_1_7, Tag_1_8, Tag_1_9, Tag_1_10, Tag_1_11,
            Tag_1_12, Tag_2_1, Tag_2_2, Tag_2_3, Tag_2_4, Tag_2_5, Tag_2_6, Tag_2_7, Tag_2_8, Tag_2_9, Tag_2_10,
            Tag_3_1, Tag_3_2, Tag_3_3, Tag_3_4, Tag_3_5, Tag_3_6, Tag_3_7, Tag_3_8, Tag_3_9, Tag_3_10, Tag_3_11,
            Tag_3_12,
        ]
    };

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<TagId> {
        TagId::ALL.get(i).copied()
    }

    /// Serialized name, e.g. `Tag_2_8`.
    pub fn name(self) -> &'static str {
        TAG_TABLE[self.index()].name
    }

    pub fn description(self) -> &'static str {
        TAG_TABLE[self.index()].description
    }

    pub fn category(self) -> TagCategory {
        match self.index() {
            0..=11 => TagCategory::Basic,
            12..=21 => TagCategory::Knowledge,
            _ => TagCategory::Ability,
        }
    }

    /// Performance tag for a difficulty level, accuracy side and speed.
    ///
    /// Returns `None` for [`SpeedClass::Neither`].
    pub fn performance(difficulty: Difficulty, polarity: Polarity, speed: SpeedClass) -> Option<TagId> {
        let offset = match (polarity, speed) {
            (Polarity::Positive, SpeedClass::Fast) => 0,
            (Polarity::Positive, SpeedClass::Slow) => 3,
            (Polarity::Negative, SpeedClass::Fast) => 6,
            (Polarity::Negative, SpeedClass::Slow) => 9,
            (_, SpeedClass::Neither) => return None,
        };
        TagId::from_index(offset + difficulty.index())
    }

    pub fn knowledge(area: KnowledgeArea, polarity: Polarity) -> TagId {
        let offset = match polarity {
            Polarity::Positive => 0,
            Polarity::Negative => KnowledgeArea::ALL.len(),
        };
        TagId::ALL[12 + offset + area.index()]
    }

    pub fn ability(domain: AbilityDomain, polarity: Polarity) -> TagId {
        let offset = match polarity {
            Polarity::Positive => 0,
            Polarity::Negative => AbilityDomain::ALL.len(),
        };
        TagId::ALL[22 + offset + domain.index()]
    }
}

/// Table description for a tag.
pub fn tag_description(tag: TagId) -> &'static str {
    tag.description()
}

impl fmt::Display for TagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TagId {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TagId::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| UnknownName { kind: "tag", name: s.to_owned() })
    }
}

impl Serialize for TagId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for TagId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TagSetError {
    #[error("expected {TAG_COUNT} flags, found {0}")]
    Length(usize),
    #[error("flag {index} is `{value}`, expected 0 or 1")]
    Flag { index: usize, value: String },
    #[error("mutually exclusive tags both set: {0} and {1}")]
    Exclusive(TagId, TagId),
}

/// Binary presence vector over all 34 tags, in [`TagId`] order.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct TagSet {
    flags: [bool; TAG_COUNT],
}

impl Default for TagSet {
    fn default() -> Self {
        TagSet { flags: [false; TAG_COUNT] }
    }
}

impl TagSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tags(tags: impl IntoIterator<Item = TagId>) -> Self {
        let mut set = TagSet::new();
        for t in tags {
            set.insert(t);
        }
        set
    }

    /// Builds a set from exactly 34 numeric flags.
    pub fn from_flags(flags: &[u8]) -> Result<Self, TagSetError> {
        if flags.len() != TAG_COUNT {
            return Err(TagSetError::Length(flags.len()));
        }
        let mut set = TagSet::new();
        for (i, &f) in flags.iter().enumerate() {
            set.flags[i] = match f {
                0 => false,
                1 => true,
                v => return Err(TagSetError::Flag { index: i, value: v.to_string() }),
            };
        }
        Ok(set)
    }

    pub fn to_flags(&self) -> [u8; TAG_COUNT] {
        self.flags.map(u8::from)
    }

    pub fn insert(&mut self, tag: TagId) {
        self.flags[tag.index()] = true;
    }

    pub fn remove(&mut self, tag: TagId) {
        self.flags[tag.index()] = false;
    }

    pub fn contains(&self, tag: TagId) -> bool {
        self.flags[tag.index()]
    }

    pub fn len(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.flags.iter().any(|&f| f)
    }

    /// Set tags in index order.
    pub fn iter(&self) -> impl Iterator<Item = TagId> + '_ {
        TagId::ALL.into_iter().filter(|t| self.contains(*t))
    }

    pub fn union(&self, other: &TagSet) -> TagSet {
        let mut out = *self;
        for (a, b) in out.flags.iter_mut().zip(other.flags) {
            *a |= b;
        }
        out
    }

    /// Checks the mutual-exclusion rules: one performance tag per
    /// difficulty, one side per knowledge area and per ability domain.
    pub fn validate(&self) -> Result<(), TagSetError> {
        for d in Difficulty::ALL {
            let set: Vec<TagId> = (0..4).map(|k| TagId::ALL[d.index() + 3 * k]).filter(|t| self.contains(*t)).collect();
            if set.len() > 1 {
                return Err(TagSetError::Exclusive(set[0], set[1]));
            }
        }
        for k in KnowledgeArea::ALL {
            let (pos, neg) = (TagId::knowledge(k, Polarity::Positive), TagId::knowledge(k, Polarity::Negative));
            if self.contains(pos) && self.contains(neg) {
                return Err(TagSetError::Exclusive(pos, neg));
            }
        }
        for a in AbilityDomain::ALL {
            let (pos, neg) = (TagId::ability(a, Polarity::Positive), TagId::ability(a, Polarity::Negative));
            if self.contains(pos) && self.contains(neg) {
                return Err(TagSetError::Exclusive(pos, neg));
            }
        }
        Ok(())
    }
}

impl fmt::Debug for TagSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<TagId> for TagSet {
    fn from_iter<I: IntoIterator<Item = TagId>>(iter: I) -> Self {
        TagSet::from_tags(iter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn descriptions_golden() {
        assert_eq!(tag_description(TagId::Tag_1_1), "Correctly and quickly on easy questions.");
        assert_eq!(tag_description(TagId::Tag_2_8), "Finding data statistics and probability problems challenging.");
        assert_eq!(tag_description(TagId::Tag_3_12), "Challenged by innovative and abstract thinking.");
        assert_eq!(TagId::Tag_1_11.description(), "Incorrectly but completed slowly on medium difficulty questions.");
    }

    #[test]
    fn partition_and_distinct_descriptions() {
        let count = |c| TagId::ALL.iter().filter(|t| t.category() == c).count();
        assert_eq!(count(TagCategory::Basic), 12);
        assert_eq!(count(TagCategory::Knowledge), 10);
        assert_eq!(count(TagCategory::Ability), 12);
        let uniq: HashSet<_> = TagId::ALL.iter().map(|t| t.description()).collect();
        assert_eq!(uniq.len(), TAG_COUNT);
    }

    #[test]
    fn names_round_trip() {
        for (i, t) in TagId::ALL.into_iter().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(t.name().parse::<TagId>().unwrap(), t);
            let json = serde_json::to_string(&t).unwrap();
            assert_eq!(serde_json::from_str::<TagId>(&json).unwrap(), t);
        }
        assert!("Tag_4_1".parse::<TagId>().is_err());
    }

    #[test]
    fn tag_index_helpers() {
        use Difficulty::*;
        assert_eq!(TagId::performance(Easy, Polarity::Positive, SpeedClass::Fast), Some(TagId::Tag_1_1));
        assert_eq!(TagId::performance(Hard, Polarity::Positive, SpeedClass::Slow), Some(TagId::Tag_1_6));
        assert_eq!(TagId::performance(Medium, Polarity::Negative, SpeedClass::Fast), Some(TagId::Tag_1_8));
        assert_eq!(TagId::performance(Medium, Polarity::Negative, SpeedClass::Slow), Some(TagId::Tag_1_11));
        assert_eq!(TagId::performance(Medium, Polarity::Negative, SpeedClass::Neither), None);
        assert_eq!(TagId::knowledge(KnowledgeArea::SpeedAndTime, Polarity::Positive), TagId::Tag_2_1);
        assert_eq!(TagId::knowledge(KnowledgeArea::DataStatisticsProbability, Polarity::Negative), TagId::Tag_2_8);
        assert_eq!(TagId::ability(AbilityDomain::Computational, Polarity::Positive), TagId::Tag_3_3);
        assert_eq!(TagId::ability(AbilityDomain::InnovativeAbstract, Polarity::Negative), TagId::Tag_3_12);
    }

    #[test]
    fn tagset_exclusions() {
        assert!(TagSet::from_tags([TagId::Tag_1_1, TagId::Tag_1_5, TagId::Tag_1_12]).validate().is_ok());
        assert_eq!(
            TagSet::from_tags([TagId::Tag_1_1, TagId::Tag_1_10]).validate(),
            Err(TagSetError::Exclusive(TagId::Tag_1_1, TagId::Tag_1_10))
        );
        assert!(TagSet::from_tags([TagId::Tag_2_3, TagId::Tag_2_8]).validate().is_err());
        assert!(TagSet::from_tags([TagId::Tag_3_2, TagId::Tag_3_8]).validate().is_err());
        assert!(TagSet::from_tags([TagId::Tag_2_3, TagId::Tag_2_9]).validate().is_ok());
    }

    #[test]
    fn flags_round_trip() {
        let set = TagSet::from_tags([TagId::Tag_1_1, TagId::Tag_2_5, TagId::Tag_3_3]);
        assert_eq!(set.len(), 3);
        assert_eq!(TagSet::from_flags(&set.to_flags()).unwrap(), set);
        assert_eq!(TagSet::from_flags(&[0; 33]), Err(TagSetError::Length(33)));
        let mut bad = [0u8; TAG_COUNT];
        bad[4] = 2;
        assert!(matches!(TagSet::from_flags(&bad), Err(TagSetError::Flag { index: 4, .. })));
    }

    #[test]
    fn record_invariants() {
        let r = AttemptRecord::new("s1", "q1", 1, 2, "速度", "计算", 12.5).unwrap();
        assert!(r.correct);
        assert_eq!(r.difficulty, Difficulty::Medium);
        assert_eq!(r.duration, 12.5);
        assert_eq!(AttemptRecord::new("s", "q", 2, 1, "", "", 1.0), Err(RecordError::CorrectOutOfRange));
        assert_eq!(AttemptRecord::new("s", "q", 0, 4, "", "", 1.0), Err(RecordError::DifficultyOutOfRange));
        assert_eq!(AttemptRecord::new("s", "q", 0, 1, "", "", -1.0), Err(RecordError::NegativeDuration));
        assert!(AttemptRecord::new("s", "q", 0, 1, "", "", 0.0).is_ok());
    }

    #[test]
    fn taxonomy_parsing() {
        assert_eq!("speedandtime".parse::<KnowledgeArea>().unwrap(), KnowledgeArea::SpeedAndTime);
        assert_eq!("Algebra and Functions".parse::<KnowledgeArea>().unwrap(), KnowledgeArea::AlgebraFunctions);
        assert_eq!("Computational".parse::<AbilityDomain>().unwrap(), AbilityDomain::Computational);
        assert!("Music".parse::<AbilityDomain>().is_err());
    }
}
