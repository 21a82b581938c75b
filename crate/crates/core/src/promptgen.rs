//! `student_tag` dataset access and prompt rendering.
//!
//! A prompt has six sections in fixed order. The three analysis sections
//! list the descriptions of the student's set tags in their category; the
//! remaining sections point back at those lists. The wording comes from a
//! template asset (see `assets/prompt_template.txt`) that can be replaced
//! at runtime.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{StudentId, TagCategory, TagId, TagSet, TagSetError, TAG_COUNT};

pub const SECTION_TITLES: [&str; 6] = [
    "Overview",
    "Basic Analysis",
    "Knowledge Category Analysis",
    "Ability Analysis",
    "Learning Strategies and Recommendations",
    "Summary",
];

const DEFAULT_TEMPLATE: &str = include_str!("../assets/prompt_template.txt");

/// Tag category listed in a section, if any.
pub fn section_category(title: &str) -> Option<TagCategory> {
    match title {
        "Basic Analysis" => Some(TagCategory::Basic),
        "Knowledge Category Analysis" => Some(TagCategory::Knowledge),
        "Ability Analysis" => Some(TagCategory::Ability),
        _ => None,
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unknown student `{0}`")]
    UnknownStudent(StudentId),
    #[error("student_tag line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid tag set: {0}")]
    InvalidTagSet(#[from] TagSetError),
    #[error("template: {0}")]
    Template(String),
}

/// The per-student flag vectors, keyed by student id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudentTagDataset {
    rows: BTreeMap<StudentId, TagSet>,
}

impl StudentTagDataset {
    pub fn new(rows: BTreeMap<StudentId, TagSet>) -> Self {
        StudentTagDataset { rows }
    }

    /// Reads `student_id` followed by 34 flags per row. A leading header
    /// row starting with `student_id` is optional.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, PromptError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
        let mut rows = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let malformed = |line: u64, reason: String| PromptError::Malformed { line, reason };
            let rec = rec.map_err(|e| malformed(i as u64 + 1, e.to_string()))?;
            let line = rec.position().map_or(i as u64 + 1, |p| p.line());
            let id = rec.get(0).unwrap_or("").trim();
            if i == 0 && id == "student_id" {
                continue;
            }
            if rec.len() == 1 && id.is_empty() {
                continue;
            }
            if id.is_empty() {
                return Err(malformed(line, "empty student_id".into()));
            }
            let flags: Vec<u8> = rec
                .iter()
                .skip(1)
                .enumerate()
                .map(|(j, f)| match f.trim() {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(malformed(line, format!("flag {} is `{other}`, expected 0 or 1", j + 1))),
                })
                .collect::<Result<_, _>>()?;
            if flags.len() != TAG_COUNT {
                return Err(malformed(line, format!("expected {TAG_COUNT} flags, found {}", flags.len())));
            }
            let set = TagSet::from_flags(&flags)?;
            if rows.insert(StudentId::new(id), set).is_some() {
                return Err(malformed(line, format!("duplicate student `{id}`")));
            }
        }
        Ok(StudentTagDataset { rows })
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let file = std::fs::File::open(path).map_err(|source| PromptError::Io { path: path.to_owned(), source })?;
        Self::from_reader(file)
    }

    pub fn get_student_tags(&self, id: &StudentId) -> Result<TagSet, PromptError> {
        self.rows.get(id).copied().ok_or_else(|| PromptError::UnknownStudent(id.clone()))
    }

    pub fn rows(&self) -> &BTreeMap<StudentId, TagSet> {
        &self.rows
    }

    pub fn students(&self) -> impl Iterator<Item = &StudentId> {
        self.rows.keys()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Free-function form of [`StudentTagDataset::get_student_tags`].
pub fn get_student_tags(dataset: &StudentTagDataset, id: &StudentId) -> Result<TagSet, PromptError> {
    dataset.get_student_tags(id)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionSpec {
    pub title: String,
    /// Instruction text containing a `{{tags}}` slot.
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub preamble: String,
    pub style: Vec<String>,
    pub reference: String,
    pub empty_note: String,
    pub sections: Vec<SectionSpec>,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::parse(DEFAULT_TEMPLATE).expect("bundled template is valid")
    }
}

impl PromptTemplate {
    /// Parses the `@@`-delimited template format and checks its structure.
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let bad = |m: String| PromptError::Template(m);
        let mut blocks: Vec<(String, Vec<&str>)> = Vec::new();
        for line in text.lines() {
            if let Some(kind) = line.strip_prefix("@@") {
                blocks.push((kind.trim().to_owned(), Vec::new()));
            } else if line.starts_with('#') {
                continue;
            } else if let Some((_, body)) = blocks.last_mut() {
                body.push(line);
            } else if !line.trim().is_empty() {
                return Err(bad("text before the first `@@` block".into()));
            }
        }
        let join = |lines: &[&str]| lines.join("\n").trim().to_owned();

        let (mut preamble, mut style, mut reference, mut empty_note) = (None, None, None, None);
        let mut sections = Vec::new();
        for (kind, body) in &blocks {
            match kind.as_str() {
                "preamble" => preamble = Some(join(body)),
                "style" => style = Some(body.iter().map(|l| l.trim().to_owned()).filter(|l| !l.is_empty()).collect()),
                "reference" => reference = Some(join(body)),
                "empty" => empty_note = Some(join(body)),
                k => match k.strip_prefix("section ") {
                    Some(title) => sections.push(SectionSpec { title: title.trim().to_owned(), body: join(body) }),
                    None => return Err(bad(format!("unknown block `@@ {k}`"))),
                },
            }
        }
        let template = PromptTemplate {
            preamble: preamble.ok_or_else(|| bad("missing `@@ preamble`".into()))?,
            style: style.ok_or_else(|| bad("missing `@@ style`".into()))?,
            reference: reference.ok_or_else(|| bad("missing `@@ reference`".into()))?,
            empty_note: empty_note.ok_or_else(|| bad("missing `@@ empty`".into()))?,
            sections,
        };
        template.check()?;
        Ok(template)
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io { path: path.to_owned(), source })?;
        Self::parse(&text)
    }

    fn check(&self) -> Result<(), PromptError> {
        let titles: Vec<&str> = self.sections.iter().map(|s| s.title.as_str()).collect();
        if titles != SECTION_TITLES {
            return Err(PromptError::Template(format!(
                "sections must be exactly {SECTION_TITLES:?} in order, found {titles:?}"
            )));
        }
        if let Some(s) = self.sections.iter().find(|s| !s.body.contains("{{tags}}")) {
            return Err(PromptError::Template(format!("section `{}` has no {{{{tags}}}} slot", s.title)));
        }
        if self.style.is_empty() {
            return Err(PromptError::Template("style block is empty".into()));
        }
        Ok(())
    }
}

fn slot_text(template: &PromptTemplate, section: &SectionSpec, tags: &TagSet) -> String {
    match section_category(&section.title) {
        Some(cat) => {
            let lines: Vec<String> =
                tags.iter().filter(|t| t.category() == cat).map(|t| format!("- {}", t.description())).collect();
            if lines.is_empty() {
                template.empty_note.clone()
            } else {
                lines.join("\n")
            }
        }
        None if tags.is_empty() => template.empty_note.clone(),
        None => template.reference.replace("{{count}}", &tags.len().to_string()),
    }
}

/// Renders the prompt for one student. Rejects tag sets that break the
/// mutual-exclusion rules.
pub fn render_prompt(tags: &TagSet, template: &PromptTemplate) -> Result<String, PromptError> {
    tags.validate()?;
    let mut out = String::new();
    out.push_str(&template.preamble);
    out.push_str("\n\nStyle requirements:\n");
    for line in &template.style {
        let _ = writeln!(out, "* {line}");
    }
    for section in &template.sections {
        let body = section.body.replace("{{tags}}", &slot_text(template, section, tags));
        let _ = write!(out, "\n## {}\n{}\n", section.title, body);
    }
    Ok(out)
}

/// Looks up which tag a rendered description line refers to.
pub fn tag_for_description(text: &str) -> Option<TagId> {
    TagId::ALL.into_iter().find(|t| t.description() == text)
}
