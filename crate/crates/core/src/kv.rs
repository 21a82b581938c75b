//! Flat `key = value` text files used for configuration and synth profiles.
//!
//! Blank lines and lines starting with `#` are ignored. Values may be wrapped
//! in double quotes. Keys repeat at most once.

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KvError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
}

pub(crate) fn parse(text: &str) -> Result<BTreeMap<String, String>, KvError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(KvError::Syntax { line: i + 1 })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(KvError::Syntax { line: i + 1 });
        }
        let mut value = value.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        }
        if out.insert(key.to_owned(), value.to_owned()).is_some() {
            return Err(KvError::Duplicate { line: i + 1, key: key.to_owned() });
        }
    }
    Ok(out)
}
