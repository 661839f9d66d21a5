//! Flat `key=value` text used for configuration files and model sidecars.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored. Keys
//! carry section prefixes such as `arch.` or `train.`. Readers consume keys
//! explicitly and [`KvReader::finish`] rejects anything left unconsumed, so a
//! typo never silently falls back to a default.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KvError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("key {key:?}: cannot parse {value:?}: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("missing required key {0:?}")]
    Missing(String),
    #[error("unknown key(s): {}", .0.join(", "))]
    Unknown(Vec<String>),
}

/// Parsed key/value document. Keys keep insertion order for echoing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: Vec<(String, String)>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut doc = KvDoc::new();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(KvError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(KvError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            if seen.insert(key.clone(), i + 1).is_some() {
                return Err(KvError::Duplicate { line: i + 1, key });
            }
            doc.entries.push((key, v.trim().to_string()));
        }
        Ok(doc)
    }

    /// Sets `key`, replacing an existing value in place.
    pub fn set(&mut self, key: impl Into<String>, value: impl Display) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Copies every entry of `other` over this document (`other` wins).
    pub fn merge(&mut self, other: &KvDoc) {
        for (k, v) in &other.entries {
            self.set(k.clone(), v);
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn reader(&self) -> KvReader<'_> {
        KvReader {
            doc: self,
            used: vec![false; self.entries.len()],
        }
    }
}

/// Tracks which keys have been consumed.
pub struct KvReader<'a> {
    doc: &'a KvDoc,
    used: Vec<bool>,
}

impl<'a> KvReader<'a> {
    fn raw(&mut self, key: &str) -> Option<&'a str> {
        let idx = self.doc.entries.iter().position(|(k, _)| k == key)?;
        self.used[idx] = true;
        Some(self.doc.entries[idx].1.as_str())
    }

    /// Parses `key` if present.
    pub fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, KvError>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e: T::Err| KvError::Value {
                key: key.to_string(),
                value: v.to_string(),
                reason: e.to_string(),
            }),
        }
    }

    pub fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, KvError>
    where
        T::Err: Display,
    {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    pub fn req<T: FromStr>(&mut self, key: &str) -> Result<T, KvError>
    where
        T::Err: Display,
    {
        self.opt(key)?.ok_or_else(|| KvError::Missing(key.to_string()))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, KvError>
    where
        T::Err: Display,
    {
        let Some(v) = self.raw(key) else { return Ok(None) };
        if v.is_empty() {
            return Ok(Some(Vec::new()));
        }
        v.split(',')
            .map(|s| {
                s.trim().parse().map_err(|e: T::Err| KvError::Value {
                    key: key.to_string(),
                    value: v.to_string(),
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// Keys starting with `prefix` that have not been consumed yet.
    pub fn pending_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.doc
            .entries
            .iter()
            .zip(&self.used)
            .filter(|((k, _), &u)| !u && k.starts_with(prefix))
            .map(|((k, _), _)| k.clone())
            .collect()
    }

    /// Fails if any key was never consumed.
    pub fn finish(self) -> Result<(), KvError> {
        let unknown = self.pending_with_prefix("");
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(KvError::Unknown(unknown))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let doc = KvDoc::parse("# header\narch.pool1 = 4\n\ntrain.seed=7 # trailing\n").unwrap();
        let mut r = doc.reader();
        assert_eq!(r.req::<usize>("arch.pool1").unwrap(), 4);
        assert_eq!(r.req::<u64>("train.seed").unwrap(), 7);
        r.finish().unwrap();
    }

    #[test]
    fn unknown_keys_are_errors() {
        let doc = KvDoc::parse("arch.pool1=4\narch.pooll=5\n").unwrap();
        let mut r = doc.reader();
        r.opt::<usize>("arch.pool1").unwrap();
        assert_eq!(r.finish().unwrap_err(), KvError::Unknown(vec!["arch.pooll".into()]));
    }

    #[test]
    fn duplicates_and_syntax_errors() {
        assert!(matches!(KvDoc::parse("a=1\na=2"), Err(KvError::Duplicate { line: 2, .. })));
        assert!(matches!(KvDoc::parse("just text"), Err(KvError::Syntax { line: 1, .. })));
    }

    #[test]
    fn bad_values_name_the_key() {
        let doc = KvDoc::parse("train.folds=ten").unwrap();
        let err = doc.reader().req::<usize>("train.folds").unwrap_err();
        assert!(err.to_string().contains("train.folds"));
    }

    #[test]
    fn render_round_trips() {
        let mut doc = KvDoc::new();
        doc.set("a.b", 0.1f64);
        doc.set("a.c", "x,y");
        doc.set("a.b", 0.25f64);
        let again = KvDoc::parse(&doc.render()).unwrap();
        assert_eq!(again, doc);
        assert_eq!(again.get("a.b"), Some("0.25"));
    }
}
