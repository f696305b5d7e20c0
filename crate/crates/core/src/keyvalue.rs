//! Flat `key = value` text format shared by config and scene files.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored. Keys
//! may repeat (scene files list several `static_path` lines); lookups that
//! expect a single value take the last occurrence.

use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: Vec<Entry>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    message: format!("expected `key = value`, found {content:?}"),
                });
            };
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(Error::Parse {
                    line,
                    message: format!("invalid key {key:?}"),
                });
            }
            entries.push(Entry {
                line,
                key: key.to_string(),
                value: value.trim().to_string(),
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Appends an override as if it were the last line of the file.
    pub fn push(&mut self, key: &str, value: &str) {
        let line = self.entries.last().map_or(0, |e| e.line) + 1;
        self.entries.push(Entry {
            line,
            key: key.to_string(),
            value: value.to_string(),
        });
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    pub fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.key == key)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key).map(|e| e.parse()).transpose()
    }

    /// Fails with the offending line for any key outside `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self
            .entries
            .iter()
            .find(|e| !known.contains(&e.key.as_str()))
        {
            Some(e) => Err(Error::Parse {
                line: e.line,
                message: format!("unknown key `{}`", e.key),
            }),
            None => Ok(()),
        }
    }
}

impl Entry {
    pub fn parse<T: FromStr>(&self) -> Result<T> {
        self.value.parse().map_err(|_| {
            self.error(format!(
                "cannot parse value {:?} for `{}`",
                self.value, self.key
            ))
        })
    }

    /// Comma-separated list of numbers.
    pub fn floats(&self) -> Result<Vec<f64>> {
        self.value
            .split(',')
            .map(|p| {
                p.trim().parse::<f64>().map_err(|_| {
                    self.error(format!("`{}`: {:?} is not a number", self.key, p.trim()))
                })
            })
            .collect()
    }

    pub fn error(&self, message: String) -> Error {
        Error::Parse {
            line: self.line,
            message,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_repeats() {
        let kv = KeyValues::parse("# header\na = 1\n\nb=2 # trailing\na = 3\n").unwrap();
        assert_eq!(kv.entries().len(), 3);
        assert_eq!(kv.parsed::<i32>("a").unwrap(), Some(3));
        assert_eq!(kv.all("a").count(), 2);
        assert_eq!(kv.get("b").unwrap().line, 4);
    }

    #[test]
    fn reports_line_numbers() {
        let err = KeyValues::parse("a = 1\nnot a pair\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let kv = KeyValues::parse("a = 1\nb = x\n").unwrap();
        let err = kv.parsed::<f64>("b").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = kv.reject_unknown(&["a"]).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
