//! Minimal `key=value` text format used by profiles, truth files, fixture
//! field files and configs. `#` starts a comment line; blank lines are
//! ignored; later duplicates override earlier ones.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KvError {
    #[error("line {0}: expected key=value")]
    Syntax(usize),
    #[error("missing key {0}")]
    Missing(String),
    #[error("invalid value for {key}: {value:?}")]
    Invalid { key: String, value: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(KvError::Syntax(i + 1))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(KvError::Syntax(i + 1));
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, KvError> {
        self.get(key).ok_or_else(|| KvError::Missing(key.to_string()))
    }

    /// Parses `key` if present; empty values count as absent.
    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, KvError> {
        match self.get(key) {
            None | Some("") => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| KvError::Invalid {
                key: key.to_string(),
                value: v.to_string(),
            }),
        }
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, KvError> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn require_parsed<T: FromStr>(&self, key: &str) -> Result<T, KvError> {
        self.parsed(key)?
            .ok_or_else(|| KvError::Missing(key.to_string()))
    }

    /// Comma-separated list; an absent or empty value is an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, KvError> {
        split_list(self.get(key).unwrap_or(""))
            .map(|item| {
                item.parse().map_err(|_| KvError::Invalid {
                    key: key.to_string(),
                    value: item.to_string(),
                })
            })
            .collect()
    }

    /// Keys starting with `prefix`, with the prefix stripped.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> {
        self.entries
            .iter()
            .filter_map(move |(k, v)| k.strip_prefix(prefix).map(|rest| (rest, v.as_str())))
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

pub fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

pub fn join_list<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_lookup() {
        let kv = KvMap::parse("# profile\nseed = 7\n\nsegments=60:60,30:90\nempty=\n").unwrap();
        assert_eq!(kv.require_parsed::<u64>("seed").unwrap(), 7);
        assert_eq!(kv.list::<String>("segments").unwrap(), vec!["60:60", "30:90"]);
        assert_eq!(kv.parsed::<f64>("empty").unwrap(), None);
        assert!(matches!(kv.require("nope"), Err(KvError::Missing(_))));
        assert!(matches!(kv.parsed::<u8>("seed"), Ok(Some(7))));
        assert!(matches!(KvMap::parse("no equals sign"), Err(KvError::Syntax(1))));
    }

    #[test]
    fn text_round_trip() {
        let mut kv = KvMap::default();
        kv.insert("b", 2);
        kv.insert("a", "x,y");
        assert_eq!(KvMap::parse(&kv.to_text()).unwrap(), kv);
    }
}
