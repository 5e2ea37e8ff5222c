//! Flat `key = value` configuration with later sources overriding earlier ones.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("I/O error reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("invalid value {value:?} for {key}: {msg}")]
    Value { key: String, value: String, msg: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("missing required key {0:?}")]
    Missing(&'static str),
}

/// Ordered key-value pairs. Keys are normalized to lowercase with `-`
/// replaced by `_`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues(BTreeMap<String, String>);

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses lines of `key = value`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            if k.trim().is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            kv.set(k, v.trim());
        }
        Ok(kv)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses a single `key=value` override.
    pub fn parse_pair(pair: &str) -> Result<(String, String), ConfigError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or(ConfigError::Syntax { line: 0 })?;
        Ok((normalize(k), v.trim().to_string()))
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.0.insert(normalize(key), value.into());
    }

    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), v.clone());
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Typed lookup; `Ok(None)` when absent.
    pub fn get<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e: T::Err| ConfigError::Value {
                key: key.to_string(),
                value: v.clone(),
                msg: e.to_string(),
            }),
        }
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut kv = KeyValues::parse("# comment\neps = 1e-3\nVariant = full\n\nmax-iters=5 # trailing\n").unwrap();
        assert_eq!(kv.get::<f64>("eps").unwrap(), Some(1e-3));
        assert_eq!(kv.raw("variant"), Some("full"));
        assert_eq!(kv.get::<usize>("max_iters").unwrap(), Some(5));
        let (k, v) = KeyValues::parse_pair("eps=0.01").unwrap();
        kv.set(&k, v);
        assert_eq!(kv.get::<f64>("eps").unwrap(), Some(0.01));
    }

    #[test]
    fn rejects_bad_lines_and_values() {
        assert!(matches!(KeyValues::parse("a = 1\nnope\n"), Err(ConfigError::Syntax { line: 2 })));
        let kv = KeyValues::parse("eps = abc").unwrap();
        assert!(kv.get::<f64>("eps").is_err());
    }
}
