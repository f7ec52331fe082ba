//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("ConfigSyntax: line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("ConfigValue: key {key}: cannot parse {value:?}")]
    Value { key: String, value: String },
}

/// Ordered string map; rendering is sorted by key so resolved configs diff
/// cleanly.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValueConfig {
    entries: BTreeMap<String, String>,
}

impl KeyValueConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// `#` starts a comment; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: idx + 1 })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: idx + 1 });
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(KeyValueConfig { entries })
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| ConfigError::Value { key: key.to_string(), value: v.clone() }),
        }
    }

    pub fn set_if_present<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<(), ConfigError> {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Entries of `other` win.
    pub fn merge(&mut self, other: &KeyValueConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render() {
        let cfg = KeyValueConfig::parse("# comment\nseed = 4\n\nmacro.lr=0.001  # trailing\n").unwrap();
        assert_eq!(cfg.get::<u64>("seed").unwrap(), Some(4));
        assert_eq!(cfg.get::<f64>("macro.lr").unwrap(), Some(0.001));
        assert_eq!(cfg.get::<f64>("missing").unwrap(), None);
        assert_eq!(cfg.render(), "macro.lr = 0.001\nseed = 4\n");
        assert_eq!(KeyValueConfig::parse(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn errors() {
        assert_eq!(KeyValueConfig::parse("a = 1\nnonsense\n"), Err(ConfigError::Syntax { line: 2 }));
        let cfg = KeyValueConfig::parse("n = abc").unwrap();
        assert!(matches!(cfg.get::<usize>("n"), Err(ConfigError::Value { .. })));
    }

    #[test]
    fn merge_overrides() {
        let mut base = KeyValueConfig::parse("a = 1\nb = 2").unwrap();
        base.merge(&KeyValueConfig::parse("b = 3").unwrap());
        assert_eq!(base.get_str("b"), Some("3"));
        assert_eq!(base.get_str("a"), Some("1"));
    }
}
