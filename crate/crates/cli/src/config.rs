//! Flat key=value configuration with layered precedence: built-in defaults,
//! then a config file, then command-line flags. Later layers win.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;

use archetypal_core::{Error, Result};

/// Ordered key/value store backing every subcommand. Keys are plain
/// lowercase identifiers; values are kept as strings until typed access.
#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    map: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key = value` lines. Blank lines and lines starting with `#`
    /// are ignored; anything else without `=` is a parse error with its
    /// 1-based line number.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected key=value, got {line:?}"),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse { line: idx + 1, message: "empty key".into() });
            }
            self.map.insert(key.to_string(), value.trim().to_string());
        }
        Ok(())
    }

    #[cfg(test)]
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.map.insert(key.to_string(), value.into());
    }

    /// Inserts the stringified value when present; used to layer CLI flags
    /// on top of file entries.
    pub fn set_opt<T: Display>(&mut self, key: &str, value: &Option<T>) {
        if let Some(v) = value {
            self.map.insert(key.to_string(), v.to_string());
        }
    }

    /// Applies a raw `key=value` override (the repeatable `--set` flag).
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(Error::InvalidInput(format!(
                "--set expects key=value, got {pair:?}"
            )));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::InvalidInput("--set has an empty key".into()));
        }
        self.map.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::InvalidInput(format!("missing required setting {key:?}")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, raw: &str) -> Result<T> {
        raw.parse().map_err(|_| {
            Error::InvalidInput(format!("setting {key:?} has unparsable value {raw:?}"))
        })
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(raw) => self.parse(key, raw),
            None => Ok(default),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            Some(raw) => self.parse(key, raw),
            None => Ok(default),
        }
    }

    pub fn usize_opt(&self, key: &str) -> Result<Option<usize>> {
        match self.get(key) {
            Some(raw) => Ok(Some(self.parse(key, raw)?)),
            None => Ok(None),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            Some(raw) => self.parse(key, raw),
            None => Ok(default),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    /// Comma-separated list of floats, e.g. `sigma_grid = 0,5e-4,1e-3`.
    pub fn f64_list(&self, key: &str, raw: &str) -> Result<Vec<f64>> {
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| self.parse(key, s))
            .collect()
    }

    pub fn u64_list(&self, key: &str, raw: &str) -> Result<Vec<u64>> {
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| self.parse(key, s))
            .collect()
    }

    /// Snapshot of every effective setting, echoed into output JSON so a
    /// run is reproducible from its own report.
    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.map
    }
}
