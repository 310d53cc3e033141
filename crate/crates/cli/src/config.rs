//! Flat key=value experiment configuration.
//!
//! A config file is a list of `key = value` lines; `#` starts a comment.
//! Command-line flags override file values, so a config file captures an
//! experiment and flags tweak it.

use std::collections::HashMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Default, Clone)]
pub struct Config {
    map: HashMap<String, String>,
}

impl Config {
    pub fn empty() -> Self {
        Config::default()
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut map = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("{}:{}: expected key = value", path.display(), idx + 1))?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Config { map })
    }

    /// Flag override: later writers win.
    pub fn set(&mut self, key: &str, value: impl Display) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => {
                raw.parse().map(Some).map_err(|e| format!("config key {key} = {raw:?}: {e}"))
            }
        }
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, String>
    where
        T::Err: Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    /// Comma-separated list of numbers.
    pub fn list_f64(&self, key: &str) -> Result<Option<Vec<f64>>, String> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| format!("config key {key}: bad entry {s:?}: {e}"))
                })
                .collect::<Result<Vec<f64>, String>>()
                .map(Some),
        }
    }

    pub fn list_usize(&self, key: &str) -> Result<Option<Vec<usize>>, String> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|e| format!("config key {key}: bad entry {s:?}: {e}"))
                })
                .collect::<Result<Vec<usize>, String>>()
                .map(Some),
        }
    }

    /// A scalar broadcast to length n, or an explicit comma list of length n.
    pub fn vector_or(&self, key: &str, n: usize, default: f64) -> Result<Vec<f64>, String> {
        match self.list_f64(key)? {
            None => Ok(vec![default; n]),
            Some(v) if v.len() == 1 => Ok(vec![v[0]; n]),
            Some(v) if v.len() == n => Ok(v),
            Some(v) => {
                Err(format!("config key {key}: expected 1 or {n} entries, got {}", v.len()))
            }
        }
    }
}
