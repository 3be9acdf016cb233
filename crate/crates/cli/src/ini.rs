//! Sectioned `key = value` text with line-precise diagnostics.
//!
//! ```text
//! # comment
//! [section]
//! key = value
//! ```
//!
//! Keys are addressed as `section.key`. Every key must be consumed by the
//! reader; leftovers are reported as unknown.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub file: Option<String>,
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    pub fn at(line: usize, key: Option<&str>, message: impl Into<String>) -> Self {
        Self { file: None, line: Some(line), key: key.map(str::to_owned), message: message.into() }
    }

    pub fn missing(key: &str) -> Self {
        Self { file: None, line: None, key: Some(key.to_owned()), message: format!("missing required key `{key}`") }
    }

    pub fn general(message: impl Into<String>) -> Self {
        Self { file: None, line: None, key: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.file, self.line) {
            (Some(file), Some(line)) => write!(f, "{file}:{line}: {}", self.message),
            (Some(file), None) => write!(f, "{file}: {}", self.message),
            (None, Some(line)) => write!(f, "line {line}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Default)]
pub struct Ini {
    entries: Vec<Entry>,
    used: RefCell<BTreeSet<usize>>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<Entry> = Vec::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line_no, None, "unterminated section header"))?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    return Err(ConfigError::at(line_no, None, format!("invalid section name `{name}`")));
                }
                section = Some(name.to_owned());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line_no, None, format!("expected `key = value`, found `{line}`")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::at(line_no, None, "empty key"));
            }
            let section = section
                .as_deref()
                .ok_or_else(|| ConfigError::at(line_no, Some(k), format!("key `{k}` appears before any section")))?;
            let key = format!("{section}.{k}");
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(ConfigError::at(
                    line_no,
                    Some(&key),
                    format!("duplicate key `{key}` (first set on line {})", prev.line),
                ));
            }
            entries.push(Entry { key, value: v.trim().to_owned(), line: line_no });
        }
        Ok(Self { entries, used: RefCell::default() })
    }

    fn find(&self, key: &str) -> Option<&Entry> {
        let idx = self.entries.iter().position(|e| e.key == key)?;
        self.used.borrow_mut().insert(idx);
        Some(&self.entries[idx])
    }

    pub fn raw(&self, key: &str) -> Option<&Entry> {
        self.find(key)
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.find(key).map(|e| e.value.clone())
    }

    pub fn require_string(&self, key: &str) -> Result<(String, usize), ConfigError> {
        let e = self.find(key).ok_or_else(|| ConfigError::missing(key))?;
        if e.value.is_empty() {
            return Err(ConfigError::at(e.line, Some(key), format!("`{key}` is empty")));
        }
        Ok((e.value.clone(), e.line))
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.find(key) {
            None => Ok(default),
            Some(e) => parse_value(e),
        }
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.find(key).map(parse_value).transpose()
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn list_or<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let Some(e) = self.find(key) else {
            return Ok(default);
        };
        if e.value.is_empty() {
            return Ok(Vec::new());
        }
        e.value
            .split(',')
            .map(|part| {
                part.trim().parse::<T>().map_err(|err| {
                    ConfigError::at(e.line, Some(&e.key), format!("`{}`: cannot parse `{}`: {err}", e.key, part.trim()))
                })
            })
            .collect()
    }

    /// Entries of `section` in file order, marked as used.
    pub fn section(&self, section: &str) -> Vec<Entry> {
        let prefix = format!("{section}.");
        let mut used = self.used.borrow_mut();
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.key.starts_with(&prefix))
            .map(|(i, e)| {
                used.insert(i);
                Entry { key: e.key[prefix.len()..].to_owned(), value: e.value.clone(), line: e.line }
            })
            .collect()
    }

    /// Every key present, without marking any as used.
    pub fn keys(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.key.clone()).collect()
    }

    /// Errors on the first entry nobody asked for.
    pub fn reject_unused(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        match self.entries.iter().enumerate().find(|(i, _)| !used.contains(i)) {
            Some((_, e)) => Err(ConfigError::at(e.line, Some(&e.key), format!("unknown key `{}`", e.key))),
            None => Ok(()),
        }
    }
}

fn parse_value<T: FromStr>(e: &Entry) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    e.value
        .parse::<T>()
        .map_err(|err| ConfigError::at(e.line, Some(&e.key), format!("`{}`: cannot parse `{}`: {err}", e.key, e.value)))
}
