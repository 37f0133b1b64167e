//! Flat `key = value` text documents with `#` comments and optional
//! `[section]` headers. Used for config files and scene files.

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// A run of entries under one header. The first section has no header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Section {
    pub name: Option<String>,
    pub line: usize,
    pub entries: Vec<Entry>,
}

pub fn parse(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections = vec![Section::default()];
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                message: "unterminated section header".into(),
            })?;
            sections.push(Section {
                name: Some(name.trim().to_string()),
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: line_no,
                message: "empty key".into(),
            });
        }
        sections
            .last_mut()
            .expect("at least one section")
            .entries
            .push(Entry {
                line: line_no,
                key: key.to_string(),
                value: value.trim().to_string(),
            });
    }
    Ok(sections)
}

pub fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = value
        .parse()
        .map_err(|_| ConfigError::invalid(key, format!("`{value}` is not a number")))?;
    if !v.is_finite() {
        return Err(ConfigError::invalid(key, "must be finite"));
    }
    Ok(v)
}

pub fn parse_usize(key: &str, value: &str) -> Result<usize, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::invalid(key, format!("`{value}` is not a non-negative integer")))
}

pub fn parse_u64(key: &str, value: &str) -> Result<u64, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::invalid(key, format!("`{value}` is not a non-negative integer")))
}

pub fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::invalid(key, format!("`{value}` is not a boolean"))),
    }
}

/// Parses `lo, hi` or `[lo, hi]`.
pub fn parse_pair(key: &str, value: &str) -> Result<[f64; 2], ConfigError> {
    let inner = value
        .trim()
        .trim_start_matches('[')
        .trim_end_matches(']');
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(ConfigError::invalid(key, "expected two comma-separated numbers"));
    }
    Ok([parse_f64(key, parts[0])?, parse_f64(key, parts[1])?])
}
