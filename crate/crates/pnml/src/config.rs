//! Flat `key = value` text files with typed, line-numbered validation.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may repeat only
//! if the caller never asks for them; duplicates are rejected at parse time.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line, or `None` for a key that is missing altogether.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, Entry>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(ConfigError {
                    line: Some(line),
                    message: format!("expected `key = value`, found `{trimmed}`"),
                });
            };
            let key = key.trim();
            if key.is_empty() || key.chars().any(char::is_whitespace) {
                return Err(ConfigError {
                    line: Some(line),
                    message: format!("invalid key `{key}`"),
                });
            }
            let entry = Entry {
                value: value.trim().to_string(),
                line,
            };
            if let Some(prev) = entries.insert(key.to_string(), entry) {
                return Err(ConfigError {
                    line: Some(line),
                    message: format!("duplicate key `{key}` (first set on line {})", prev.line),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Ok((Self::parse(&text)?, text))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|e| e.line)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn error_at(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.line_of(key),
            message: message.into(),
        }
    }

    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key).ok_or_else(|| ConfigError {
            line: None,
            message: format!("missing required key `{key}`"),
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|err| ConfigError {
                line: Some(e.line),
                message: format!("`{key}`: cannot parse `{}`: {err}", e.value),
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn get_required<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.require(key)?;
        Ok(self.get(key)?.expect("presence checked"))
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let Some(e) = self.entries.get(key) else {
            return Ok(None);
        };
        if e.value.is_empty() {
            return Ok(Some(Vec::new()));
        }
        e.value
            .split(',')
            .map(|item| {
                let item = item.trim();
                item.parse().map_err(|err| ConfigError {
                    line: Some(e.line),
                    message: format!("`{key}`: cannot parse list item `{item}`: {err}"),
                })
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    /// Rejects keys outside `allowed` (entries ending in `.` match as prefixes).
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for (key, e) in &self.entries {
            let known = allowed
                .iter()
                .any(|a| if a.ends_with('.') { key.starts_with(a) } else { key == a });
            if !known {
                return Err(ConfigError {
                    line: Some(e.line),
                    message: format!("unknown key `{key}`"),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_types() {
        let kv = KeyValues::parse("# header\nkind = synthetic\n\nsigma_sq = 0.5\ndegrees = 10, 20,50\n").unwrap();
        assert_eq!(kv.require("kind").unwrap(), "synthetic");
        assert_eq!(kv.get::<f64>("sigma_sq").unwrap(), Some(0.5));
        assert_eq!(kv.get_list::<usize>("degrees").unwrap(), Some(vec![10, 20, 50]));
        assert_eq!(kv.line_of("degrees"), Some(5));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = KeyValues::parse("a = 1\nnot a pair\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        let err = KeyValues::parse("a = 1\nb = 2\na = 3\n").unwrap_err();
        assert_eq!(err.line, Some(3));
        let kv = KeyValues::parse("x = 1\ny = oops\n").unwrap();
        let err = kv.get::<f64>("y").unwrap_err();
        assert_eq!(err.to_string(), "line 2: `y`: cannot parse `oops`: invalid float literal");
        let err = kv.reject_unknown(&["x"]).unwrap_err();
        assert_eq!(err.line, Some(2));
        assert!(kv.reject_unknown(&["x", "y"]).is_ok());
        assert!(kv.require("z").unwrap_err().line.is_none());
    }
}
