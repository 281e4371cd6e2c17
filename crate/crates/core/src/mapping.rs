//! Tables mapping service outputs onto ontology classes: classifier labels,
//! or numeric smart-home event codes, to a context class and an optional
//! fixed confidence.

use std::path::Path;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct MapEntry {
    pub key: String,
    pub context: String,
    pub confidence: Option<f64>,
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("cannot read map: {0}")]
    Io(#[from] std::io::Error),
    #[error("map line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

/// Rows of `key,context[,confidence]`; a `key,...` header is skipped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContextMap {
    entries: Vec<MapEntry>,
}

impl ContextMap {
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = l.split(',').map(str::trim).collect();
            if entries.is_empty() && fields[0] == "key" {
                continue;
            }
            if !(2..=3).contains(&fields.len()) || fields[0].is_empty() || fields[1].is_empty() {
                return Err(MapError::Parse {
                    line,
                    detail: "expected `key,context[,confidence]`".into(),
                });
            }
            let confidence = match fields.get(2) {
                None => None,
                Some(c) => Some(
                    c.parse::<f64>()
                        .ok()
                        .filter(|c| (0.0..=1.0).contains(c))
                        .ok_or_else(|| MapError::Parse {
                            line,
                            detail: format!("confidence `{c}` is not in [0, 1]"),
                        })?,
                ),
            };
            entries.push(MapEntry {
                key: fields[0].to_string(),
                context: fields[1].to_string(),
                confidence,
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MapError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn entries(&self) -> &[MapEntry] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&MapEntry> {
        self.entries.iter().find(|e| e.key == key)
    }

    /// Entry whose key parses to the numeric event code.
    pub fn get_code(&self, code: f64) -> Option<&MapEntry> {
        self.entries.iter().find(|e| e.key.parse::<f64>().ok() == Some(code))
    }
}
