//! Recorded sensor traces: `t_offset_ms,topic,v1[,v2,...]` rows, with
//! symbolic smart-home events resolved through a `name,code` legend.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t_offset_ms: u64,
    pub topic: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("line {line}: offset goes backwards")]
    Unsorted { line: usize },
    #[error("invalid speed `{0}`: expected a positive number or `inf`")]
    BadSpeed(String),
}

/// Symbolic event names and their numeric codes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Legend(HashMap<String, f64>);

impl Legend {
    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let mut map = HashMap::new();
        for (i, row) in rows(text) {
            if i == 1 && row.first().map(|s| s.as_str()) == Some("name") {
                continue;
            }
            let [name, code] = row.as_slice() else {
                return Err(TraceError::Parse {
                    line: i,
                    detail: format!("expected `name,code`, found {} fields", row.len()),
                });
            };
            let code = parse_number(code).ok_or_else(|| TraceError::Parse {
                line: i,
                detail: format!("bad code `{code}`"),
            })?;
            map.insert(name.clone(), code);
        }
        Ok(Self(map))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        Self::parse(&read(path.as_ref())?)
    }

    pub fn code(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }
}

fn read(path: &Path) -> Result<String, TraceError> {
    std::fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Non-blank, non-comment CSV rows with their 1-based line numbers.
fn rows(text: &str) -> impl Iterator<Item = (usize, Vec<String>)> + '_ {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim_end_matches('\r');
        if l.trim().is_empty() || l.trim_start().starts_with('#') {
            return None;
        }
        Some((i + 1, l.split(',').map(|f| f.trim().to_string()).collect()))
    })
}

pub fn parse_trace(text: &str, legend: Option<&Legend>) -> Result<Vec<TraceRow>, TraceError> {
    let mut out: Vec<TraceRow> = Vec::new();
    for (line, fields) in rows(text) {
        if out.is_empty() && fields.first().map(|s| s.as_str()) == Some("t_offset_ms") {
            continue;
        }
        if fields.len() < 3 {
            return Err(TraceError::Parse {
                line,
                detail: "expected `t_offset_ms,topic,v1[,v2,...]`".into(),
            });
        }
        let t_offset_ms: u64 = fields[0].parse().map_err(|_| TraceError::Parse {
            line,
            detail: format!("bad offset `{}`", fields[0]),
        })?;
        if fields[1].is_empty() {
            return Err(TraceError::Parse {
                line,
                detail: "empty topic".into(),
            });
        }
        let values = fields[2..]
            .iter()
            .map(|v| {
                parse_number(v)
                    .or_else(|| legend.and_then(|l| l.code(v)))
                    .ok_or_else(|| TraceError::Parse {
                        line,
                        detail: format!("`{v}` is neither a number nor a legend name"),
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if out.last().is_some_and(|r| r.t_offset_ms > t_offset_ms) {
            return Err(TraceError::Unsorted { line });
        }
        out.push(TraceRow {
            t_offset_ms,
            topic: fields[1].clone(),
            values,
        });
    }
    Ok(out)
}

pub fn load_trace(path: impl AsRef<Path>, legend: Option<&Legend>) -> Result<Vec<TraceRow>, TraceError> {
    parse_trace(&read(path.as_ref())?, legend)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Speed {
    Finite(f64),
    Infinite,
}

impl Speed {
    /// Wall time after replay start at which a row is due; `None` means
    /// publish immediately.
    pub fn due(self, t_offset_ms: u64) -> Option<Duration> {
        match self {
            Speed::Infinite => None,
            Speed::Finite(s) => Some(Duration::from_secs_f64(t_offset_ms as f64 / 1000.0 / s)),
        }
    }
}

impl FromStr for Speed {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if matches!(s, "inf" | "infinity" | "∞") {
            return Ok(Speed::Infinite);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_infinite() && v > 0.0 => Ok(Speed::Infinite),
            Ok(v) if v > 0.0 => Ok(Speed::Finite(v)),
            _ => Err(TraceError::BadSpeed(s.to_string())),
        }
    }
}

impl fmt::Display for Speed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speed::Finite(v) => write!(f, "{v}"),
            Speed::Infinite => f.write_str("inf"),
        }
    }
}
