//! Core configuration: line-based `key = value` with `#` comments.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AboxSeed {
    /// Only the file's type assertions; role facts arrive as contexts.
    Types,
    All,
    None,
}

impl FromStr for AboxSeed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "types" => Ok(AboxSeed::Types),
            "all" => Ok(AboxSeed::All),
            "none" => Ok(AboxSeed::None),
            _ => Err(format!("expected types, all or none, got `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoreConfig {
    pub bind: SocketAddr,
    pub ontology_path: PathBuf,
    pub registry_path: PathBuf,
    pub history_path: PathBuf,
    pub confidence_threshold: f64,
    pub heartbeat_interval_ms: u64,
    pub heartbeat_misses: u64,
    pub context_ttl_ms: u64,
    pub transient_classes: BTreeSet<String>,
    pub tick_ms: u64,
    pub abox_seed: AboxSeed,
    pub sensor_log_path: Option<PathBuf>,
    pub prediction_timeout_ms: u64,
}

pub const DEFAULT_BIND: &str = "127.0.0.1:7468";

impl CoreConfig {
    /// Defaults with the given ontology, all files relative to `dir`.
    pub fn with_ontology(ontology_path: impl Into<PathBuf>, dir: &Path) -> Self {
        Self {
            bind: DEFAULT_BIND.parse().expect("valid default"),
            ontology_path: ontology_path.into(),
            registry_path: dir.join("services.json"),
            history_path: dir.join("history.jsonl"),
            confidence_threshold: 0.5,
            heartbeat_interval_ms: 5000,
            heartbeat_misses: 3,
            context_ttl_ms: 300_000,
            transient_classes: BTreeSet::new(),
            tick_ms: 1000,
            abox_seed: AboxSeed::Types,
            sensor_log_path: None,
            prediction_timeout_ms: 5000,
        }
    }

    /// Parses config text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::with_ontology(PathBuf::new(), base_dir);
        let mut have_ontology = false;
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.split('#').next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            let (key, value) = l.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                detail: "expected `key = value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Syntax {
                    line,
                    detail: format!("duplicate key `{key}`"),
                });
            }
            let bad = |detail: String| ConfigError::Value {
                line,
                key: key.to_string(),
                detail,
            };
            let path = |v: &str| base_dir.join(v);
            let int = |v: &str| v.parse::<u64>().map_err(|e| bad(e.to_string()));
            match key {
                "bind" => {
                    cfg.bind = value
                        .parse()
                        .map_err(|e: std::net::AddrParseError| bad(e.to_string()))?
                }
                "ontology_path" => {
                    cfg.ontology_path = path(value);
                    have_ontology = true;
                }
                "registry_path" => cfg.registry_path = path(value),
                "history_path" => cfg.history_path = path(value),
                "sensor_log_path" => cfg.sensor_log_path = Some(path(value)),
                "confidence_threshold" => {
                    cfg.confidence_threshold = value
                        .parse::<f64>()
                        .ok()
                        .filter(|t| (0.0..=1.0).contains(t))
                        .ok_or_else(|| bad("must be a number in [0, 1]".into()))?
                }
                "heartbeat_interval_ms" => cfg.heartbeat_interval_ms = int(value)?,
                "heartbeat_misses" => cfg.heartbeat_misses = int(value)?,
                "context_ttl_ms" => cfg.context_ttl_ms = int(value)?,
                "tick_ms" => cfg.tick_ms = int(value)?.max(1),
                "prediction_timeout_ms" => cfg.prediction_timeout_ms = int(value)?,
                "abox_seed" => cfg.abox_seed = value.parse().map_err(bad)?,
                "transient_classes" => {
                    cfg.transient_classes = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect()
                }
                other => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: other.into(),
                    })
                }
            }
        }
        if !have_ontology {
            return Err(ConfigError::MissingKey("ontology_path"));
        }
        if !cfg.bind.ip().is_loopback() {
            return Err(ConfigError::NotLoopback(cfg.bind));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("config line {line}: {detail}")]
    Syntax { line: usize, detail: String },
    #[error("config line {line}: bad value for `{key}`: {detail}")]
    Value { line: usize, key: String, detail: String },
    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("config is missing `{0}`")]
    MissingKey(&'static str),
    #[error("bind address {0} is not a loopback address")]
    NotLoopback(SocketAddr),
}
