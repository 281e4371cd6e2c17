//! Persisted service repository with heartbeat liveness.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{Hello, ServiceKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Online,
    Offline,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceRecord {
    /// 128-bit random token in hex.
    pub id: String,
    pub kind: ServiceKind,
    pub name: String,
    pub subscriptions: BTreeSet<String>,
    pub last_heartbeat: u64,
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub id: String,
    pub name: String,
    pub to: Status,
    pub at: u64,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registry {path} is corrupt ({detail}); move it aside or delete it to start with an empty registry")]
    Corrupt { path: String, detail: String },
    #[error("registry i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    services: Vec<ServiceRecord>,
}

#[derive(Clone, Debug, Default)]
pub struct Registry {
    path: Option<PathBuf>,
    records: Vec<ServiceRecord>,
}

impl Registry {
    /// A registry that is never written to disk.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path` (missing means empty). Every loaded service starts
    /// offline until it is heard from again.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref().to_path_buf();
        let shown = path.display().to_string();
        let records = match fs::read_to_string(&path) {
            Ok(text) => {
                let file: RegistryFile = serde_json::from_str(&text).map_err(|e| RegistryError::Corrupt {
                    path: shown.clone(),
                    detail: e.to_string(),
                })?;
                let mut ids = BTreeSet::new();
                for r in &file.services {
                    if !ids.insert(&r.id) {
                        return Err(RegistryError::Corrupt {
                            path: shown,
                            detail: format!("duplicate id {}", r.id),
                        });
                    }
                }
                file.services
                    .into_iter()
                    .map(|r| ServiceRecord {
                        status: Status::Offline,
                        ..r
                    })
                    .collect()
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(source) => return Err(RegistryError::Io { path: shown, source }),
        };
        Ok(Self {
            path: Some(path),
            records,
        })
    }

    pub fn records(&self) -> &[ServiceRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&ServiceRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    fn get_mut(&mut self, id: &str) -> Option<&mut ServiceRecord> {
        self.records.iter_mut().find(|r| r.id == id)
    }

    /// Creates or refreshes the record for `hello`; the same name and kind
    /// keep their id. Returns the record and whether it is new.
    pub fn register(&mut self, hello: &Hello, now: u64) -> Result<(ServiceRecord, bool), RegistryError> {
        let subs: BTreeSet<String> = hello.subscriptions.iter().cloned().collect();
        let (record, created) = match self
            .records
            .iter_mut()
            .find(|r| r.name == hello.name && r.kind == hello.kind)
        {
            Some(r) => {
                r.subscriptions = subs;
                r.last_heartbeat = now;
                r.status = Status::Online;
                (r.clone(), false)
            }
            None => {
                let r = ServiceRecord {
                    id: uuid::Uuid::new_v4().simple().to_string(),
                    kind: hello.kind,
                    name: hello.name.clone(),
                    subscriptions: subs,
                    last_heartbeat: now,
                    status: Status::Online,
                };
                self.records.push(r.clone());
                (r, true)
            }
        };
        self.save()?;
        Ok((record, created))
    }

    pub fn unregister(&mut self, id: &str) -> Result<bool, RegistryError> {
        let before = self.records.len();
        self.records.retain(|r| r.id != id);
        let removed = self.records.len() != before;
        if removed {
            self.save()?;
        }
        Ok(removed)
    }

    pub fn subscribe(&mut self, id: &str, topics: &[String]) -> Result<bool, RegistryError> {
        let Some(r) = self.get_mut(id) else {
            return Ok(false);
        };
        r.subscriptions.extend(topics.iter().cloned());
        self.save()?;
        Ok(true)
    }

    /// Records that `id` was heard from; reports the flip back online.
    pub fn touch(&mut self, id: &str, now: u64) -> Result<Option<Transition>, RegistryError> {
        let Some(r) = self.get_mut(id) else {
            return Ok(None);
        };
        r.last_heartbeat = r.last_heartbeat.max(now);
        if r.status == Status::Online {
            return Ok(None);
        }
        r.status = Status::Online;
        let t = Transition {
            id: r.id.clone(),
            name: r.name.clone(),
            to: Status::Online,
            at: now,
        };
        info!("service {} ({}) is online", t.name, t.id);
        self.save()?;
        Ok(Some(t))
    }

    pub fn set_offline(&mut self, id: &str, now: u64) -> Result<Option<Transition>, RegistryError> {
        let Some(r) = self.get_mut(id).filter(|r| r.status == Status::Online) else {
            return Ok(None);
        };
        r.status = Status::Offline;
        let t = Transition {
            id: r.id.clone(),
            name: r.name.clone(),
            to: Status::Offline,
            at: now,
        };
        info!("service {} ({}) is offline", t.name, t.id);
        self.save()?;
        Ok(Some(t))
    }

    /// Marks offline every online service silent for longer than
    /// `interval_ms * misses`.
    pub fn tick(&mut self, now: u64, interval_ms: u64, misses: u64) -> Result<Vec<Transition>, RegistryError> {
        let budget = interval_ms.saturating_mul(misses);
        let mut out = Vec::new();
        for r in &mut self.records {
            if r.status == Status::Online && now.saturating_sub(r.last_heartbeat) > budget {
                r.status = Status::Offline;
                info!(
                    "service {} ({}) silent for {} ms; offline",
                    r.name,
                    r.id,
                    now - r.last_heartbeat
                );
                out.push(Transition {
                    id: r.id.clone(),
                    name: r.name.clone(),
                    to: Status::Offline,
                    at: now,
                });
            }
        }
        if !out.is_empty() {
            self.save()?;
        }
        Ok(out)
    }

    /// Earliest time at which [`Registry::tick`] would mark some online
    /// service offline.
    pub fn next_deadline(&self, interval_ms: u64, misses: u64) -> Option<u64> {
        let budget = interval_ms.saturating_mul(misses);
        self.records
            .iter()
            .filter(|r| r.status == Status::Online)
            .map(|r| r.last_heartbeat.saturating_add(budget).saturating_add(1))
            .min()
    }

    /// Online services subscribed to `topic`, in registration order.
    pub fn subscribers<'a>(&'a self, topic: &'a str) -> impl Iterator<Item = &'a ServiceRecord> + 'a {
        self.records
            .iter()
            .filter(move |r| r.status == Status::Online && r.subscriptions.contains(topic))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&RegistryFile {
            services: self.records.clone(),
        })
        .expect("registry serializes");
        s.push('\n');
        s
    }

    /// Writes the registry via a temporary file and an atomic rename.
    pub fn save(&self) -> Result<(), RegistryError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let io_err = |source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        };
        let dir = path
            .parent()
            .filter(|d| !d.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(dir).map_err(io_err)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
        tmp.write_all(self.to_json().as_bytes()).map_err(io_err)?;
        tmp.as_file().sync_all().map_err(io_err)?;
        tmp.persist(path).map_err(|e| io_err(e.error))?;
        Ok(())
    }
}
