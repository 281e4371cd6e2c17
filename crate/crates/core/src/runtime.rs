//! The framework core's state machine: service registry, context ingest into
//! the ABox, realization, publications, expiry and queries. Time is passed
//! in explicitly so every transition is reproducible.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::sync::Arc;

use log::{info, warn};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{AboxSeed, CoreConfig};
use crate::history::{HistoryError, HistoryRecord, HistoryStore};
use crate::ontology::{parse_ontology, ABoxAssertion, ClassExpression, Ontology, OntologyError, Realization, Reasoner};
use crate::protocol::{Cleared, ContextNotice, ErrorCode, Hello, Query, Sensor};
use crate::registry::{Registry, RegistryError, ServiceRecord, Transition};

/// Source id the core stamps on contexts it derives.
pub const REASONER_SOURCE: &str = "reasoner";

#[derive(Clone, Debug, PartialEq)]
pub struct ContextEvent {
    pub subject: String,
    pub context: String,
    pub confidence: f64,
    /// Sender's timestamp; the core records its own ingest time.
    pub ts: u64,
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RejectReason {
    BelowThreshold,
    UnknownName(String),
}

impl RejectReason {
    pub fn describe(&self) -> String {
        match self {
            RejectReason::BelowThreshold => "below confidence threshold".into(),
            RejectReason::UnknownName(n) => format!("unknown name `{n}`"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum IngestOutcome {
    Accepted {
        /// The ABox gained an assertion (false when an existing one was refreshed).
        changed: bool,
        derived: Vec<ContextNotice>,
        cleared: Vec<Cleared>,
    },
    Rejected(RejectReason),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Expiry {
    pub retracted: Vec<(String, String)>,
    pub cleared: Vec<Cleared>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub sensor_received: u64,
    pub sensor_delivered: u64,
    pub sensor_dropped: u64,
}

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("cannot load ontology {path}: {detail}")]
    OntologyLoad { path: String, detail: String },
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("history store unavailable: {0}")]
    History(String),
    #[error("reasoning failed: {0}")]
    Reasoning(#[from] OntologyError),
    #[error("sensor log: {0}")]
    SensorLog(#[from] std::io::Error),
}

impl From<HistoryError> for CoreError {
    fn from(e: HistoryError) -> Self {
        CoreError::History(e.to_string())
    }
}

/// A query failure, as sent back in an `error` reply.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryError {
    pub code: ErrorCode,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
struct Active {
    confidence: f64,
    ingested: u64,
}

pub struct CoreState {
    config: CoreConfig,
    base: Ontology,
    reasoner: Reasoner,
    realization: Arc<Realization>,
    registry: Registry,
    history: HistoryStore,
    history_fault: Option<String>,
    current: BTreeMap<(String, String), Active>,
    derived: BTreeMap<(String, String), f64>,
    counters: Counters,
    sensor_log: Option<File>,
}

/// Loads the ontology named by the config.
pub fn load_ontology(config: &CoreConfig) -> Result<Ontology, CoreError> {
    let path = config.ontology_path.display().to_string();
    let text = std::fs::read_to_string(&config.ontology_path).map_err(|e| CoreError::OntologyLoad {
        path: path.clone(),
        detail: e.to_string(),
    })?;
    parse_ontology(&text).map_err(|e| CoreError::OntologyLoad {
        path,
        detail: e.to_string(),
    })
}

impl CoreState {
    /// Loads ontology, registry and history as configured.
    pub fn start(config: CoreConfig) -> Result<Self, CoreError> {
        let ontology = load_ontology(&config)?;
        let registry = Registry::load(&config.registry_path)?;
        let (history, report) = HistoryStore::open(&config.history_path)?;
        info!(
            "loaded {} services and {} history records",
            registry.records().len(),
            report.records
        );
        Self::new(config, ontology, registry, history)
    }

    pub fn new(
        config: CoreConfig,
        ontology: Ontology,
        registry: Registry,
        history: HistoryStore,
    ) -> Result<Self, CoreError> {
        let mut base = ontology;
        match config.abox_seed {
            AboxSeed::All => {}
            AboxSeed::Types => base.abox.retain(|a| matches!(a, ABoxAssertion::Type(..))),
            AboxSeed::None => base.abox.clear(),
        }
        let reasoner = Reasoner::new(&base)?;
        let realization = Arc::new(reasoner.realize(&base)?);
        let sensor_log = match &config.sensor_log_path {
            Some(p) => Some(OpenOptions::new().create(true).append(true).open(p)?),
            None => None,
        };
        Ok(Self {
            config,
            base,
            reasoner,
            realization,
            registry,
            history,
            history_fault: None,
            current: BTreeMap::new(),
            derived: BTreeMap::new(),
            counters: Counters::default(),
            sensor_log,
        })
    }

    pub fn config(&self) -> &CoreConfig {
        &self.config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn history(&self) -> &HistoryStore {
        &self.history
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    /// The latest realization; always consistent with [`Self::abox`].
    pub fn realization(&self) -> Arc<Realization> {
        Arc::clone(&self.realization)
    }

    /// The ABox currently reasoned over: background plus accepted contexts.
    pub fn abox(&self) -> Ontology {
        self.ontology_with(self.current.keys())
    }

    fn ontology_with<'a>(&self, pairs: impl IntoIterator<Item = &'a (String, String)>) -> Ontology {
        let adds: Vec<ABoxAssertion> = pairs
            .into_iter()
            .map(|(s, c)| {
                let i = self.base.vocab.individual_id(s).expect("checked on ingest");
                let c = self.base.vocab.class_id(c).expect("checked on ingest");
                ABoxAssertion::Type(i, ClassExpression::Atomic(c))
            })
            .collect();
        self.base.apply_abox_delta(adds, []).expect("names checked on ingest")
    }

    fn append_history(&mut self, ev: &ContextEvent, now: u64, accepted: bool) -> Result<(), CoreError> {
        if let Some(f) = &self.history_fault {
            return Err(CoreError::History(f.clone()));
        }
        let rec = HistoryRecord {
            ts: now,
            subject: ev.subject.clone(),
            context: ev.context.clone(),
            confidence: ev.confidence,
            source: ev.source.clone(),
            accepted,
        };
        if let Err(e) = self.history.append(rec) {
            warn!("history append failed, refusing ingests: {e}");
            self.history_fault = Some(e.to_string());
            return Err(e.into());
        }
        Ok(())
    }

    /// Re-opens a faulted history store. Returns whether ingest is possible.
    pub fn retry_history(&mut self) -> bool {
        if self.history_fault.is_none() {
            return true;
        }
        match HistoryStore::open(self.history.path()) {
            Ok((store, _)) => {
                info!("history store recovered");
                self.history = store;
                self.history_fault = None;
                true
            }
            Err(e) => {
                self.history_fault = Some(e.to_string());
                false
            }
        }
    }

    /// Applies one context event. Rejected events are still logged.
    pub fn ingest(&mut self, ev: ContextEvent, now: u64) -> Result<IngestOutcome, CoreError> {
        let vocab = &self.base.vocab;
        let unknown = if vocab.individual_id(&ev.subject).is_none() {
            Some(ev.subject.clone())
        } else if vocab.class_id(&ev.context).is_none() {
            Some(ev.context.clone())
        } else {
            None
        };
        if let Some(name) = unknown {
            self.append_history(&ev, now, false)?;
            return Ok(IngestOutcome::Rejected(RejectReason::UnknownName(name)));
        }
        if ev.confidence.is_nan() || ev.confidence < self.config.confidence_threshold {
            self.append_history(&ev, now, false)?;
            return Ok(IngestOutcome::Rejected(RejectReason::BelowThreshold));
        }
        self.append_history(&ev, now, true)?;
        let key = (ev.subject.clone(), ev.context.clone());
        let previous = self.current.insert(
            key,
            Active {
                confidence: ev.confidence,
                ingested: now,
            },
        );
        if previous.is_some() {
            return Ok(IngestOutcome::Accepted {
                changed: false,
                derived: Vec::new(),
                cleared: Vec::new(),
            });
        }
        let (derived, cleared) = self.recompute(now)?;
        Ok(IngestOutcome::Accepted {
            changed: true,
            derived,
            cleared,
        })
    }

    /// Re-realizes after an ABox change and works out what to publish.
    fn recompute(&mut self, now: u64) -> Result<(Vec<ContextNotice>, Vec<Cleared>), CoreError> {
        let next = Arc::new(self.reasoner.realize(&self.abox())?);
        let before = self.realization.pairs();
        let after = next.pairs();
        self.realization = next;

        let mut cleared = Vec::new();
        let gone: Vec<(String, String)> = self.derived.keys().filter(|p| !after.contains(*p)).cloned().collect();
        for pair in gone {
            self.derived.remove(&pair);
            cleared.push(Cleared {
                subject: pair.0,
                context: pair.1,
                ts: now,
            });
        }

        let fresh: Vec<(String, String)> = after
            .difference(&before)
            .filter(|p| !self.current.contains_key(*p))
            .cloned()
            .collect();
        let mut support = SupportSearch::new(self);
        let scored = fresh
            .into_iter()
            .map(|p| support.confidence(&p).map(|c| (p, c)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut derived = Vec::new();
        for (pair, confidence) in scored {
            self.derived.insert(pair.clone(), confidence);
            derived.push(ContextNotice {
                subject: pair.0,
                context: pair.1,
                confidence,
                ts: now,
                source: REASONER_SOURCE.to_string(),
            });
        }
        Ok((derived, cleared))
    }

    /// Retracts transient contexts older than the TTL.
    pub fn expire(&mut self, now: u64) -> Result<Expiry, CoreError> {
        let ttl = self.config.context_ttl_ms;
        let stale: Vec<(String, String)> = self
            .current
            .iter()
            .filter(|((_, c), a)| self.config.transient_classes.contains(c) && now.saturating_sub(a.ingested) > ttl)
            .map(|(k, _)| k.clone())
            .collect();
        if stale.is_empty() {
            return Ok(Expiry::default());
        }
        for k in &stale {
            self.current.remove(k);
            info!("context {} of {} expired", k.1, k.0);
        }
        let (derived, cleared) = self.recompute(now)?;
        debug_assert!(derived.is_empty());
        Ok(Expiry {
            retracted: stale,
            cleared,
        })
    }

    pub fn hello(&mut self, hello: &Hello, now: u64) -> Result<ServiceRecord, CoreError> {
        let (rec, created) = self.registry.register(hello, now)?;
        info!(
            "{} {} service {} as {}",
            if created { "registered" } else { "re-registered" },
            rec.kind.as_str(),
            rec.name,
            rec.id
        );
        Ok(rec)
    }

    pub fn touch(&mut self, id: &str, now: u64) -> Result<Option<Transition>, CoreError> {
        Ok(self.registry.touch(id, now)?)
    }

    pub fn disconnect(&mut self, id: &str, now: u64) -> Result<Option<Transition>, CoreError> {
        Ok(self.registry.set_offline(id, now)?)
    }

    pub fn subscribe(&mut self, id: &str, topics: &[String]) -> Result<bool, CoreError> {
        Ok(self.registry.subscribe(id, topics)?)
    }

    pub fn heartbeat_tick(&mut self, now: u64) -> Result<Vec<Transition>, CoreError> {
        Ok(self
            .registry
            .tick(now, self.config.heartbeat_interval_ms, self.config.heartbeat_misses)?)
    }

    /// When the next silent service is due to go offline.
    pub fn next_heartbeat_deadline(&self) -> Option<u64> {
        self.registry
            .next_deadline(self.config.heartbeat_interval_ms, self.config.heartbeat_misses)
    }

    /// Ids of the online services, other than the sender, subscribed to the
    /// topic. Counts the message as dropped when there are none.
    pub fn route_sensor(&mut self, sender: &str, sensor: &Sensor) -> Result<Vec<String>, CoreError> {
        self.counters.sensor_received += 1;
        if let Some(log) = &mut self.sensor_log {
            writeln!(log, "{}", serde_json::to_string(sensor).expect("sensor serializes"))?;
        }
        let targets: Vec<String> = self
            .registry
            .subscribers(&sensor.topic)
            .filter(|r| r.id != sender)
            .map(|r| r.id.clone())
            .collect();
        if targets.is_empty() {
            self.counters.sensor_dropped += 1;
        }
        Ok(targets)
    }

    pub fn record_delivery(&mut self, delivered: usize) {
        self.counters.sensor_delivered += delivered as u64;
    }

    /// Online services subscribed to `topic`.
    pub fn subscribers(&self, topic: &str) -> Vec<String> {
        self.registry.subscribers(topic).map(|r| r.id.clone()).collect()
    }

    pub fn query(&self, q: &Query) -> Result<Value, QueryError> {
        let unknown = |e: OntologyError| QueryError {
            code: ErrorCode::UnknownName,
            detail: e.to_string(),
        };
        match q {
            Query::Types { individual } => {
                let mut t: Vec<&str> = self.realization.types(individual).map_err(unknown)?;
                t.sort();
                Ok(json!(t))
            }
            Query::Instances { class } => Ok(json!(self.realization.instances_of(class).map_err(unknown)?)),
            Query::Current { subject } => {
                let mut types: Vec<&str> = self.realization.types(subject).map_err(unknown)?;
                types.sort();
                let items: Vec<Value> = types
                    .into_iter()
                    .map(|c| {
                        let key = (subject.clone(), c.to_string());
                        let (origin, confidence) = match self.current.get(&key) {
                            Some(a) => ("asserted", a.confidence),
                            None => ("derived", self.derived.get(&key).copied().unwrap_or(1.0)),
                        };
                        json!({"context": c, "confidence": confidence, "origin": origin})
                    })
                    .collect();
                Ok(Value::Array(items))
            }
            Query::History { t0, t1, subject, limit } => {
                let records = self
                    .history
                    .query(t0.unwrap_or(0), t1.unwrap_or(u64::MAX), subject.as_deref(), None)
                    .map_err(|e| QueryError {
                        code: ErrorCode::BadRange,
                        detail: e.to_string(),
                    })?;
                let items: Vec<Value> = records
                    .into_iter()
                    .rev()
                    .take(limit.unwrap_or(usize::MAX))
                    .map(|r| serde_json::to_value(r).expect("record serializes"))
                    .collect();
                Ok(Value::Array(items))
            }
            Query::Services {} => {
                let mut recs: Vec<&ServiceRecord> = self.registry.records().iter().collect();
                recs.sort_by(|a, b| (&a.name, a.kind, &a.id).cmp(&(&b.name, b.kind, &b.id)));
                Ok(serde_json::to_value(recs).expect("records serialize"))
            }
        }
    }

    /// Currently accepted contexts as `(subject, context, confidence)`.
    pub fn accepted(&self) -> Vec<(String, String, f64)> {
        self.current
            .iter()
            .map(|((s, c), a)| (s.clone(), c.clone(), a.confidence))
            .collect()
    }

    /// Published derived contexts still holding, with their confidence.
    pub fn derived(&self) -> &BTreeMap<(String, String), f64> {
        &self.derived
    }

    pub fn save_registry(&self) -> Result<(), CoreError> {
        Ok(self.registry.save()?)
    }
}

/// Finds, for a derived pair, the most confident set of accepted contexts
/// that still entails it: the largest `c` such that the contexts with
/// confidence at least `c` derive the pair. Realization is monotone in the
/// ABox, so a binary search over confidence-sorted prefixes finds it.
struct SupportSearch<'a> {
    core: &'a CoreState,
    sorted: Vec<((String, String), f64)>,
    cache: HashMap<usize, BTreeSet<(String, String)>>,
}

impl<'a> SupportSearch<'a> {
    fn new(core: &'a CoreState) -> Self {
        let mut sorted: Vec<((String, String), f64)> =
            core.current.iter().map(|(k, a)| (k.clone(), a.confidence)).collect();
        sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut cache = HashMap::new();
        cache.insert(sorted.len(), core.realization.pairs());
        Self { core, sorted, cache }
    }

    fn pairs(&mut self, len: usize) -> Result<&BTreeSet<(String, String)>, CoreError> {
        if !self.cache.contains_key(&len) {
            let o = self.core.ontology_with(self.sorted[..len].iter().map(|(k, _)| k));
            let pairs = self.core.reasoner.realize(&o)?.pairs();
            self.cache.insert(len, pairs);
        }
        Ok(&self.cache[&len])
    }

    fn confidence(&mut self, pair: &(String, String)) -> Result<f64, CoreError> {
        let (mut lo, mut hi) = (0, self.sorted.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.pairs(mid)?.contains(pair) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(if lo == 0 { 1.0 } else { self.sorted[lo - 1].1 })
    }
}
