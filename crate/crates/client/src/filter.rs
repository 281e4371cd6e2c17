//! The communication filter app: tracks derived contexts and decides on
//! incoming calls, messages and mails.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Duration;

use ctx_core::filter::{CommEvent, DecisionLogEntry, RuleSet, ScenarioEvent};
use ctx_core::protocol::{now_ms, Message, ServiceKind, TOPIC_DERIVED};
use log::info;
use tokio::time::Instant;

use crate::{log_unsolicited, ClientError, Connection, Incoming};

pub struct FilterApp {
    conn: Connection,
    rules: RuleSet,
    subject: Option<String>,
    contexts: BTreeSet<String>,
    log: Vec<DecisionLogEntry>,
    sink: Option<Box<dyn Write + Send>>,
    heartbeat: Duration,
    last_beat: Instant,
}

impl FilterApp {
    /// Registers as an app subscribed to derived contexts. With a subject,
    /// only that individual's contexts count.
    pub async fn start(
        mut conn: Connection,
        name: &str,
        rules: RuleSet,
        subject: Option<String>,
        heartbeat: Duration,
    ) -> Result<Self, ClientError> {
        conn.hello(ServiceKind::App, name, &[TOPIC_DERIVED]).await?;
        Ok(Self {
            conn,
            rules,
            subject,
            contexts: BTreeSet::new(),
            log: Vec::new(),
            sink: None,
            heartbeat,
            last_beat: Instant::now(),
        })
    }

    /// Also writes each decision as a JSON line to `sink`.
    pub fn with_sink(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn contexts(&self) -> &BTreeSet<String> {
        &self.contexts
    }

    pub fn decisions(&self) -> &[DecisionLogEntry] {
        &self.log
    }

    pub fn connection(&mut self) -> &mut Connection {
        &mut self.conn
    }

    fn applies(&self, subject: &str) -> bool {
        self.subject.as_deref().is_none_or(|s| s == subject)
    }

    fn apply(&mut self, m: Incoming) {
        match &m.message {
            Message::ContextDerived(d) if self.applies(&d.subject) => {
                info!("context {} is current", d.context);
                self.contexts.insert(d.context.clone());
            }
            Message::ContextCleared(c) if self.applies(&c.subject) => {
                info!("context {} cleared", c.context);
                self.contexts.remove(&c.context);
            }
            Message::ContextDerived(_) | Message::ContextCleared(_) => {}
            _ => log_unsolicited("filter", &m),
        }
    }

    async fn beat_if_due(&mut self) -> Result<(), ClientError> {
        if self.last_beat.elapsed() >= self.heartbeat {
            self.conn.heartbeat().await?;
            self.last_beat = Instant::now();
        }
        Ok(())
    }

    /// Processes incoming messages until `deadline`.
    pub async fn pump_until(&mut self, deadline: Instant) -> Result<(), ClientError> {
        loop {
            self.beat_if_due().await?;
            let wake = deadline.min(self.last_beat + self.heartbeat);
            if Instant::now() >= deadline {
                return Ok(());
            }
            match tokio::time::timeout_at(wake, self.conn.recv()).await {
                Ok(m) => self.apply(m?),
                Err(_) => continue,
            }
        }
    }

    /// Processes incoming messages until `context` is current.
    pub async fn wait_for_context(&mut self, context: &str, limit: Duration) -> Result<(), ClientError> {
        let deadline = Instant::now() + limit;
        while !self.contexts.contains(context) {
            if Instant::now() >= deadline {
                return Err(ClientError::Timeout);
            }
            let m = tokio::time::timeout_at(deadline, self.conn.recv())
                .await
                .map_err(|_| ClientError::Timeout)??;
            self.apply(m);
        }
        Ok(())
    }

    /// Decides on one event against the current contexts and logs it.
    pub fn inject(&mut self, event: CommEvent) -> std::io::Result<DecisionLogEntry> {
        let decision = self.rules.evaluate(&self.contexts, event.comm_type);
        let entry = DecisionLogEntry::new(&event, &self.contexts, &decision);
        info!("{}", decision.explanation);
        if let Some(sink) = &mut self.sink {
            let line = serde_json::to_string(&entry).expect("entry serializes");
            writeln!(sink, "{line}")?;
            sink.flush()?;
        }
        self.log.push(entry.clone());
        Ok(entry)
    }

    /// Injects each scripted event at its offset from now, tracking
    /// contexts in between.
    pub async fn run_scenario(&mut self, events: &[ScenarioEvent]) -> Result<Vec<DecisionLogEntry>, ClientError> {
        let start = Instant::now();
        let mut out = Vec::new();
        for e in events {
            self.pump_until(start + Duration::from_millis(e.t_offset_ms)).await?;
            let entry = self.inject(CommEvent {
                comm_type: e.comm_type,
                sender: e.sender.clone(),
                ts: now_ms(),
            })?;
            out.push(entry);
        }
        Ok(out)
    }
}
