//! The framework core as a loopback TCP service.
//!
//! One task per connection reads frames and forwards them to a single actor
//! that owns [`CoreState`]; each connection has a writer task that stamps
//! outgoing frames with its own msg_id sequence.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::time::Duration;

use ctx_core::config::CoreConfig;
use ctx_core::protocol::{
    decode, encode, now_ms, Ack, ContextPayload, ErrorCode, Frame, FrameDecoder, Message, Predict, Prediction,
    ServiceKind, TOPIC_ACCEPTED, TOPIC_DERIVED,
};
use ctx_core::registry::Status;
use ctx_core::runtime::{ContextEvent, CoreError, CoreState, Counters, IngestOutcome};
use log::{debug, error, info, warn};
use thiserror::Error;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("core task ended unexpectedly")]
    Gone,
}

type ConnId = u64;

enum Command {
    Connected {
        conn: ConnId,
        tx: mpsc::UnboundedSender<Message>,
        reader: JoinHandle<()>,
    },
    Frame {
        conn: ConnId,
        frame: Frame,
    },
    Disconnected {
        conn: ConnId,
    },
    Counters(oneshot::Sender<Counters>),
    Shutdown(oneshot::Sender<Result<(), CoreError>>),
}

/// A running core.
pub struct CoreHandle {
    addr: SocketAddr,
    tx: mpsc::UnboundedSender<Command>,
    accept: JoinHandle<()>,
    actor: JoinHandle<()>,
}

impl CoreHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub async fn counters(&self) -> Result<Counters, ServiceError> {
        let (tx, rx) = oneshot::channel();
        self.tx.send(Command::Counters(tx)).map_err(|_| ServiceError::Gone)?;
        rx.await.map_err(|_| ServiceError::Gone)
    }

    /// Stops accepting, closes every connection and saves the registry.
    pub async fn shutdown(self) -> Result<(), ServiceError> {
        self.accept.abort();
        let (tx, rx) = oneshot::channel();
        self.tx.send(Command::Shutdown(tx)).map_err(|_| ServiceError::Gone)?;
        let saved = rx.await.map_err(|_| ServiceError::Gone)?;
        let _ = self.actor.await;
        Ok(saved?)
    }
}

/// Loads state as configured, binds and starts serving. Must be called
/// inside a tokio runtime.
pub async fn run_core(config: CoreConfig) -> Result<CoreHandle, ServiceError> {
    let bind = config.bind;
    let state = CoreState::start(config)?;
    let listener = TcpListener::bind(bind)
        .await
        .map_err(|source| ServiceError::Bind { addr: bind, source })?;
    let addr = listener
        .local_addr()
        .map_err(|source| ServiceError::Bind { addr: bind, source })?;
    info!("core listening on {addr}");
    let (tx, rx) = mpsc::unbounded_channel();
    let accept = tokio::spawn(accept_loop(listener, tx.clone()));
    let actor = tokio::spawn(Actor::new(state).run(rx));
    Ok(CoreHandle {
        addr,
        tx,
        accept,
        actor,
    })
}

async fn accept_loop(listener: TcpListener, cmds: mpsc::UnboundedSender<Command>) {
    let mut next: ConnId = 1;
    loop {
        let (stream, peer) = match listener.accept().await {
            Ok(s) => s,
            Err(e) => {
                warn!("accept failed: {e}");
                tokio::time::sleep(Duration::from_millis(50)).await;
                continue;
            }
        };
        let conn = next;
        next += 1;
        debug!("connection {conn} from {peer}");
        let _ = stream.set_nodelay(true);
        let (read, write) = stream.into_split();
        let (out_tx, out_rx) = mpsc::unbounded_channel();
        tokio::spawn(write_loop(conn, write, out_rx));
        let reader = tokio::spawn(read_loop(conn, read, cmds.clone()));
        if cmds
            .send(Command::Connected {
                conn,
                tx: out_tx,
                reader,
            })
            .is_err()
        {
            return;
        }
    }
}

async fn read_loop(conn: ConnId, mut read: tokio::net::tcp::OwnedReadHalf, cmds: mpsc::UnboundedSender<Command>) {
    let mut decoder = FrameDecoder::new();
    let mut buf = vec![0u8; 16 * 1024];
    loop {
        let n = match read.read(&mut buf).await {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) => {
                debug!("connection {conn} read error: {e}");
                break;
            }
        };
        decoder.feed(&buf[..n]);
        while let Some(frame) = decoder.next_frame() {
            if cmds.send(Command::Frame { conn, frame }).is_err() {
                return;
            }
        }
    }
    if decoder.pending() > 0 {
        debug!("connection {conn} closed with {} unterminated bytes", decoder.pending());
    }
    let _ = cmds.send(Command::Disconnected { conn });
}

async fn write_loop(
    conn: ConnId,
    mut write: tokio::net::tcp::OwnedWriteHalf,
    mut rx: mpsc::UnboundedReceiver<Message>,
) {
    let mut msg_id = 0u64;
    while let Some(msg) = rx.recv().await {
        msg_id += 1;
        let line = match encode(msg_id, now_ms(), &msg) {
            Ok(l) => l,
            Err(e) => {
                error!("dropping outgoing {} to connection {conn}: {e}", msg.type_name());
                continue;
            }
        };
        let mut bytes = line.into_bytes();
        bytes.push(b'\n');
        if let Err(e) = write.write_all(&bytes).await {
            debug!("connection {conn} write error: {e}");
            break;
        }
    }
    let _ = write.shutdown().await;
}

struct Conn {
    tx: mpsc::UnboundedSender<Message>,
    reader: JoinHandle<()>,
    service: Option<String>,
    last_msg_id: Option<u64>,
}

struct PendingPrediction {
    requester: ConnId,
    re: u64,
    deadline: u64,
}

struct Actor {
    state: CoreState,
    conns: HashMap<ConnId, Conn>,
    by_service: HashMap<String, ConnId>,
    pending: BTreeMap<u64, PendingPrediction>,
    next_corr: u64,
}

impl Actor {
    fn new(state: CoreState) -> Self {
        Self {
            state,
            conns: HashMap::new(),
            by_service: HashMap::new(),
            pending: BTreeMap::new(),
            next_corr: 1,
        }
    }

    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<Command>) {
        let mut tick = tokio::time::interval(Duration::from_millis(self.state.config().tick_ms));
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            let now = now_ms();
            let due = self.state.next_heartbeat_deadline();
            if due.is_some_and(|d| d <= now) {
                self.tick(now);
                continue;
            }
            let wait = due.map(|d| Duration::from_millis(d - now));
            tokio::select! {
                cmd = rx.recv() => match cmd {
                    Some(Command::Shutdown(done)) => {
                        let _ = done.send(self.shutdown());
                        return;
                    }
                    Some(cmd) => self.handle(cmd),
                    None => return,
                },
                _ = tick.tick() => self.tick(now_ms()),
                _ = tokio::time::sleep(wait.unwrap_or_default()), if wait.is_some() => self.tick(now_ms()),
            }
        }
    }

    fn shutdown(&mut self) -> Result<(), CoreError> {
        for (_, c) in self.conns.drain() {
            c.reader.abort();
        }
        info!("core shutting down");
        self.state.save_registry()
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Connected { conn, tx, reader } => {
                self.conns.insert(
                    conn,
                    Conn {
                        tx,
                        reader,
                        service: None,
                        last_msg_id: None,
                    },
                );
            }
            Command::Frame { conn, frame } => self.frame(conn, frame, now_ms()),
            Command::Disconnected { conn } => self.disconnected(conn, now_ms()),
            Command::Counters(reply) => {
                let _ = reply.send(self.state.counters());
            }
            Command::Shutdown(_) => unreachable!("handled in run"),
        }
    }

    fn send(&self, conn: ConnId, msg: Message) {
        if let Some(c) = self.conns.get(&conn) {
            let _ = c.tx.send(msg);
        }
    }

    fn send_to_service(&self, id: &str, msg: Message) -> bool {
        match self.by_service.get(id).and_then(|c| self.conns.get(c)) {
            Some(c) => c.tx.send(msg).is_ok(),
            None => false,
        }
    }

    fn publish(&self, topic: &str, except: Option<&str>, msg: &Message) {
        for id in self.state.subscribers(topic) {
            if Some(id.as_str()) != except {
                self.send_to_service(&id, msg.clone());
            }
        }
    }

    fn disconnected(&mut self, conn: ConnId, now: u64) {
        let Some(c) = self.conns.remove(&conn) else {
            return;
        };
        if let Some(id) = c.service {
            if self.by_service.get(&id) == Some(&conn) {
                self.by_service.remove(&id);
                if let Err(e) = self.state.disconnect(&id, now) {
                    warn!("cannot record disconnect of {id}: {e}");
                }
            }
        }
    }

    fn frame(&mut self, conn: ConnId, frame: Frame, now: u64) {
        let bytes = match frame {
            Frame::Line(b) => b,
            Frame::TooLarge => {
                self.send(
                    conn,
                    Message::error(ErrorCode::FrameTooLarge, "frame exceeds 65536 bytes", None),
                );
                return;
            }
        };
        let (env, msg) = match decode(&bytes) {
            Ok(d) => d,
            Err(e) => {
                debug!("connection {conn}: {e}");
                self.send(conn, e.to_message());
                return;
            }
        };
        let re = env.msg_id;
        let Some(c) = self.conns.get_mut(&conn) else {
            return;
        };
        if c.last_msg_id.is_some_and(|prev| re <= prev) {
            let detail = format!("msg_id {re} does not increase");
            self.send(conn, Message::error(ErrorCode::Malformed, detail, Some(re)));
            return;
        }
        c.last_msg_id = Some(re);

        if let Message::Hello(h) = &msg {
            match self.state.hello(h, now) {
                Ok(rec) => {
                    if let Some(old) = c.service.replace(rec.id.clone()) {
                        if old != rec.id && self.by_service.get(&old) == Some(&conn) {
                            self.by_service.remove(&old);
                        }
                    }
                    self.by_service.insert(rec.id.clone(), conn);
                    let ack = Ack {
                        re,
                        id: Some(rec.id),
                        ..Ack::default()
                    };
                    self.send(conn, Message::Ack(ack));
                }
                Err(e) => self.send(conn, Message::error(ErrorCode::Internal, e.to_string(), Some(re))),
            }
            return;
        }

        let Some(sender) = c.service.clone() else {
            let detail = format!("{} before hello", msg.type_name());
            self.send(conn, Message::error(ErrorCode::UnknownSender, detail, Some(re)));
            return;
        };
        if let Err(e) = self.state.touch(&sender, now) {
            warn!("cannot record heartbeat of {sender}: {e}");
        }

        match msg {
            Message::Hello(_) => unreachable!("handled above"),
            Message::Heartbeat(_) => {}
            Message::Sensor(s) => match self.state.route_sensor(&sender, &s) {
                Ok(targets) => {
                    let delivered = targets
                        .iter()
                        .filter(|id| self.send_to_service(id, Message::Sensor(s.clone())))
                        .count();
                    self.state.record_delivery(delivered);
                }
                Err(e) => warn!("sensor routing failed: {e}"),
            },
            Message::Context(p) => self.context(conn, re, &sender, p, now),
            Message::Subscribe(s) => match self.state.subscribe(&sender, &s.topics) {
                Ok(_) => self.send(conn, Message::ack(re)),
                Err(e) => self.send(conn, Message::error(ErrorCode::Internal, e.to_string(), Some(re))),
            },
            Message::Query(q) => {
                let reply = match self.state.query(&q) {
                    Ok(result) => Message::Result(ctx_core::protocol::QueryResult { re, result }),
                    Err(e) => Message::error(e.code, e.detail, Some(re)),
                };
                self.send(conn, reply);
            }
            Message::Predict(p) => self.predict(conn, re, p, now),
            Message::Prediction(p) => self.prediction(conn, re, p),
            other @ (Message::Ack(_)
            | Message::Error(_)
            | Message::Result(_)
            | Message::ContextDerived(_)
            | Message::ContextCleared(_)) => {
                let detail = format!("unexpected message type {} from a service", other.type_name());
                self.send(conn, Message::error(ErrorCode::Malformed, detail, Some(re)));
            }
        }
    }

    fn context(&mut self, conn: ConnId, re: u64, sender: &str, p: ContextPayload, now: u64) {
        let ev = ContextEvent {
            subject: p.subject.clone(),
            context: p.context.clone(),
            confidence: p.confidence,
            ts: p.ts,
            source: sender.to_string(),
        };
        match self.state.ingest(ev, now) {
            Ok(IngestOutcome::Accepted { derived, cleared, .. }) => {
                self.send(
                    conn,
                    Message::Ack(Ack {
                        re,
                        status: Some("accepted".into()),
                        ..Ack::default()
                    }),
                );
                self.publish(TOPIC_ACCEPTED, Some(sender), &Message::Context(p));
                for c in cleared {
                    self.publish(TOPIC_DERIVED, None, &Message::ContextCleared(c));
                }
                for d in derived {
                    info!("derived {} for {} ({})", d.context, d.subject, d.confidence);
                    self.publish(TOPIC_DERIVED, None, &Message::ContextDerived(d));
                }
            }
            Ok(IngestOutcome::Rejected(reason)) => self.send(
                conn,
                Message::Ack(Ack {
                    re,
                    status: Some("rejected".into()),
                    detail: Some(reason.describe()),
                    ..Ack::default()
                }),
            ),
            Err(e @ CoreError::History(_)) => self.send(
                conn,
                Message::error(ErrorCode::HistoryUnavailable, e.to_string(), Some(re)),
            ),
            Err(e) => self.send(conn, Message::error(ErrorCode::Internal, e.to_string(), Some(re))),
        }
    }

    fn predictor(&self) -> Option<String> {
        self.state
            .registry()
            .records()
            .iter()
            .filter(|r| r.kind == ServiceKind::Prediction && r.status == Status::Online)
            .map(|r| r.id.clone())
            .find(|id| self.by_service.contains_key(id))
    }

    fn predict(&mut self, conn: ConnId, re: u64, p: Predict, now: u64) {
        let Some(predictor) = self.predictor() else {
            self.send(
                conn,
                Message::error(ErrorCode::NoPredictor, "no prediction service is online", Some(re)),
            );
            return;
        };
        let corr = self.next_corr;
        self.next_corr += 1;
        self.pending.insert(
            corr,
            PendingPrediction {
                requester: conn,
                re,
                deadline: now + self.state.config().prediction_timeout_ms,
            },
        );
        self.send_to_service(
            &predictor,
            Message::Predict(Predict {
                subject: p.subject,
                corr: Some(corr),
            }),
        );
    }

    fn prediction(&mut self, conn: ConnId, re: u64, p: Prediction) {
        let Some(corr) = p.corr else {
            self.send(
                conn,
                Message::error(ErrorCode::Malformed, "prediction without corr", Some(re)),
            );
            return;
        };
        let status = match self.pending.remove(&corr) {
            Some(pending) => {
                let reply = match (&p.detail, p.ranked.is_empty()) {
                    (Some(detail), true) => Message::error(ErrorCode::NoModel, detail.clone(), Some(pending.re)),
                    _ => Message::Prediction(Prediction {
                        corr: None,
                        re: Some(pending.re),
                        ..p
                    }),
                };
                self.send(pending.requester, reply);
                "delivered"
            }
            None => "late",
        };
        self.send(
            conn,
            Message::Ack(Ack {
                re,
                status: Some(status.into()),
                ..Ack::default()
            }),
        );
    }

    fn tick(&mut self, now: u64) {
        if let Err(e) = self.state.heartbeat_tick(now) {
            warn!("heartbeat tick: {e}");
        }
        match self.state.expire(now) {
            Ok(expiry) => {
                for c in expiry.cleared {
                    self.publish(TOPIC_DERIVED, None, &Message::ContextCleared(c));
                }
            }
            Err(e) => warn!("expiry failed: {e}"),
        }
        let overdue: Vec<u64> = self
            .pending
            .iter()
            .filter(|(_, p)| p.deadline <= now)
            .map(|(k, _)| *k)
            .collect();
        for corr in overdue {
            let p = self.pending.remove(&corr).expect("listed");
            self.send(
                p.requester,
                Message::error(ErrorCode::Timeout, "prediction service did not answer", Some(p.re)),
            );
        }
        self.state.retry_history();
    }
}
