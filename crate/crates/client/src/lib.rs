//! Client side of the wire protocol, plus the micro-services that run on it:
//! trace replay, activity classification, prediction and the communication
//! filter app.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ctx_core::protocol::{
    decode, encode, now_ms, Envelope, ErrorCode, Frame, FrameDecoder, FrameError, Heartbeat, Hello, Message, Predict,
    Query, Ranked, ServiceKind,
};
use log::debug;
use serde_json::Value;
use thiserror::Error;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

pub mod classifier;
pub mod filter;
pub mod predictor;
pub mod replay;

pub use classifier::ClassifierService;
pub use filter::FilterApp;
pub use predictor::PredictorService;
pub use replay::{replay, ReplayError};

/// Default interval at which services send heartbeats.
pub const DEFAULT_HEARTBEAT: Duration = Duration::from_millis(2000);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("connection closed by the core")]
    Closed,
    #[error("invalid frame from the core: {0}")]
    Invalid(FrameError),
    #[error("core answered {}: {detail}", code.as_str())]
    Refused { code: ErrorCode, detail: String },
    #[error("unexpected reply: {0}")]
    Unexpected(String),
    #[error("timed out waiting for the core")]
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    In,
    Out,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Traffic {
    pub dir: Direction,
    pub line: String,
}

/// Shared log of every line a set of connections sent or received.
#[derive(Clone, Debug, Default)]
pub struct Recorder(Arc<Mutex<Vec<Traffic>>>);

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, dir: Direction, line: &[u8]) {
        let line = String::from_utf8_lossy(line).into_owned();
        self.0.lock().expect("recorder lock").push(Traffic { dir, line });
    }

    pub fn traffic(&self) -> Vec<Traffic> {
        self.0.lock().expect("recorder lock").clone()
    }
}

/// A decoded frame from the core.
#[derive(Clone, Debug, PartialEq)]
pub struct Incoming {
    pub envelope: Envelope,
    pub message: Message,
}

pub struct Connection {
    write: OwnedWriteHalf,
    inbox: mpsc::UnboundedReceiver<Result<Incoming, FrameError>>,
    backlog: VecDeque<Incoming>,
    next_id: u64,
    recorder: Option<Recorder>,
    service_id: Option<String>,
    reader: JoinHandle<()>,
}

impl Drop for Connection {
    fn drop(&mut self) {
        self.reader.abort();
    }
}

async fn read_loop(
    mut read: OwnedReadHalf,
    tx: mpsc::UnboundedSender<Result<Incoming, FrameError>>,
    recorder: Option<Recorder>,
) {
    let mut decoder = FrameDecoder::new();
    let mut buf = vec![0u8; 16 * 1024];
    loop {
        let n = match read.read(&mut buf).await {
            Ok(0) | Err(_) => return,
            Ok(n) => n,
        };
        decoder.feed(&buf[..n]);
        while let Some(frame) = decoder.next_frame() {
            let item = match frame {
                Frame::Line(line) => {
                    if let Some(r) = &recorder {
                        r.push(Direction::In, &line);
                    }
                    decode(&line).map(|(envelope, message)| Incoming { envelope, message })
                }
                Frame::TooLarge => Err(FrameError {
                    code: ErrorCode::FrameTooLarge,
                    detail: "oversized frame from the core".into(),
                    msg_id: None,
                }),
            };
            if tx.send(item).is_err() {
                return;
            }
        }
    }
}

impl Connection {
    pub async fn connect(addr: SocketAddr) -> Result<Self, ClientError> {
        Self::connect_with(addr, None).await
    }

    /// Connects, copying every line in either direction into `recorder`.
    pub async fn connect_with(addr: SocketAddr, recorder: Option<Recorder>) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr).await?;
        stream.set_nodelay(true)?;
        let (read, write) = stream.into_split();
        let (tx, inbox) = mpsc::unbounded_channel();
        let reader = tokio::spawn(read_loop(read, tx, recorder.clone()));
        Ok(Self {
            write,
            inbox,
            backlog: VecDeque::new(),
            next_id: 1,
            recorder,
            service_id: None,
            reader,
        })
    }

    /// The id the core assigned at `hello`.
    pub fn service_id(&self) -> Option<&str> {
        self.service_id.as_deref()
    }

    /// Sends one message and returns its msg_id.
    pub async fn send(&mut self, msg: &Message) -> Result<u64, ClientError> {
        let id = self.next_id;
        let line = encode(id, now_ms(), msg).map_err(ClientError::Invalid)?;
        self.next_id += 1;
        self.send_raw(line.as_bytes()).await?;
        Ok(id)
    }

    /// Writes bytes as one line, unchecked. A missing LF is added.
    pub async fn send_raw(&mut self, line: &[u8]) -> Result<(), ClientError> {
        if let Some(r) = &self.recorder {
            r.push(Direction::Out, line.strip_suffix(b"\n").unwrap_or(line));
        }
        let mut bytes = line.to_vec();
        if bytes.last() != Some(&b'\n') {
            bytes.push(b'\n');
        }
        self.write.write_all(&bytes).await?;
        Ok(())
    }

    /// Next msg_id [`Self::send`] will use.
    pub fn next_msg_id(&self) -> u64 {
        self.next_id
    }

    /// Skips msg_ids, for callers that wrote raw frames themselves.
    pub fn set_next_msg_id(&mut self, id: u64) {
        self.next_id = id;
    }

    async fn recv_inbox(&mut self) -> Result<Incoming, ClientError> {
        match self.inbox.recv().await {
            Some(Ok(m)) => Ok(m),
            Some(Err(e)) => Err(ClientError::Invalid(e)),
            None => Err(ClientError::Closed),
        }
    }

    /// Next message from the core. Cancel-safe.
    pub async fn recv(&mut self) -> Result<Incoming, ClientError> {
        if let Some(m) = self.backlog.pop_front() {
            return Ok(m);
        }
        self.recv_inbox().await
    }

    pub async fn recv_timeout(&mut self, limit: Duration) -> Result<Incoming, ClientError> {
        tokio::time::timeout(limit, self.recv())
            .await
            .map_err(|_| ClientError::Timeout)?
    }

    /// Sends `msg` and waits for the frame whose `re` names it; anything
    /// else arriving meanwhile is kept for [`Self::recv`].
    pub async fn request(&mut self, msg: &Message) -> Result<Message, ClientError> {
        let id = self.send(msg).await?;
        loop {
            let m = self.recv_inbox().await?;
            if m.message.reply_to() == Some(id) {
                return Ok(m.message);
            }
            self.backlog.push_back(m);
        }
    }

    pub async fn request_timeout(&mut self, msg: &Message, limit: Duration) -> Result<Message, ClientError> {
        tokio::time::timeout(limit, self.request(msg))
            .await
            .map_err(|_| ClientError::Timeout)?
    }

    /// Registers with the core and returns the assigned id.
    pub async fn hello(
        &mut self,
        kind: ServiceKind,
        name: &str,
        subscriptions: &[&str],
    ) -> Result<String, ClientError> {
        let hello = Message::Hello(Hello {
            kind,
            name: name.to_string(),
            subscriptions: subscriptions.iter().map(|s| s.to_string()).collect(),
        });
        match refused(self.request(&hello).await?)? {
            Message::Ack(a) => {
                let id =
                    a.id.ok_or_else(|| ClientError::Unexpected("hello ack without id".into()))?;
                debug!("registered {name} as {id}");
                self.service_id = Some(id.clone());
                Ok(id)
            }
            other => Err(ClientError::Unexpected(other.type_name().into())),
        }
    }

    pub async fn heartbeat(&mut self) -> Result<(), ClientError> {
        self.send(&Message::Heartbeat(Heartbeat {})).await.map(|_| ())
    }

    pub async fn query(&mut self, q: Query) -> Result<Value, ClientError> {
        match refused(self.request(&Message::Query(q)).await?)? {
            Message::Result(r) => Ok(r.result),
            other => Err(ClientError::Unexpected(other.type_name().into())),
        }
    }

    /// Asks the core for a next-context prediction.
    pub async fn predict(&mut self, subject: &str) -> Result<Vec<Ranked>, ClientError> {
        let msg = Message::Predict(Predict {
            subject: subject.to_string(),
            corr: None,
        });
        match refused(self.request(&msg).await?)? {
            Message::Prediction(p) => Ok(p.ranked),
            other => Err(ClientError::Unexpected(other.type_name().into())),
        }
    }
}

/// Turns an `error` reply into [`ClientError::Refused`].
pub fn refused(msg: Message) -> Result<Message, ClientError> {
    match msg {
        Message::Error(e) => Err(ClientError::Refused {
            code: e.code,
            detail: e.detail,
        }),
        other => Ok(other),
    }
}

/// Runs a service loop: every incoming message goes to `handler`, whose
/// replies are sent back; heartbeats go out every `heartbeat`. Returns when
/// the connection ends.
pub async fn serve<F>(conn: &mut Connection, heartbeat: Duration, mut handler: F) -> Result<(), ClientError>
where
    F: FnMut(Incoming) -> Vec<Message>,
{
    let mut hb = tokio::time::interval(heartbeat);
    hb.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    hb.tick().await;
    loop {
        tokio::select! {
            m = conn.recv() => {
                for out in handler(m?) {
                    conn.send(&out).await?;
                }
            }
            _ = hb.tick() => conn.heartbeat().await?,
        }
    }
}

/// Logs replies a service does not act on.
pub(crate) fn log_unsolicited(service: &str, m: &Incoming) {
    match &m.message {
        Message::Error(e) => log::warn!("{service}: core reported {}: {}", e.code.as_str(), e.detail),
        Message::Ack(a) if a.status.as_deref() == Some("rejected") => {
            log::info!("{service}: context rejected: {}", a.detail.as_deref().unwrap_or(""))
        }
        other => debug!("{service}: ignoring {}", other.type_name()),
    }
}
