//! Wire protocol: one JSON envelope per LF-terminated line.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub const PROTOCOL_VERSION: u64 = 1;
/// Largest frame accepted or emitted, excluding the terminating LF.
pub const MAX_FRAME_BYTES: usize = 65_536;

pub const TOPIC_DERIVED: &str = "context/derived";
pub const TOPIC_ACCEPTED: &str = "context/accepted";

/// Wall-clock epoch milliseconds, as used in envelope `ts` fields.
pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCode {
    #[serde(rename = "MALFORMED")]
    Malformed,
    #[serde(rename = "UNKNOWN_TYPE")]
    UnknownType,
    #[serde(rename = "BAD_VERSION")]
    BadVersion,
    #[serde(rename = "FRAME_TOO_LARGE")]
    FrameTooLarge,
    #[serde(rename = "UNKNOWN_SENDER")]
    UnknownSender,
    #[serde(rename = "UNKNOWN_NAME")]
    UnknownName,
    #[serde(rename = "MALFORMED_QUERY")]
    MalformedQuery,
    #[serde(rename = "BAD_RANGE")]
    BadRange,
    #[serde(rename = "NO_PREDICTOR")]
    NoPredictor,
    #[serde(rename = "NO_MODEL")]
    NoModel,
    #[serde(rename = "TIMEOUT")]
    Timeout,
    #[serde(rename = "HISTORY_UNAVAILABLE")]
    HistoryUnavailable,
    /// The core could not persist or compute a reply.
    #[serde(rename = "INTERNAL")]
    Internal,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Malformed => "MALFORMED",
            ErrorCode::UnknownType => "UNKNOWN_TYPE",
            ErrorCode::BadVersion => "BAD_VERSION",
            ErrorCode::FrameTooLarge => "FRAME_TOO_LARGE",
            ErrorCode::UnknownSender => "UNKNOWN_SENDER",
            ErrorCode::UnknownName => "UNKNOWN_NAME",
            ErrorCode::MalformedQuery => "MALFORMED_QUERY",
            ErrorCode::BadRange => "BAD_RANGE",
            ErrorCode::NoPredictor => "NO_PREDICTOR",
            ErrorCode::NoModel => "NO_MODEL",
            ErrorCode::Timeout => "TIMEOUT",
            ErrorCode::HistoryUnavailable => "HISTORY_UNAVAILABLE",
            ErrorCode::Internal => "INTERNAL",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceKind {
    Sensing,
    Classification,
    Prediction,
    App,
}

impl ServiceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ServiceKind::Sensing => "sensing",
            ServiceKind::Classification => "classification",
            ServiceKind::Prediction => "prediction",
            ServiceKind::App => "app",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub kind: ServiceKind,
    pub name: String,
    #[serde(default)]
    pub subscriptions: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ack {
    /// msg_id of the frame being answered.
    pub re: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Heartbeat {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sensor {
    pub topic: String,
    pub source: String,
    pub ts: u64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextPayload {
    pub subject: String,
    pub context: String,
    pub confidence: f64,
    pub ts: u64,
}

/// A context published by the core: derived by the reasoner, or an accepted
/// event forwarded to subscribers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextNotice {
    pub subject: String,
    pub context: String,
    pub confidence: f64,
    pub ts: u64,
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cleared {
    pub subject: String,
    pub context: String,
    pub ts: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subscribe {
    pub topics: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "query", rename_all = "lowercase", deny_unknown_fields)]
pub enum Query {
    Types {
        individual: String,
    },
    Instances {
        class: String,
    },
    Current {
        subject: String,
    },
    History {
        #[serde(default)]
        t0: Option<u64>,
        #[serde(default)]
        t1: Option<u64>,
        #[serde(default)]
        subject: Option<String>,
        #[serde(default)]
        limit: Option<usize>,
    },
    Services {},
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryResult {
    pub re: u64,
    pub result: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predict {
    pub subject: String,
    /// Set when the core relays the request to a prediction service.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corr: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ranked {
    pub context: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub subject: String,
    pub ranked: Vec<Ranked>,
    /// Correlation id from a relayed `predict`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corr: Option<u64>,
    /// msg_id of the requester's `predict`, set on the copy the core returns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re: Option<u64>,
    /// Why `ranked` is empty, if it is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Hello(Hello),
    Ack(Ack),
    Error(ErrorPayload),
    Heartbeat(Heartbeat),
    Sensor(Sensor),
    Context(ContextPayload),
    ContextDerived(ContextNotice),
    ContextCleared(Cleared),
    Subscribe(Subscribe),
    Query(Query),
    Result(QueryResult),
    Predict(Predict),
    Prediction(Prediction),
}

pub const MESSAGE_TYPES: [&str; 13] = [
    "hello",
    "ack",
    "error",
    "heartbeat",
    "sensor",
    "context",
    "context-derived",
    "context-cleared",
    "subscribe",
    "query",
    "result",
    "predict",
    "prediction",
];

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Message::Hello(_) => "hello",
            Message::Ack(_) => "ack",
            Message::Error(_) => "error",
            Message::Heartbeat(_) => "heartbeat",
            Message::Sensor(_) => "sensor",
            Message::Context(_) => "context",
            Message::ContextDerived(_) => "context-derived",
            Message::ContextCleared(_) => "context-cleared",
            Message::Subscribe(_) => "subscribe",
            Message::Query(_) => "query",
            Message::Result(_) => "result",
            Message::Predict(_) => "predict",
            Message::Prediction(_) => "prediction",
        }
    }

    pub fn payload(&self) -> Value {
        let v = match self {
            Message::Hello(p) => serde_json::to_value(p),
            Message::Ack(p) => serde_json::to_value(p),
            Message::Error(p) => serde_json::to_value(p),
            Message::Heartbeat(p) => serde_json::to_value(p),
            Message::Sensor(p) => serde_json::to_value(p),
            Message::Context(p) => serde_json::to_value(p),
            Message::ContextDerived(p) => serde_json::to_value(p),
            Message::ContextCleared(p) => serde_json::to_value(p),
            Message::Subscribe(p) => serde_json::to_value(p),
            Message::Query(p) => serde_json::to_value(p),
            Message::Result(p) => serde_json::to_value(p),
            Message::Predict(p) => serde_json::to_value(p),
            Message::Prediction(p) => serde_json::to_value(p),
        };
        v.expect("payloads serialize")
    }

    /// The `re` field of a reply, if this message answers another one.
    pub fn reply_to(&self) -> Option<u64> {
        match self {
            Message::Ack(a) => Some(a.re),
            Message::Error(e) => e.re,
            Message::Result(r) => Some(r.re),
            Message::Prediction(p) => p.re,
            _ => None,
        }
    }

    pub fn error(code: ErrorCode, detail: impl Into<String>, re: Option<u64>) -> Self {
        Message::Error(ErrorPayload {
            code,
            detail: detail.into(),
            re,
        })
    }

    pub fn ack(re: u64) -> Self {
        Message::Ack(Ack { re, ..Ack::default() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub v: u64,
    #[serde(rename = "type")]
    pub kind: String,
    pub msg_id: u64,
    pub ts: u64,
    pub payload: Value,
}

/// Why a frame was refused, with the msg_id if it could be read.
#[derive(Clone, Debug, PartialEq, Error)]
#[error("{code:?}: {detail}")]
pub struct FrameError {
    pub code: ErrorCode,
    pub detail: String,
    pub msg_id: Option<u64>,
}

impl FrameError {
    fn new(code: ErrorCode, detail: impl Into<String>, msg_id: Option<u64>) -> Self {
        Self {
            code,
            detail: detail.into(),
            msg_id,
        }
    }

    pub fn to_message(&self) -> Message {
        Message::error(self.code, self.detail.clone(), self.msg_id)
    }
}

/// Serializes one frame, without the trailing LF.
pub fn encode(msg_id: u64, ts: u64, msg: &Message) -> Result<String, FrameError> {
    let env = Envelope {
        v: PROTOCOL_VERSION,
        kind: msg.type_name().to_string(),
        msg_id,
        ts,
        payload: msg.payload(),
    };
    let line = serde_json::to_string(&env).expect("envelope serializes");
    if line.len() > MAX_FRAME_BYTES {
        return Err(FrameError::new(
            ErrorCode::FrameTooLarge,
            format!("frame of {} bytes exceeds {MAX_FRAME_BYTES}", line.len()),
            Some(msg_id),
        ));
    }
    Ok(line)
}

fn typed<T: DeserializeOwned>(payload: Value, msg_id: u64, code: ErrorCode) -> Result<T, FrameError> {
    serde_json::from_value(payload).map_err(|e| FrameError::new(code, format!("invalid payload: {e}"), Some(msg_id)))
}

fn check(ok: bool, detail: &str, msg_id: u64) -> Result<(), FrameError> {
    if ok {
        Ok(())
    } else {
        Err(FrameError::new(ErrorCode::Malformed, detail, Some(msg_id)))
    }
}

fn unit_interval(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Parses and validates one frame against the envelope and payload schemas.
pub fn decode(frame: &[u8]) -> Result<(Envelope, Message), FrameError> {
    if frame.len() > MAX_FRAME_BYTES {
        return Err(FrameError::new(
            ErrorCode::FrameTooLarge,
            format!("frame of {} bytes exceeds {MAX_FRAME_BYTES}", frame.len()),
            None,
        ));
    }
    let text =
        std::str::from_utf8(frame).map_err(|_| FrameError::new(ErrorCode::Malformed, "frame is not UTF-8", None))?;
    let value: Value = serde_json::from_str(text)
        .map_err(|e| FrameError::new(ErrorCode::Malformed, format!("not JSON: {e}"), None))?;
    let Value::Object(obj) = value else {
        return Err(FrameError::new(
            ErrorCode::Malformed,
            "frame is not a JSON object",
            None,
        ));
    };
    let msg_id = obj.get("msg_id").and_then(Value::as_u64);
    let env: Envelope = serde_json::from_value(Value::Object(obj.clone()))
        .map_err(|e| FrameError::new(ErrorCode::Malformed, format!("bad envelope: {e}"), msg_id))?;
    let id = env.msg_id;
    if env.v != PROTOCOL_VERSION {
        return Err(FrameError::new(
            ErrorCode::BadVersion,
            format!("unsupported protocol version {}", env.v),
            Some(id),
        ));
    }
    if !env.payload.is_object() {
        return Err(FrameError::new(
            ErrorCode::Malformed,
            "payload is not an object",
            Some(id),
        ));
    }
    let p = env.payload.clone();
    let m = ErrorCode::Malformed;
    let msg = match env.kind.as_str() {
        "hello" => {
            let h: Hello = typed(p, id, m)?;
            check(!h.name.is_empty(), "empty service name", id)?;
            check(h.subscriptions.iter().all(|t| !t.is_empty()), "empty topic", id)?;
            Message::Hello(h)
        }
        "ack" => Message::Ack(typed(p, id, m)?),
        "error" => Message::Error(typed(p, id, m)?),
        "heartbeat" => Message::Heartbeat(typed(p, id, m)?),
        "sensor" => {
            let s: Sensor = typed(p, id, m)?;
            check(!s.topic.is_empty(), "empty topic", id)?;
            Message::Sensor(s)
        }
        "context" => {
            let c: ContextPayload = typed(p, id, m)?;
            check(!c.subject.is_empty() && !c.context.is_empty(), "empty name", id)?;
            check(unit_interval(c.confidence), "confidence outside [0, 1]", id)?;
            Message::Context(c)
        }
        "context-derived" => {
            let c: ContextNotice = typed(p, id, m)?;
            check(unit_interval(c.confidence), "confidence outside [0, 1]", id)?;
            Message::ContextDerived(c)
        }
        "context-cleared" => Message::ContextCleared(typed(p, id, m)?),
        "subscribe" => {
            let s: Subscribe = typed(p, id, m)?;
            check(s.topics.iter().all(|t| !t.is_empty()), "empty topic", id)?;
            Message::Subscribe(s)
        }
        "query" => Message::Query(typed(p, id, ErrorCode::MalformedQuery)?),
        "result" => Message::Result(typed(p, id, m)?),
        "predict" => {
            let q: Predict = typed(p, id, m)?;
            check(!q.subject.is_empty(), "empty subject", id)?;
            Message::Predict(q)
        }
        "prediction" => {
            let q: Prediction = typed(p, id, m)?;
            check(
                q.ranked.iter().all(|r| unit_interval(r.probability)),
                "probability outside [0, 1]",
                id,
            )?;
            Message::Prediction(q)
        }
        other => {
            return Err(FrameError::new(
                ErrorCode::UnknownType,
                format!("unknown message type `{other}`"),
                Some(id),
            ))
        }
    };
    Ok((env, msg))
}

/// A frame cut from a byte stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Frame {
    Line(Vec<u8>),
    /// A line longer than [`MAX_FRAME_BYTES`]; its bytes were discarded.
    TooLarge,
}

/// Splits a byte stream into LF-terminated frames with a size bound.
#[derive(Clone, Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    discarding: bool,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, data: &[u8]) {
        self.buf.extend_from_slice(data);
    }

    /// Next complete frame, skipping empty lines. An oversized line is
    /// reported once as soon as it crosses the bound.
    pub fn next_frame(&mut self) -> Option<Frame> {
        loop {
            match self.buf.iter().position(|&b| b == b'\n') {
                Some(pos) => {
                    let mut line: Vec<u8> = self.buf.drain(..=pos).collect();
                    line.pop();
                    if line.last() == Some(&b'\r') {
                        line.pop();
                    }
                    if self.discarding {
                        self.discarding = false;
                        continue;
                    }
                    if line.len() > MAX_FRAME_BYTES {
                        return Some(Frame::TooLarge);
                    }
                    if line.iter().all(u8::is_ascii_whitespace) {
                        continue;
                    }
                    return Some(Frame::Line(line));
                }
                None => {
                    if self.buf.len() > MAX_FRAME_BYTES + 1 {
                        self.buf.clear();
                        if !self.discarding {
                            self.discarding = true;
                            return Some(Frame::TooLarge);
                        }
                    }
                    return None;
                }
            }
        }
    }

    /// Bytes of an unterminated trailing line.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}

/// Validates a decoded envelope's JSON shape without interpreting it,
/// for conformance checks over recorded traffic.
pub fn validate_line(line: &str) -> Result<Message, FrameError> {
    decode(line.as_bytes()).map(|(_, m)| m)
}

/// Builds an envelope-like object for tests and tools.
pub fn raw_frame(kind: &str, msg_id: u64, payload: Value) -> String {
    let mut obj = Map::new();
    obj.insert("v".into(), Value::from(PROTOCOL_VERSION));
    obj.insert("type".into(), Value::from(kind));
    obj.insert("msg_id".into(), Value::from(msg_id));
    obj.insert("ts".into(), Value::from(0u64));
    obj.insert("payload".into(), payload);
    Value::Object(obj).to_string()
}
