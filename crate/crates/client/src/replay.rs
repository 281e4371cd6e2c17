//! Sensing service: publishes a recorded trace as `sensor` messages.

use std::time::Duration;

use ctx_core::protocol::{now_ms, Message, Sensor};
use ctx_core::trace::{Speed, TraceRow};
use thiserror::Error;
use tokio::time::Instant;

use crate::{ClientError, Connection};

#[derive(Debug, Error)]
#[error("replay stopped after {published} rows: {source}")]
pub struct ReplayError {
    pub published: usize,
    pub source: ClientError,
}

/// Publishes every row in order, each at `t_offset_ms / speed` after start
/// (back to back at infinite speed), with heartbeats while waiting. The
/// connection must have said hello. Returns the number of rows published.
pub async fn replay(
    conn: &mut Connection,
    rows: &[TraceRow],
    speed: Speed,
    heartbeat: Duration,
) -> Result<usize, ReplayError> {
    let source = conn.service_id().unwrap_or_default().to_string();
    let start = Instant::now();
    let mut last_beat = Instant::now();
    let fail = |published, source| ReplayError { published, source };
    for (i, row) in rows.iter().enumerate() {
        if let Some(due) = speed.due(row.t_offset_ms) {
            let at = start + due;
            while Instant::now() < at {
                let next_beat = last_beat + heartbeat;
                if next_beat < at {
                    tokio::time::sleep_until(next_beat).await;
                    conn.heartbeat().await.map_err(|e| fail(i, e))?;
                    last_beat = Instant::now();
                } else {
                    tokio::time::sleep_until(at).await;
                }
            }
        }
        let msg = Message::Sensor(Sensor {
            topic: row.topic.clone(),
            source: source.clone(),
            ts: now_ms(),
            values: row.values.clone(),
        });
        conn.send(&msg).await.map_err(|e| fail(i, e))?;
    }
    Ok(rows.len())
}
