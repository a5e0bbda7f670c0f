//! JSON forms of engine output: the JSON Lines event trace and the run
//! summary.
//!
//! Each trace line is `{"t": T, "kind": K, "payload": {...}}` with `K` one of
//! `arrival`, `tight`, `merge`, `match`, `grow`. Scalars use the encoding of
//! the run's numeric mode (`"p/q"` strings in exact mode).

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::engine::{EventKind, EventRecord, RunSummary};
use crate::scalar::{Scalar, ScalarError};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: invalid JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("trace line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("trace line {line}: {source}")]
    Scalar {
        line: usize,
        #[source]
        source: ScalarError,
    },
}

pub fn event_to_json<S: Scalar>(event: &EventRecord<S>) -> Value {
    let (kind, payload) = match &event.kind {
        EventKind::Arrival { u, set } => ("arrival", json!({ "u": u, "set": set })),
        EventKind::Tight { u, v } => ("tight", json!({ "u": u, "v": v })),
        EventKind::Merge { set, a, b } => ("merge", json!({ "set": set, "a": a, "b": b })),
        EventKind::Match { u, v } => ("match", json!({ "u": u, "v": v })),
        EventKind::Grow { set, from, to } => (
            "grow",
            json!({ "set": set, "from": from.to_json(), "to": to.to_json() }),
        ),
    };
    json!({ "t": event.t.to_json(), "kind": kind, "payload": payload })
}

/// One compact JSON object per event, newline-terminated.
pub fn events_to_jsonl<S: Scalar>(events: &[EventRecord<S>]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&event_to_json(e).to_string());
        out.push('\n');
    }
    out
}

fn schema(line: usize, message: impl Into<String>) -> TraceError {
    TraceError::Schema {
        line,
        message: message.into(),
    }
}

fn index(payload: &Map<String, Value>, key: &str, line: usize) -> Result<usize, TraceError> {
    payload
        .get(key)
        .and_then(Value::as_u64)
        .map(|x| x as usize)
        .ok_or_else(|| schema(line, format!("payload field `{key}` must be a non-negative integer")))
}

fn scalar<S: Scalar>(value: Option<&Value>, key: &str, line: usize) -> Result<S, TraceError> {
    let value = value.ok_or_else(|| schema(line, format!("missing field `{key}`")))?;
    S::from_json(value).map_err(|source| TraceError::Scalar { line, source })
}

pub fn event_from_json<S: Scalar>(value: &Value, line: usize) -> Result<EventRecord<S>, TraceError> {
    let obj = value
        .as_object()
        .ok_or_else(|| schema(line, "event is not an object"))?;
    let t = scalar::<S>(obj.get("t"), "t", line)?;
    let kind = obj
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| schema(line, "missing string field `kind`"))?;
    let payload = obj
        .get("payload")
        .and_then(Value::as_object)
        .ok_or_else(|| schema(line, "missing object field `payload`"))?;
    let kind = match kind {
        "arrival" => EventKind::Arrival {
            u: index(payload, "u", line)?,
            set: index(payload, "set", line)?,
        },
        "tight" => EventKind::Tight {
            u: index(payload, "u", line)?,
            v: index(payload, "v", line)?,
        },
        "merge" => EventKind::Merge {
            set: index(payload, "set", line)?,
            a: index(payload, "a", line)?,
            b: index(payload, "b", line)?,
        },
        "match" => EventKind::Match {
            u: index(payload, "u", line)?,
            v: index(payload, "v", line)?,
        },
        "grow" => EventKind::Grow {
            set: index(payload, "set", line)?,
            from: scalar::<S>(payload.get("from"), "from", line)?,
            to: scalar::<S>(payload.get("to"), "to", line)?,
        },
        other => return Err(schema(line, format!("unknown event kind `{other}`"))),
    };
    Ok(EventRecord { t, kind })
}

/// Parses a JSON Lines trace. Blank lines are skipped; line numbers in errors
/// are 1-based.
pub fn events_from_jsonl<S: Scalar>(text: &str) -> Result<Vec<EventRecord<S>>, TraceError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(raw).map_err(|source| TraceError::Json { line, source })?;
        out.push(event_from_json(&value, line)?);
    }
    Ok(out)
}

pub fn summary_to_json<S: Scalar>(summary: &RunSummary<S>) -> Value {
    json!({
        "connection_cost": summary.connection_cost.to_json(),
        "waiting_cost": summary.waiting_cost.to_json(),
        "total_cost": summary.total_cost.to_json(),
        "dual_objective": summary.dual_objective.to_json(),
        "m": summary.m,
        "num_sets": summary.num_sets,
        "num_marked_edges": summary.num_marked_edges,
    })
}
