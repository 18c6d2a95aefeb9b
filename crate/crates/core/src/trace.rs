//! JSON Lines trace format.
//!
//! One JSON object per line, keys in the order `type, proc, seq, obj, op,
//! payload`; line order is the order of the history. `msg` records name a
//! send invocation and a receive response:
//!
//! ```text
//! {"type":"inv","proc":1,"seq":1,"obj":"q","op":"enq","payload":["x"]}
//! {"type":"resp","proc":1,"seq":1,"obj":"q","op":"enq","payload":["ok"]}
//! {"type":"msg","from":{"proc":1,"seq":1,"kind":"inv"},"to":{"proc":2,"seq":1,"kind":"resp"}}
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{
    CallId, Event, EventKey, EventKind, History, ObjectId, ProcessId, ValidationError,
    WellFormedRule,
};
use crate::order::{CausalityOrder, OrderError, TotalOrderWitness};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefKind {
    Inv,
    Resp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRef {
    pub proc: u32,
    pub seq: u32,
    pub kind: RefKind,
}

impl From<EventRef> for EventKey {
    fn from(r: EventRef) -> Self {
        let call = CallId::new(r.proc, r.seq);
        match r.kind {
            RefKind::Inv => EventKey::inv(call),
            RefKind::Resp => EventKey::resp(call),
        }
    }
}

impl From<EventKey> for EventRef {
    fn from(k: EventKey) -> Self {
        EventRef {
            proc: k.call.proc.0,
            seq: k.call.seq,
            kind: match k.kind {
                EventKind::Invocation => RefKind::Inv,
                EventKind::Response => RefKind::Resp,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum TraceRecord {
    Inv {
        proc: u32,
        seq: u32,
        obj: String,
        op: String,
        payload: Vec<String>,
    },
    Resp {
        proc: u32,
        seq: u32,
        obj: String,
        op: String,
        payload: Vec<String>,
    },
    Msg {
        from: EventRef,
        to: EventRef,
    },
}

impl TraceRecord {
    pub fn event(&self) -> Option<Event> {
        let (kind, proc, seq, obj, op, payload) = match self {
            TraceRecord::Inv {
                proc,
                seq,
                obj,
                op,
                payload,
            } => (EventKind::Invocation, proc, seq, obj, op, payload),
            TraceRecord::Resp {
                proc,
                seq,
                obj,
                op,
                payload,
            } => (EventKind::Response, proc, seq, obj, op, payload),
            TraceRecord::Msg { .. } => return None,
        };
        Some(Event {
            kind,
            proc: ProcessId(*proc),
            seq: *seq,
            obj: ObjectId(obj.clone()),
            op: op.clone(),
            payload: payload.clone(),
        })
    }

    pub fn from_event(e: &Event) -> Self {
        let (proc, seq, obj, op, payload) = (
            e.proc.0,
            e.seq,
            e.obj.0.clone(),
            e.op.clone(),
            e.payload.clone(),
        );
        match e.kind {
            EventKind::Invocation => TraceRecord::Inv {
                proc,
                seq,
                obj,
                op,
                payload,
            },
            EventKind::Response => TraceRecord::Resp {
                proc,
                seq,
                obj,
                op,
                payload,
            },
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trace records serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: not well-formed ({rule})")]
    NotWellFormed { line: usize, rule: WellFormedRule },
    #[error("line {line}: duplicate event")]
    DuplicateEvent { line: usize },
}

impl TraceError {
    pub fn line(&self) -> usize {
        match self {
            TraceError::Json { line, .. }
            | TraceError::NotWellFormed { line, .. }
            | TraceError::DuplicateEvent { line } => *line,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    Process(ProcessId),
    Object(ObjectId),
}

impl std::str::FromStr for Selector {
    type Err = String;

    /// `process=1`, `process=p1` or `object=q`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| format!("selector `{s}` is not key=value"))?;
        match key {
            "process" => value
                .trim_start_matches('p')
                .parse()
                .map(|p| Selector::Process(ProcessId(p)))
                .map_err(|_| format!("bad process `{value}`")),
            "object" => Ok(Selector::Object(ObjectId::new(value))),
            _ => Err(format!("unknown selector `{key}`")),
        }
    }
}

/// A parsed trace: its records in file order plus the derived history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    records: Vec<TraceRecord>,
    history: History,
    messages: Vec<(EventKey, EventKey)>,
}

impl Trace {
    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let mut records = Vec::new();
        let mut lines = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: TraceRecord = serde_json::from_str(line).map_err(|e| TraceError::Json {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(record);
            lines.push(i + 1);
        }
        Self::build(records, &lines)
    }

    pub fn from_records(records: Vec<TraceRecord>) -> Result<Self, TraceError> {
        let lines: Vec<usize> = (1..=records.len()).collect();
        Self::build(records, &lines)
    }

    fn build(records: Vec<TraceRecord>, lines: &[usize]) -> Result<Self, TraceError> {
        let mut events = Vec::new();
        let mut event_lines = Vec::new();
        let mut messages = Vec::new();
        for (record, &line) in records.iter().zip(lines) {
            match record {
                TraceRecord::Msg { from, to } => messages.push(((*from).into(), (*to).into())),
                _ => {
                    events.push(record.event().expect("event record"));
                    event_lines.push(line);
                }
            }
        }
        let history = History::validate(events).map_err(|e| match e {
            ValidationError::NotWellFormed { index, rule } => TraceError::NotWellFormed {
                line: event_lines[index],
                rule,
            },
            ValidationError::DuplicateEvent { index } => TraceError::DuplicateEvent {
                line: event_lines[index],
            },
        })?;
        Ok(Trace {
            records,
            history,
            messages,
        })
    }

    pub fn from_history(history: &History) -> Self {
        Trace {
            records: history
                .events()
                .iter()
                .map(TraceRecord::from_event)
                .collect(),
            history: history.clone(),
            messages: Vec::new(),
        }
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn messages(&self) -> &[(EventKey, EventKey)] {
        &self.messages
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    /// Canonical serialization: compact JSON, one record per line, LF endings.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }

    /// Keeps the records selected by `sel`. Message records survive when
    /// both endpoints do.
    pub fn project(&self, sel: &Selector) -> Trace {
        let keep = |e: &Event| match sel {
            Selector::Process(p) => e.proc == *p,
            Selector::Object(o) => e.obj == *o,
        };
        let history = match sel {
            Selector::Process(p) => self.history.project_process(*p),
            Selector::Object(o) => self.history.project_object(o),
        };
        let kept = history.position_index();
        let records: Vec<TraceRecord> = self
            .records
            .iter()
            .filter(|r| match r {
                TraceRecord::Msg { from, to } => {
                    kept.contains_key(&(*from).into()) && kept.contains_key(&(*to).into())
                }
                _ => r.event().is_some_and(|e| keep(&e)),
            })
            .cloned()
            .collect();
        let messages = self
            .messages
            .iter()
            .filter(|(a, b)| kept.contains_key(a) && kept.contains_key(b))
            .copied()
            .collect();
        Trace {
            records,
            history,
            messages,
        }
    }

    /// Builds the causality order of the trace and checks that the line
    /// order extends it.
    pub fn causality(&self) -> Result<CausalityOrder, OrderError> {
        let order = CausalityOrder::from_history(&self.history, &self.messages)?;
        let witness = TotalOrderWitness {
            sequence: self.history.events().iter().map(Event::key).collect(),
        };
        if !order.verify_extension(&witness)? {
            let (from, to) = order
                .base_edges()
                .into_iter()
                .find(|(a, b)| self.history.event_precedes(*b, *a) == Some(true))
                .expect("some generating pair is inverted");
            return Err(OrderError::OrderViolation { from, to });
        }
        Ok(order)
    }
}
