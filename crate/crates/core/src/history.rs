//! Events, method calls and histories.
//!
//! A [`History`] is a finite sequence of invocation and response events. The
//! sequence position is the well ordering of the events: `e` precedes `e'`
//! iff `e` appears earlier in the sequence. Every history produced by
//! [`History::validate`] is well-formed, meaning that each process
//! subhistory alternates invocation/response starting with an invocation, and
//! that each response matches the invocation immediately before it.
//!
//! All operations are pure and return new histories.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

/// Process index. By convention processes are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProcessId(pub u32);

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Object identifier, e.g. `"q1"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectId(pub String);

impl ObjectId {
    pub fn new(id: impl Into<String>) -> Self {
        ObjectId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ObjectId {
    fn from(s: &str) -> Self {
        ObjectId(s.to_owned())
    }
}

/// Identifies a method call: the `seq`-th call made by process `proc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CallId {
    pub proc: ProcessId,
    pub seq: u32,
}

impl CallId {
    pub fn new(proc: u32, seq: u32) -> Self {
        CallId {
            proc: ProcessId(proc),
            seq,
        }
    }
}

impl fmt::Display for CallId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.proc, self.seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    Invocation,
    Response,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Invocation => f.write_str("inv"),
            EventKind::Response => f.write_str("resp"),
        }
    }
}

/// Primary key of an event inside a history. Payloads are not part of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventKey {
    pub call: CallId,
    pub kind: EventKind,
}

impl EventKey {
    pub fn inv(call: CallId) -> Self {
        EventKey {
            call,
            kind: EventKind::Invocation,
        }
    }

    pub fn resp(call: CallId) -> Self {
        EventKey {
            call,
            kind: EventKind::Response,
        }
    }
}

impl fmt::Display for EventKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind, self.call)
    }
}

/// One invocation or response event.
///
/// For invocations `payload` holds the arguments; for responses it holds the
/// results. Payload values are opaque at this layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Event {
    pub kind: EventKind,
    pub proc: ProcessId,
    pub seq: u32,
    pub obj: ObjectId,
    pub op: String,
    pub payload: Vec<String>,
}

impl Event {
    pub fn inv<S: Into<String>>(
        proc: u32,
        seq: u32,
        obj: &str,
        op: &str,
        payload: impl IntoIterator<Item = S>,
    ) -> Self {
        Event::new(EventKind::Invocation, proc, seq, obj, op, payload)
    }

    pub fn resp<S: Into<String>>(
        proc: u32,
        seq: u32,
        obj: &str,
        op: &str,
        payload: impl IntoIterator<Item = S>,
    ) -> Self {
        Event::new(EventKind::Response, proc, seq, obj, op, payload)
    }

    pub fn new<S: Into<String>>(
        kind: EventKind,
        proc: u32,
        seq: u32,
        obj: &str,
        op: &str,
        payload: impl IntoIterator<Item = S>,
    ) -> Self {
        Event {
            kind,
            proc: ProcessId(proc),
            seq,
            obj: ObjectId::new(obj),
            op: op.to_owned(),
            payload: payload.into_iter().map(Into::into).collect(),
        }
    }

    pub fn call_id(&self) -> CallId {
        CallId {
            proc: self.proc,
            seq: self.seq,
        }
    }

    pub fn key(&self) -> EventKey {
        EventKey {
            call: self.call_id(),
            kind: self.kind,
        }
    }

    pub fn is_invocation(&self) -> bool {
        self.kind == EventKind::Invocation
    }

    pub fn is_response(&self) -> bool {
        self.kind == EventKind::Response
    }

    /// An invocation and a response match iff they agree on process, call
    /// index, object and operation.
    pub fn matches(&self, other: &Event) -> bool {
        self.kind != other.kind
            && self.proc == other.proc
            && self.seq == other.seq
            && self.obj == other.obj
            && self.op == other.op
    }

    /// Builds the response matching this invocation with the given results.
    pub fn response_with(&self, results: Vec<String>) -> Event {
        Event {
            kind: EventKind::Response,
            proc: self.proc,
            seq: self.seq,
            obj: self.obj.clone(),
            op: self.op.clone(),
            payload: results,
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}<{},{},{},{},[{}]>",
            self.kind,
            self.proc.0,
            self.seq,
            self.obj,
            self.op,
            self.payload.join(",")
        )
    }
}

/// An invocation paired with its matching response, if any.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MethodCall {
    pub inv: Event,
    pub resp: Option<Event>,
}

impl MethodCall {
    pub fn id(&self) -> CallId {
        self.inv.call_id()
    }

    pub fn is_pending(&self) -> bool {
        self.resp.is_none()
    }

    pub fn is_complete(&self) -> bool {
        self.resp.is_some()
    }

    pub fn obj(&self) -> &ObjectId {
        &self.inv.obj
    }
}

/// Which well-formedness rule an event broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WellFormedRule {
    /// The first event of a process is a response.
    FirstEventNotInvocation,
    /// An invocation follows a pending invocation of the same process.
    InvAfterInv,
    /// A response follows a response of the same process.
    RespAfterResp,
    /// A response does not match the preceding invocation of its process.
    MismatchedResponse,
}

impl fmt::Display for WellFormedRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WellFormedRule::FirstEventNotInvocation => "first-event-not-invocation",
            WellFormedRule::InvAfterInv => "inv-after-inv",
            WellFormedRule::RespAfterResp => "resp-after-resp",
            WellFormedRule::MismatchedResponse => "mismatched-response",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("event {index}: not well-formed ({rule})")]
    NotWellFormed { index: usize, rule: WellFormedRule },
    #[error("event {index}: duplicate event identity")]
    DuplicateEvent { index: usize },
}

impl ValidationError {
    pub fn index(&self) -> usize {
        match self {
            ValidationError::NotWellFormed { index, .. } => *index,
            ValidationError::DuplicateEvent { index } => *index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("history is not a subhistory of the minuend")]
    NotASubhistory,
    #[error("method call {0} is not in the history")]
    CallNotInHistory(CallId),
}

/// A finite history. Equality is event-sequence equality.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct History {
    events: Vec<Event>,
}

/// Checks both history conditions and returns the validated history.
pub fn validate(events: Vec<Event>) -> Result<History, ValidationError> {
    History::validate(events)
}

impl History {
    pub fn empty() -> Self {
        History { events: Vec::new() }
    }

    pub fn validate(events: Vec<Event>) -> Result<Self, ValidationError> {
        if let Some(err) = first_violation(&events) {
            return Err(err);
        }
        Ok(History { events })
    }

    /// Wraps an event sequence without checking well-formedness.
    ///
    /// Differences of histories and hand-built certificates are not
    /// necessarily well-formed; use [`History::is_well_formed`] where it
    /// matters.
    pub fn from_events_unchecked(events: Vec<Event>) -> Self {
        History { events }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn is_well_formed(&self) -> bool {
        first_violation(&self.events).is_none()
    }

    pub fn processes(&self) -> BTreeSet<ProcessId> {
        self.events.iter().map(|e| e.proc).collect()
    }

    pub fn objects(&self) -> BTreeSet<ObjectId> {
        self.events.iter().map(|e| e.obj.clone()).collect()
    }

    fn filter(&self, keep: impl Fn(&Event) -> bool) -> History {
        History {
            events: self.events.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }

    /// `H|p`: the maximal subhistory of events generated by `p`.
    pub fn project_process(&self, p: ProcessId) -> History {
        self.filter(|e| e.proc == p)
    }

    /// `H|o`: the maximal subhistory of events on object `o`.
    pub fn project_object(&self, o: &ObjectId) -> History {
        self.filter(|e| &e.obj == o)
    }

    /// `complete(H)`: drops every pending invocation.
    pub fn complete(&self) -> History {
        let responded: HashSet<CallId> = self
            .events
            .iter()
            .filter(|e| e.is_response())
            .map(Event::call_id)
            .collect();
        self.filter(|e| e.is_response() || responded.contains(&e.call_id()))
    }

    pub fn is_complete(&self) -> bool {
        self.pending_calls().is_empty()
    }

    /// Invocations without a matching response, in history order.
    pub fn pending_calls(&self) -> Vec<CallId> {
        let responded: HashSet<CallId> = self
            .events
            .iter()
            .filter(|e| e.is_response())
            .map(Event::call_id)
            .collect();
        self.events
            .iter()
            .filter(|e| e.is_invocation() && !responded.contains(&e.call_id()))
            .map(Event::call_id)
            .collect()
    }

    /// `self − sub`: the events of `self` not in `sub`, in `self`'s order.
    ///
    /// The result is an event structure that need not be well-formed (for
    /// example a lone appended response).
    pub fn difference(&self, sub: &History) -> Result<History, HistoryError> {
        if !sub.is_subhistory_of(self) {
            return Err(HistoryError::NotASubhistory);
        }
        let removed: HashSet<EventKey> = sub.events.iter().map(Event::key).collect();
        Ok(self.filter(|e| !removed.contains(&e.key())))
    }

    /// `self ⊆ other`: every event of `self` occurs in `other` with identical
    /// content and the relative order of those events agrees.
    pub fn is_subhistory_of(&self, other: &History) -> bool {
        let positions = other.position_index();
        let mut last: Option<usize> = None;
        for e in &self.events {
            match positions.get(&e.key()) {
                Some(&pos) if other.events[pos] == *e => {
                    if last.is_some_and(|l| l >= pos) {
                        return false;
                    }
                    last = Some(pos);
                }
                _ => return false,
            }
        }
        true
    }

    /// `self` is a prefix of `other`: a subhistory whose events all precede
    /// the remaining events of `other`.
    pub fn is_prefix_of(&self, other: &History) -> bool {
        other.events.starts_with(&self.events)
    }

    /// Equal per-process subhistories for every process of either history.
    pub fn is_equivalent(&self, other: &History) -> bool {
        let procs: BTreeSet<ProcessId> = self
            .processes()
            .union(&other.processes())
            .copied()
            .collect();
        procs
            .into_iter()
            .all(|p| self.project_process(p) == other.project_process(p))
    }

    /// Sequential: starts with an invocation, every invocation is
    /// immediately followed by its matching response, and every response by
    /// an invocation.
    pub fn is_sequential(&self) -> bool {
        if let Some(first) = self.events.first() {
            if !first.is_invocation() {
                return false;
            }
        }
        self.events.windows(2).all(|w| {
            if w[0].is_invocation() {
                w[1].is_response() && w[0].matches(&w[1])
            } else {
                w[1].is_invocation()
            }
        })
    }

    pub fn position(&self, key: EventKey) -> Option<usize> {
        self.events.iter().position(|e| e.key() == key)
    }

    pub fn position_index(&self) -> HashMap<EventKey, usize> {
        self.events
            .iter()
            .enumerate()
            .map(|(i, e)| (e.key(), i))
            .collect()
    }

    pub fn contains_event(&self, e: &Event) -> bool {
        self.events.contains(e)
    }

    /// `e ≺ e'` in this history. `None` if either event is absent.
    pub fn event_precedes(&self, a: EventKey, b: EventKey) -> Option<bool> {
        Some(self.position(a)? < self.position(b)?)
    }

    /// All method calls, ordered by invocation position.
    pub fn calls(&self) -> Vec<MethodCall> {
        let mut responses: HashMap<CallId, &Event> = self
            .events
            .iter()
            .filter(|e| e.is_response())
            .map(|e| (e.call_id(), e))
            .collect();
        self.events
            .iter()
            .filter(|e| e.is_invocation())
            .map(|inv| MethodCall {
                inv: inv.clone(),
                resp: responses
                    .remove(&inv.call_id())
                    .filter(|r| inv.matches(r))
                    .cloned(),
            })
            .collect()
    }

    /// Complete method calls (`m ∈ H`).
    pub fn complete_calls(&self) -> Vec<MethodCall> {
        self.calls()
            .into_iter()
            .filter(MethodCall::is_complete)
            .collect()
    }

    pub fn call(&self, id: CallId) -> Option<MethodCall> {
        self.calls().into_iter().find(|c| c.id() == id)
    }

    /// `m ≺ m'`: the response of `m` precedes the invocation of `mp`.
    /// A pending `m` precedes nothing.
    pub fn method_precedes(&self, m: &MethodCall, mp: &MethodCall) -> Result<bool, HistoryError> {
        let inv_mp = self
            .position(mp.inv.key())
            .ok_or(HistoryError::CallNotInHistory(mp.id()))?;
        if self.position(m.inv.key()).is_none() {
            return Err(HistoryError::CallNotInHistory(m.id()));
        }
        let Some(resp) = &m.resp else {
            return Ok(false);
        };
        match self.position(resp.key()) {
            Some(resp_m) => Ok(resp_m < inv_mp),
            None => Err(HistoryError::CallNotInHistory(m.id())),
        }
    }

    pub fn method_order(&self) -> MethodOrder {
        MethodOrder::new(self)
    }

    /// Events grouped per object, preserving order.
    pub fn by_object(&self) -> BTreeMap<ObjectId, History> {
        let mut out: BTreeMap<ObjectId, History> = BTreeMap::new();
        for e in &self.events {
            out.entry(e.obj.clone()).or_default().events.push(e.clone());
        }
        out
    }
}

fn first_violation(events: &[Event]) -> Option<ValidationError> {
    let mut seen: HashSet<EventKey> = HashSet::with_capacity(events.len());
    // Last event of each process.
    let mut last: HashMap<ProcessId, &Event> = HashMap::new();
    for (index, e) in events.iter().enumerate() {
        if !seen.insert(e.key()) {
            return Some(ValidationError::DuplicateEvent { index });
        }
        let rule = match (last.get(&e.proc), e.kind) {
            (None, EventKind::Response) => Some(WellFormedRule::FirstEventNotInvocation),
            (None, EventKind::Invocation) => None,
            (Some(prev), EventKind::Invocation) if prev.is_invocation() => {
                Some(WellFormedRule::InvAfterInv)
            }
            (Some(_), EventKind::Invocation) => None,
            (Some(prev), EventKind::Response) if prev.is_response() => {
                Some(WellFormedRule::RespAfterResp)
            }
            (Some(prev), EventKind::Response) if !prev.matches(e) => {
                Some(WellFormedRule::MismatchedResponse)
            }
            (Some(_), EventKind::Response) => None,
        };
        if let Some(rule) = rule {
            return Some(ValidationError::NotWellFormed { index, rule });
        }
        last.insert(e.proc, e);
    }
    None
}

/// The precedence relation on method calls induced by a history:
/// `m ≺ m'` iff `resp(m)` occurs before `inv(m')`.
#[derive(Debug, Clone)]
pub struct MethodOrder {
    calls: Vec<MethodCall>,
    inv_pos: Vec<usize>,
    resp_pos: Vec<Option<usize>>,
    index: HashMap<CallId, usize>,
}

impl MethodOrder {
    pub fn new(history: &History) -> Self {
        let positions = history.position_index();
        let calls = history.calls();
        let inv_pos = calls.iter().map(|c| positions[&c.inv.key()]).collect();
        let resp_pos = calls
            .iter()
            .map(|c| c.resp.as_ref().map(|r| positions[&r.key()]))
            .collect();
        let index = calls.iter().enumerate().map(|(i, c)| (c.id(), i)).collect();
        MethodOrder {
            calls,
            inv_pos,
            resp_pos,
            index,
        }
    }

    pub fn calls(&self) -> &[MethodCall] {
        &self.calls
    }

    pub fn contains(&self, id: CallId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn precedes(&self, a: CallId, b: CallId) -> bool {
        match (self.index.get(&a), self.index.get(&b)) {
            (Some(&i), Some(&j)) => self.resp_pos[i].is_some_and(|r| r < self.inv_pos[j]),
            _ => false,
        }
    }

    pub fn concurrent(&self, a: CallId, b: CallId) -> bool {
        !self.precedes(a, b) && !self.precedes(b, a)
    }

    /// All ordered pairs `(m, m')` with `m ≺ m'`.
    pub fn pairs(&self) -> Vec<(CallId, CallId)> {
        let mut out = Vec::new();
        for (i, a) in self.calls.iter().enumerate() {
            let Some(r) = self.resp_pos[i] else { continue };
            for (j, b) in self.calls.iter().enumerate() {
                if r < self.inv_pos[j] {
                    out.push((a.id(), b.id()));
                }
            }
        }
        out
    }
}
