//! Reference implementations used as oracles by the integration tests.
//!
//! Nothing here calls into the checker: specs are re-modelled, the
//! linearizability search is a plain permutation search and certificate
//! conditions are re-evaluated from raw event lists.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use linwell::{CallId, Event, EventKey, History, ProcessId};
use rand::seq::SliceRandom;
use rand::Rng;

/// Object id → built-in spec name.
pub type Specs = BTreeMap<String, String>;

pub fn specs(pairs: &[(&str, &str)]) -> Specs {
    pairs
        .iter()
        .map(|(o, s)| (o.to_string(), s.to_string()))
        .collect()
}

/// Independent model of the built-in specs. `None` for unknown operations
/// or wrong arity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Model {
    Register(String),
    Queue(VecDeque<String>),
    Stack(Vec<String>),
}

impl Model {
    pub fn new(spec: &str) -> Model {
        match spec {
            "register" => Model::Register("0".into()),
            "fifo-queue" => Model::Queue(VecDeque::new()),
            "stack" => Model::Stack(Vec::new()),
            other => panic!("no model for {other}"),
        }
    }

    pub fn apply(&mut self, op: &str, args: &[String]) -> Option<Vec<String>> {
        let ok = || Some(vec!["ok".to_string()]);
        match (self, op, args) {
            (Model::Register(v), "write", [x]) => {
                *v = x.clone();
                ok()
            }
            (Model::Register(v), "read", []) => Some(vec![v.clone()]),
            (Model::Queue(q), "enq", [x]) => {
                q.push_back(x.clone());
                ok()
            }
            (Model::Queue(q), "deq", []) => {
                Some(vec![q.pop_front().unwrap_or_else(|| "empty".into())])
            }
            (Model::Stack(s), "push", [x]) => {
                s.push(x.clone());
                ok()
            }
            (Model::Stack(s), "pop", []) => Some(vec![s.pop().unwrap_or_else(|| "empty".into())]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RawCall {
    pub id: CallId,
    pub obj: String,
    pub op: String,
    pub args: Vec<String>,
    pub result: Option<Vec<String>>,
    pub inv_pos: usize,
    pub resp_pos: Option<usize>,
}

pub fn raw_calls(events: &[Event]) -> Vec<RawCall> {
    let mut calls: Vec<RawCall> = Vec::new();
    let mut open: HashMap<CallId, usize> = HashMap::new();
    for (i, e) in events.iter().enumerate() {
        let id = CallId::new(e.proc.0, e.seq);
        if e.is_invocation() {
            open.insert(id, calls.len());
            calls.push(RawCall {
                id,
                obj: e.obj.0.clone(),
                op: e.op.clone(),
                args: e.payload.clone(),
                result: None,
                inv_pos: i,
                resp_pos: None,
            });
        } else if let Some(&c) = open.get(&id) {
            calls[c].result = Some(e.payload.clone());
            calls[c].resp_pos = Some(i);
        }
    }
    calls
}

/// Brute-force linearizability: pick which pending calls take effect, then
/// try every precedence-respecting order of the chosen calls. Completed
/// pending calls return whatever the model yields.
pub fn brute_linearizable(events: &[Event], specs: &Specs) -> bool {
    let calls = raw_calls(events);
    let pending: Vec<usize> = (0..calls.len())
        .filter(|&i| calls[i].result.is_none())
        .collect();
    for mask in 0u32..(1 << pending.len()) {
        let chosen: Vec<usize> = (0..calls.len())
            .filter(|&i| match pending.iter().position(|&p| p == i) {
                Some(k) => mask & (1 << k) != 0,
                None => true,
            })
            .collect();
        let mut models: BTreeMap<String, Model> = specs
            .iter()
            .map(|(o, s)| (o.clone(), Model::new(s)))
            .collect();
        let mut used = vec![false; chosen.len()];
        if permute(&calls, &chosen, &mut used, &mut models) {
            return true;
        }
    }
    false
}

fn permute(
    calls: &[RawCall],
    chosen: &[usize],
    used: &mut [bool],
    models: &mut BTreeMap<String, Model>,
) -> bool {
    if used.iter().all(|&u| u) {
        return true;
    }
    for k in 0..chosen.len() {
        if used[k] {
            continue;
        }
        let c = &calls[chosen[k]];
        // every unused call that responded before c was invoked must go first
        let blocked = (0..chosen.len()).any(|j| {
            !used[j] && j != k && calls[chosen[j]].resp_pos.is_some_and(|r| r < c.inv_pos)
        });
        if blocked {
            continue;
        }
        let saved = models[&c.obj].clone();
        let got = models.get_mut(&c.obj).unwrap().apply(&c.op, &c.args);
        let fits = match (&got, &c.result) {
            (None, _) => false,
            (Some(g), Some(r)) => g == r,
            (Some(_), None) => true,
        };
        if fits {
            used[k] = true;
            if permute(calls, chosen, used, models) {
                return true;
            }
            used[k] = false;
        }
        models.insert(c.obj.clone(), saved);
    }
    false
}

/// Own well-formedness check: per process, alternating inv/resp starting
/// with an invocation, each response matching the invocation before it,
/// and no repeated (proc, seq, kind).
pub fn well_formed(events: &[Event]) -> bool {
    let mut last: HashMap<ProcessId, &Event> = HashMap::new();
    let mut seen = HashSet::new();
    for e in events {
        if !seen.insert((e.proc, e.seq, e.is_invocation())) {
            return false;
        }
        match (last.get(&e.proc), e.is_invocation()) {
            (None, true) => {}
            (None, false) => return false,
            (Some(prev), true) if prev.is_invocation() => return false,
            (Some(_), true) => {}
            (Some(prev), false) => {
                if !prev.is_invocation()
                    || prev.seq != e.seq
                    || prev.obj != e.obj
                    || prev.op != e.op
                {
                    return false;
                }
            }
        }
        last.insert(e.proc, e);
    }
    true
}

fn key(e: &Event) -> (u32, u32, bool) {
    (e.proc.0, e.seq, e.is_invocation())
}

pub fn complete_events(events: &[Event]) -> Vec<Event> {
    let responded: HashSet<(u32, u32)> = events
        .iter()
        .filter(|e| e.is_response())
        .map(|e| (e.proc.0, e.seq))
        .collect();
    events
        .iter()
        .filter(|e| e.is_response() || responded.contains(&(e.proc.0, e.seq)))
        .cloned()
        .collect()
}

pub fn by_proc(events: &[Event], p: u32) -> Vec<Event> {
    events.iter().filter(|e| e.proc.0 == p).cloned().collect()
}

pub fn by_obj(events: &[Event], o: &str) -> Vec<Event> {
    events.iter().filter(|e| e.obj.0 == o).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cond {
    L1,
    L2Equiv,
    L2Legal,
    L3,
}

/// First violated condition of (ext, s) against h, strengthened precedence.
pub fn first_violation(h: &[Event], ext: &[Event], s: &[Event], specs: &Specs) -> Option<Cond> {
    // L1
    let h_keys: HashSet<_> = h.iter().map(key).collect();
    let kept: Vec<&Event> = ext.iter().filter(|e| h_keys.contains(&key(e))).collect();
    let is_sub = kept.len() == h.len() && kept.iter().zip(h).all(|(a, b)| *a == b);
    let extras_are_responses = ext
        .iter()
        .filter(|e| !h_keys.contains(&key(e)))
        .all(|e| e.is_response());
    if !well_formed(ext) || !is_sub || !extras_are_responses {
        return Some(Cond::L1);
    }
    // L2: equivalence
    let completed = complete_events(ext);
    let procs: BTreeSet<u32> = completed.iter().chain(s).map(|e| e.proc.0).collect();
    if procs
        .iter()
        .any(|&p| by_proc(&completed, p) != by_proc(s, p))
    {
        return Some(Cond::L2Equiv);
    }
    // L2: sequential, complete, legal
    if !s.len().is_multiple_of(2) {
        return Some(Cond::L2Legal);
    }
    let mut models: BTreeMap<&str, Model> = specs
        .iter()
        .map(|(o, n)| (o.as_str(), Model::new(n)))
        .collect();
    for pair in s.chunks(2) {
        let (i, r) = (&pair[0], &pair[1]);
        if !i.is_invocation()
            || !r.is_response()
            || i.proc != r.proc
            || i.seq != r.seq
            || i.obj != r.obj
            || i.op != r.op
        {
            return Some(Cond::L2Legal);
        }
        let Some(m) = models.get_mut(i.obj.0.as_str()) else {
            return Some(Cond::L2Legal);
        };
        if m.apply(&i.op, &i.payload).as_ref() != Some(&r.payload) {
            return Some(Cond::L2Legal);
        }
    }
    // L3 over complete(ext)
    let order: HashMap<(u32, u32), usize> = s
        .chunks(2)
        .enumerate()
        .map(|(k, pair)| ((pair[0].proc.0, pair[0].seq), k))
        .collect();
    let calls = raw_calls(&completed);
    for a in &calls {
        for b in &calls {
            if a.resp_pos.is_some_and(|r| r < b.inv_pos) {
                let (ia, ib) = (
                    order[&(a.id.proc.0, a.id.seq)],
                    order[&(b.id.proc.0, b.id.seq)],
                );
                if ia >= ib {
                    return Some(Cond::L3);
                }
            }
        }
    }
    None
}

/// A random well-formed history over `procs` processes and the given
/// objects, with arbitrary payloads (not necessarily legal).
pub fn random_history(rng: &mut impl Rng, procs: u32, objects: &[&str], len: usize) -> History {
    let ops = ["write", "read", "enq", "deq"];
    let values = ["0", "1", "2", "x", "y", "ok", "empty"];
    let mut events = Vec::new();
    let mut open: Vec<Option<Event>> = vec![None; procs as usize];
    let mut seq = vec![0u32; procs as usize];
    while events.len() < len {
        let p = rng.gen_range(0..procs as usize);
        match open[p].take() {
            None => {
                seq[p] += 1;
                let n_args = rng.gen_range(0..=1);
                let args: Vec<String> = (0..n_args)
                    .map(|_| values.choose(rng).unwrap().to_string())
                    .collect();
                let e = Event::inv(
                    p as u32 + 1,
                    seq[p],
                    objects.choose(rng).unwrap(),
                    ops.choose(rng).unwrap(),
                    args,
                );
                events.push(e.clone());
                open[p] = Some(e);
            }
            Some(inv) => {
                events.push(inv.response_with(vec![values.choose(rng).unwrap().to_string()]));
            }
        }
    }
    History::validate(events).expect("built well-formed")
}

/// A random interleaving of the same per-process sequences.
pub fn reinterleave(rng: &mut impl Rng, h: &History) -> History {
    let mut queues: BTreeMap<ProcessId, VecDeque<Event>> = BTreeMap::new();
    for e in h.events() {
        queues.entry(e.proc).or_default().push_back(e.clone());
    }
    let mut out = Vec::with_capacity(h.len());
    while out.len() < h.len() {
        let live: Vec<ProcessId> = queues
            .iter()
            .filter(|(_, q)| !q.is_empty())
            .map(|(p, _)| *p)
            .collect();
        let p = *live.choose(rng).unwrap();
        out.push(queues.get_mut(&p).unwrap().pop_front().unwrap());
    }
    History::validate(out).expect("per-process order kept")
}

/// Inserts responses for a random subset of pending calls, each at a random
/// position after its invocation.
pub fn extend_with_responses(rng: &mut impl Rng, h: &History) -> History {
    let mut events = h.events().to_vec();
    for id in h.pending_calls() {
        if !rng.gen_bool(0.6) {
            continue;
        }
        let inv_pos = events
            .iter()
            .position(|e| e.key() == EventKey::inv(id))
            .unwrap();
        let resp = events[inv_pos].response_with(vec!["r".into()]);
        let at = rng.gen_range(inv_pos + 1..=events.len());
        events.insert(at, resp);
    }
    History::validate(events).expect("responses follow their invocations")
}
