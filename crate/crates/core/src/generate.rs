//! Seeded random history generation with optional violation injection.
//!
//! Histories are produced by simulating processes against the object's
//! sequential spec: each call is invoked, takes effect atomically at some
//! later scheduling step, and responds after that. The resulting histories
//! are linearizable by construction. Every written or enqueued value is
//! unique, which lets injected violations be placed where no linearization
//! can explain them.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{CallId, Event, EventKey, History, MethodCall, MethodOrder, ObjectId};
use crate::seqspec::{
    builtin, SequentialSpec, SpecError, SpecRegistry, SpecState, EMPTY, REGISTER_INITIAL,
};

/// Attempts made to produce a trace with at least one injection site.
const INJECTION_ATTEMPTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// A register read returns a value already overwritten before it began.
    StaleRead,
    /// Two sequential dequeues swap their results.
    ReorderDequeue,
    /// A register read misses the latest write that completed before it.
    LostUpdate,
}

impl std::str::FromStr for ViolationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stale-read" => Ok(ViolationKind::StaleRead),
            "reorder-dequeue" => Ok(ViolationKind::ReorderDequeue),
            "lost-update" => Ok(ViolationKind::LostUpdate),
            other => Err(format!("unknown violation kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationSpec {
    pub kind: ViolationKind,
    /// Probability of injecting at each eligible site; at least one site is
    /// always injected.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub procs: u32,
    /// Object id → built-in spec name.
    pub objects: BTreeMap<String, String>,
    pub max_events: usize,
    /// Probability that a process's last call is left pending.
    pub pending_prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<ViolationSpec>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("no {0:?} injection site found after {INJECTION_ATTEMPTS} attempts")]
    NoInjectionSite(ViolationKind),
}

impl GenConfig {
    pub fn registry(&self) -> Result<SpecRegistry, SpecError> {
        SpecRegistry::from_names(self.objects.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    fn check(&self) -> Result<(), GenError> {
        let invalid = |m: &str| Err(GenError::InvalidConfig(m.to_owned()));
        if self.procs == 0 {
            return invalid("procs must be at least 1");
        }
        if self.objects.is_empty() {
            return invalid("at least one object is required");
        }
        if !(0.0..=1.0).contains(&self.pending_prob) {
            return invalid("pending_prob must lie in [0, 1]");
        }
        for name in self.objects.values() {
            builtin(name)?;
        }
        if let Some(v) = &self.violation {
            if !(0.0..=1.0).contains(&v.rate) {
                return invalid("violation rate must lie in [0, 1]");
            }
            let needed = match v.kind {
                ViolationKind::StaleRead | ViolationKind::LostUpdate => "register",
                ViolationKind::ReorderDequeue => "fifo-queue",
            };
            if !self.objects.values().any(|n| n == needed) {
                return Err(GenError::InvalidConfig(format!(
                    "{:?} needs a {needed} object",
                    v.kind
                )));
            }
        }
        Ok(())
    }
}

/// Generates a well-formed history; deterministic in `config`.
pub fn generate(config: &GenConfig) -> Result<History, GenError> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let objects: Vec<(ObjectId, std::sync::Arc<dyn SequentialSpec>)> = config
        .objects
        .iter()
        .map(|(o, name)| Ok((ObjectId::new(o.clone()), builtin(name)?)))
        .collect::<Result<_, SpecError>>()?;

    let Some(violation) = config.violation else {
        return Ok(simulate(config, &objects, &mut rng).history);
    };
    for _ in 0..INJECTION_ATTEMPTS {
        let run = simulate(config, &objects, &mut rng);
        if let Some(h) = inject(&run, violation, &mut rng) {
            return Ok(h);
        }
    }
    Err(GenError::NoInjectionSite(violation.kind))
}

struct Outstanding {
    inv: Event,
    obj: usize,
    result: Option<Vec<String>>,
}

struct Run {
    history: History,
    /// Register value each write overwrote when it took effect.
    overwritten: HashMap<CallId, String>,
}

fn pick_op(
    spec: &dyn SequentialSpec,
    rng: &mut ChaCha8Rng,
    next_value: &mut u64,
) -> (&'static str, Vec<String>) {
    let mutate = rng.gen_bool(0.5);
    let (write, read) = match spec.name() {
        "register" => ("write", "read"),
        "fifo-queue" => ("enq", "deq"),
        _ => ("push", "pop"),
    };
    if mutate {
        let v = *next_value;
        *next_value += 1;
        let value = if spec.name() == "register" {
            v.to_string()
        } else {
            format!("v{v}")
        };
        (write, vec![value])
    } else {
        (read, Vec::new())
    }
}

fn simulate(
    config: &GenConfig,
    objects: &[(ObjectId, std::sync::Arc<dyn SequentialSpec>)],
    rng: &mut ChaCha8Rng,
) -> Run {
    let procs = config.procs as usize;
    let mut states: Vec<SpecState> = objects.iter().map(|(_, s)| s.initial()).collect();
    let mut busy: Vec<Option<Outstanding>> = (0..procs).map(|_| None).collect();
    let mut next_seq = vec![1u32; procs];
    let mut next_value = 1u64;
    let mut events = Vec::new();
    let mut overwritten = HashMap::new();

    loop {
        let outstanding = busy.iter().filter(|b| b.is_some()).count();
        let can_invoke = events.len() + 2 + outstanding <= config.max_events;
        let actions: Vec<usize> = (0..procs)
            .filter(|&p| busy[p].is_some() || can_invoke)
            .collect();
        let Some(&p) = actions.choose(rng) else {
            break;
        };
        match &mut busy[p] {
            slot @ None => {
                let obj = rng.gen_range(0..objects.len());
                let (name, spec) = &objects[obj];
                let (op, args) = pick_op(spec.as_ref(), rng, &mut next_value);
                let inv = Event::inv(p as u32 + 1, next_seq[p], name.as_str(), op, args);
                next_seq[p] += 1;
                events.push(inv.clone());
                *slot = Some(Outstanding {
                    inv,
                    obj,
                    result: None,
                });
            }
            Some(call) if call.result.is_none() => {
                let spec = &objects[call.obj].1;
                let (next, result) = spec
                    .apply(&states[call.obj], &call.inv.op, &call.inv.payload)
                    .expect("generated calls fit their spec");
                if spec.name() == "register" && call.inv.op == "write" {
                    overwritten.insert(call.inv.call_id(), states[call.obj].0[0].clone());
                }
                states[call.obj] = next;
                call.result = Some(result);
            }
            slot @ Some(_) => {
                let call = slot.take().expect("busy");
                events.push(call.inv.response_with(call.result.expect("applied")));
            }
        }
    }

    // Leave some processes' last call pending.
    let mut drop = HashSet::new();
    for p in 1..=config.procs {
        let last = events.iter().rposition(|e| e.proc.0 == p);
        if let Some(i) = last {
            if rng.gen_bool(config.pending_prob) {
                drop.insert(i);
            }
        }
    }
    let events: Vec<Event> = events
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, e)| e)
        .collect();
    Run {
        history: History::validate(events).expect("simulation is well-formed"),
        overwritten,
    }
}

/// A replacement result for one complete call.
struct Site {
    call: CallId,
    result: String,
}

fn inject(run: &Run, violation: ViolationSpec, rng: &mut ChaCha8Rng) -> Option<History> {
    let h = &run.history;
    let order = h.method_order();
    let calls: Vec<&MethodCall> = order.calls().iter().collect();
    let sites: Vec<Vec<Site>> = match violation.kind {
        ViolationKind::StaleRead => stale_read_sites(&calls, &order, rng),
        ViolationKind::LostUpdate => lost_update_sites(h, &calls, &order, &run.overwritten),
        ViolationKind::ReorderDequeue => reorder_sites(&calls, &order),
    };
    if sites.is_empty() {
        return None;
    }
    let mut chosen: Vec<&Vec<Site>> = sites
        .iter()
        .filter(|_| rng.gen_bool(violation.rate))
        .collect();
    if chosen.is_empty() {
        chosen.push(sites.choose(rng).expect("non-empty"));
    }
    let mut replace: HashMap<CallId, String> = HashMap::new();
    for group in chosen {
        for s in group {
            replace.entry(s.call).or_insert_with(|| s.result.clone());
        }
    }
    let events = h
        .events()
        .iter()
        .map(|e| match replace.get(&e.call_id()) {
            Some(r) if e.is_response() => e.response_with(vec![r.clone()]),
            _ => e.clone(),
        })
        .collect();
    Some(History::validate(events).expect("injection keeps well-formedness"))
}

fn is_op(c: &MethodCall, op: &str) -> bool {
    c.inv.op == op
}

fn result(c: &MethodCall) -> Option<&str> {
    c.resp
        .as_ref()
        .and_then(|r| r.payload.first())
        .map(String::as_str)
}

/// Values a complete read provably cannot return: the initial value once a
/// write has completed before it, or a value whose (unique) writer was
/// followed by another completed write before the read began.
fn stale_values(read: &MethodCall, calls: &[&MethodCall], order: &MethodOrder) -> Vec<String> {
    let writes: Vec<&&MethodCall> = calls
        .iter()
        .filter(|c| c.obj() == read.obj() && is_op(c, "write"))
        .collect();
    let before_read: Vec<&&&MethodCall> = writes
        .iter()
        .filter(|w| order.precedes(w.id(), read.id()))
        .collect();
    let mut out = Vec::new();
    if !before_read.is_empty() {
        out.push(REGISTER_INITIAL.to_owned());
    }
    for w in &writes {
        if before_read.iter().any(|w2| order.precedes(w.id(), w2.id())) {
            out.push(w.inv.payload[0].clone());
        }
    }
    out.retain(|v| Some(v.as_str()) != result(read));
    out
}

fn reads<'a>(calls: &[&'a MethodCall]) -> Vec<&'a MethodCall> {
    calls
        .iter()
        .filter(|c| is_op(c, "read") && c.is_complete())
        .copied()
        .collect()
}

fn stale_read_sites(
    calls: &[&MethodCall],
    order: &MethodOrder,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<Site>> {
    reads(calls)
        .into_iter()
        .filter_map(|r| {
            let stale = stale_values(r, calls, order);
            stale.choose(rng).map(|v| {
                vec![Site {
                    call: r.id(),
                    result: v.clone(),
                }]
            })
        })
        .collect()
}

fn lost_update_sites(
    h: &History,
    calls: &[&MethodCall],
    order: &MethodOrder,
    overwritten: &HashMap<CallId, String>,
) -> Vec<Vec<Site>> {
    let index = h.position_index();
    reads(calls)
        .into_iter()
        .filter_map(|r| {
            // the write that responded last before the read began
            let last = calls
                .iter()
                .filter(|w| {
                    w.obj() == r.obj() && is_op(w, "write") && order.precedes(w.id(), r.id())
                })
                .max_by_key(|w| index[&EventKey::resp(w.id())])?;
            let lost = overwritten.get(&last.id())?;
            if !stale_values(r, calls, order).contains(lost) {
                return None;
            }
            Some(vec![Site {
                call: r.id(),
                result: lost.clone(),
            }])
        })
        .collect()
}

fn reorder_sites(calls: &[&MethodCall], order: &MethodOrder) -> Vec<Vec<Site>> {
    let enq_of: HashMap<&str, CallId> = calls
        .iter()
        .filter(|c| is_op(c, "enq"))
        .map(|c| (c.inv.payload[0].as_str(), c.id()))
        .collect();
    let deqs: Vec<&&MethodCall> = calls
        .iter()
        .filter(|c| is_op(c, "deq") && c.is_complete() && result(c) != Some(EMPTY))
        .collect();
    let mut used = HashSet::new();
    let mut sites = Vec::new();
    for d1 in &deqs {
        for d2 in &deqs {
            if d1.obj() != d2.obj() || used.contains(&d1.id()) || used.contains(&d2.id()) {
                continue;
            }
            let (Some(x1), Some(x2)) = (result(d1), result(d2)) else {
                continue;
            };
            let (Some(&e1), Some(&e2)) = (enq_of.get(x1), enq_of.get(x2)) else {
                continue;
            };
            if order.precedes(d1.id(), d2.id()) && order.precedes(e1, e2) {
                used.insert(d1.id());
                used.insert(d2.id());
                sites.push(vec![
                    Site {
                        call: d1.id(),
                        result: x2.to_owned(),
                    },
                    Site {
                        call: d2.id(),
                        result: x1.to_owned(),
                    },
                ]);
            }
        }
    }
    sites
}
