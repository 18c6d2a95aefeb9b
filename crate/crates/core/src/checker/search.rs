//! Exhaustive search for a linearization.
//!
//! For every subset of pending calls (smallest subsets first) the chosen
//! calls are completed with responses appended after all events of `H`; the
//! remaining pending calls are dropped. Appending at the end is the least
//! constraining placement: a synthesized response that precedes nothing adds
//! no precedence pairs to `complete(H')`.
//!
//! Within a completion the search is a depth-first walk that linearizes one
//! call at a time, choosing only calls all of whose predecessors are already
//! linearized, and memoizes failed (linearized set, spec states) pairs.

use std::collections::{BTreeMap, HashSet};

use itertools::Itertools;
use thiserror::Error;

use super::certificate::{Certificate, Mode};
use crate::history::{CallId, Event, History, ObjectId};
use crate::seqspec::{SequentialSpec, SpecError, SpecRegistry, SpecState};

pub const DEFAULT_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckConfig {
    pub mode: Mode,
    /// Maximum number of search states, summed over all completions.
    pub budget: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            mode: Mode::Strengthened,
            budget: DEFAULT_BUDGET,
        }
    }
}

impl CheckConfig {
    pub fn with_mode(mode: Mode) -> Self {
        CheckConfig {
            mode,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub states_explored: u64,
    pub completions_explored: u64,
}

impl std::ops::AddAssign for SearchStats {
    fn add_assign(&mut self, rhs: Self) {
        self.states_explored += rhs.states_explored;
        self.completions_explored += rhs.completions_explored;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refutation {
    /// Object whose subhistory failed, when known (compositional checks).
    pub object: Option<ObjectId>,
    pub completions_explored: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Linearizable(Box<Certificate>),
    NotLinearizable(Refutation),
}

impl Verdict {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, Verdict::Linearizable(_))
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            Verdict::Linearizable(c) => Some(c),
            Verdict::NotLinearizable(_) => None,
        }
    }

    pub fn into_certificate(self) -> Option<Certificate> {
        match self {
            Verdict::Linearizable(c) => Some(*c),
            Verdict::NotLinearizable(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub verdict: Verdict,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("search budget of {limit} states exhausted")]
    BudgetExceeded { limit: u64, stats: SearchStats },
}

/// Searches for a linearization of `history`.
pub fn linearize(
    history: &History,
    registry: &SpecRegistry,
    config: &CheckConfig,
) -> Result<Outcome, CheckError> {
    registry.check_covers(history)?;
    let problem = Problem::new(history, registry)?;
    problem.solve(config)
}

/// True iff a certificate exists. Uses the default budget.
pub fn is_linearizable(
    history: &History,
    registry: &SpecRegistry,
    mode: Mode,
) -> Result<bool, CheckError> {
    Ok(linearize(history, registry, &CheckConfig::with_mode(mode))?
        .verdict
        .is_linearizable())
}

struct CallInfo {
    inv: Event,
    obj: usize,
    recorded: Option<Vec<String>>,
    inv_pos: usize,
    resp_pos: Option<usize>,
}

struct Problem<'a> {
    history: &'a History,
    specs: Vec<&'a dyn SequentialSpec>,
    calls: Vec<CallInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CallSet(Vec<u64>);

impl CallSet {
    fn new(n: usize) -> Self {
        CallSet(vec![0; n.div_ceil(64)])
    }

    fn contains(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn is_superset(&self, other: &CallSet) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a & b == *b)
    }
}

struct Frame {
    done: CallSet,
    states: Vec<SpecState>,
    cursor: usize,
}

enum Search {
    Found(Vec<(usize, Vec<String>)>),
    Exhausted,
}

impl<'a> Problem<'a> {
    fn new(history: &'a History, registry: &'a SpecRegistry) -> Result<Self, SpecError> {
        let objects: Vec<ObjectId> = history.objects().into_iter().collect();
        let specs = objects
            .iter()
            .map(|o| registry.get(o).map(|s| s.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        let positions = history.position_index();
        let calls = history
            .calls()
            .into_iter()
            .map(|c| CallInfo {
                obj: objects.binary_search(c.obj()).expect("object listed"),
                inv_pos: positions[&c.inv.key()],
                resp_pos: c.resp.as_ref().map(|r| positions[&r.key()]),
                recorded: c.resp.map(|r| r.payload),
                inv: c.inv,
            })
            .collect();
        Ok(Problem {
            history,
            specs,
            calls,
        })
    }

    fn solve(&self, config: &CheckConfig) -> Result<Outcome, CheckError> {
        let complete: Vec<usize> = (0..self.calls.len())
            .filter(|&i| self.calls[i].resp_pos.is_some())
            .collect();
        let pending: Vec<usize> = (0..self.calls.len())
            .filter(|&i| self.calls[i].resp_pos.is_none())
            .collect();
        let mut stats = SearchStats::default();
        for size in 0..=pending.len() {
            for chosen in pending.iter().copied().combinations(size) {
                stats.completions_explored += 1;
                let mut active: Vec<usize> = complete.iter().chain(&chosen).copied().collect();
                active.sort_by_key(|&i| self.calls[i].inv_pos);
                match self.search(&active, config.budget, &mut stats)? {
                    Search::Found(path) => {
                        let cert = self.certificate(&active, &path, config.mode);
                        return Ok(Outcome {
                            verdict: Verdict::Linearizable(Box::new(cert)),
                            stats,
                        });
                    }
                    Search::Exhausted => {}
                }
            }
        }
        Ok(Outcome {
            verdict: Verdict::NotLinearizable(Refutation {
                object: None,
                completions_explored: stats.completions_explored,
            }),
            stats,
        })
    }

    /// Depth-first search over `active` calls (indices into `self.calls`,
    /// sorted by invocation position). Returns the order as positions in
    /// `active` with the result each call produced.
    fn search(
        &self,
        active: &[usize],
        budget: u64,
        stats: &mut SearchStats,
    ) -> Result<Search, CheckError> {
        let n = active.len();
        let preds: Vec<CallSet> = active
            .iter()
            .map(|&c| {
                let mut set = CallSet::new(n);
                for (j, &m) in active.iter().enumerate() {
                    if self.calls[m]
                        .resp_pos
                        .is_some_and(|r| r < self.calls[c].inv_pos)
                    {
                        set.insert(j);
                    }
                }
                set
            })
            .collect();

        let mut failed: HashSet<(CallSet, Vec<SpecState>)> = HashSet::new();
        let mut path: Vec<(usize, Vec<String>)> = Vec::with_capacity(n);
        let mut stack = vec![Frame {
            done: CallSet::new(n),
            states: self.specs.iter().map(|s| s.initial()).collect(),
            cursor: 0,
        }];

        while let Some(top) = stack.last_mut() {
            if path.len() == n {
                return Ok(Search::Found(path));
            }
            let mut advanced = None;
            while top.cursor < n {
                let j = top.cursor;
                top.cursor += 1;
                if top.done.contains(j) || !top.done.is_superset(&preds[j]) {
                    continue;
                }
                let call = &self.calls[active[j]];
                let spec = self.specs[call.obj];
                let (next, result) =
                    spec.apply(&top.states[call.obj], &call.inv.op, &call.inv.payload)?;
                if call.recorded.as_ref().is_some_and(|r| *r != result) {
                    continue;
                }
                let mut done = top.done.clone();
                done.insert(j);
                let mut states = top.states.clone();
                states[call.obj] = next;
                let key = (done, states);
                if failed.contains(&key) {
                    continue;
                }
                advanced = Some((j, result, key));
                break;
            }
            match advanced {
                Some((j, result, (done, states))) => {
                    stats.states_explored += 1;
                    if stats.states_explored > budget {
                        return Err(CheckError::BudgetExceeded {
                            limit: budget,
                            stats: *stats,
                        });
                    }
                    path.push((j, result));
                    stack.push(Frame {
                        done,
                        states,
                        cursor: 0,
                    });
                }
                None => {
                    let frame = stack.pop().expect("non-empty");
                    failed.insert((frame.done, frame.states));
                    path.pop();
                }
            }
        }
        Ok(Search::Exhausted)
    }

    fn certificate(
        &self,
        active: &[usize],
        path: &[(usize, Vec<String>)],
        mode: Mode,
    ) -> Certificate {
        let mut s_events = Vec::with_capacity(2 * path.len());
        let mut appended: BTreeMap<(ObjectId, CallId), Event> = BTreeMap::new();
        for (j, result) in path {
            let call = &self.calls[active[*j]];
            let resp = call.inv.response_with(result.clone());
            if call.recorded.is_none() {
                appended.insert((call.inv.obj.clone(), call.inv.call_id()), resp.clone());
            }
            s_events.push(call.inv.clone());
            s_events.push(resp);
        }
        let completed_pending = appended.keys().map(|(_, id)| *id).collect();
        let mut ext = self.history.events().to_vec();
        ext.extend(appended.into_values());
        Certificate {
            extension: History::from_events_unchecked(ext),
            linearization: History::from_events_unchecked(s_events),
            mode,
            completed_pending,
            objects: BTreeMap::new(),
        }
    }
}
