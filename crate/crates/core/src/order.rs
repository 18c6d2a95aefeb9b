//! Causality between events and its extension to a total order.
//!
//! The causality relation is generated by the per-process chains (which
//! already contain invocation → matching response and response → next
//! invocation), plus message edges from the invocation of a send call to the
//! response of the matching receive call, closed under transitivity.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use thiserror::Error;

use crate::history::{Event, EventKey, EventKind, History, ProcessId};

/// Carriers up to this size get a materialized transitive closure.
pub const CLOSURE_LIMIT: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrderError {
    #[error("causality is cyclic: {}", fmt_cycle(.cycle))]
    CyclicCausality { cycle: Vec<EventKey> },
    #[error("message endpoint {0} is not an event of any chain")]
    DanglingMessageEndpoint(EventKey),
    #[error("message {from} -> {to} must go from an invocation to a response")]
    InvalidMessageEndpoint { from: EventKey, to: EventKey },
    #[error("event {0} appears more than once across chains")]
    DuplicateEvent(EventKey),
    #[error("chain {chain} mixes events of several processes")]
    MixedProcessChain { chain: usize },
    #[error("witness is not a permutation of the carrier")]
    CarrierMismatch,
    #[error("causal pair {from} -> {to} is inverted by the event order")]
    OrderViolation { from: EventKey, to: EventKey },
}

fn fmt_cycle(cycle: &[EventKey]) -> String {
    cycle
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" -> ")
}

// Tie-break key: (process, position in chain, chain index).
type Rank = (ProcessId, usize, usize);

/// A strict partial order over a finite set of events.
#[derive(Debug, Clone)]
pub struct CausalityOrder {
    nodes: Vec<EventKey>,
    index: HashMap<EventKey, usize>,
    chains: Vec<(ProcessId, Vec<usize>)>,
    messages: Vec<(usize, usize)>,
    succ: Vec<Vec<usize>>,
    rank: Vec<Rank>,
    closure: Option<Vec<Vec<u64>>>,
}

/// A total order on the carrier of a [`CausalityOrder`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TotalOrderWitness {
    pub sequence: Vec<EventKey>,
}

impl TotalOrderWitness {
    /// The witness restricted to the events of one process.
    pub fn restrict_to(&self, p: ProcessId) -> Vec<EventKey> {
        self.sequence
            .iter()
            .filter(|k| k.call.proc == p)
            .copied()
            .collect()
    }

    /// Least element of `subset` under this order.
    pub fn least_of(&self, subset: &HashSet<EventKey>) -> Option<EventKey> {
        self.sequence.iter().find(|k| subset.contains(k)).copied()
    }
}

/// Builds the causality order from per-process chains and message edges.
pub fn build_causality(
    chains: &[Vec<Event>],
    messages: &[(EventKey, EventKey)],
) -> Result<CausalityOrder, OrderError> {
    let mut nodes = Vec::new();
    let mut index = HashMap::new();
    let mut rank = Vec::new();
    let mut chain_idx = Vec::with_capacity(chains.len());
    for (ci, chain) in chains.iter().enumerate() {
        let Some(first) = chain.first() else {
            continue;
        };
        let proc = first.proc;
        let mut members = Vec::with_capacity(chain.len());
        for (pos, e) in chain.iter().enumerate() {
            if e.proc != proc {
                return Err(OrderError::MixedProcessChain { chain: ci });
            }
            let key = e.key();
            if index.insert(key, nodes.len()).is_some() {
                return Err(OrderError::DuplicateEvent(key));
            }
            members.push(nodes.len());
            nodes.push(key);
            rank.push((proc, pos, ci));
        }
        chain_idx.push((proc, members));
    }

    let mut succ = vec![Vec::new(); nodes.len()];
    for (_, members) in &chain_idx {
        for w in members.windows(2) {
            succ[w[0]].push(w[1]);
        }
    }
    for (i, key) in nodes.iter().enumerate() {
        if key.kind == EventKind::Invocation {
            if let Some(&r) = index.get(&EventKey::resp(key.call)) {
                if !succ[i].contains(&r) {
                    succ[i].push(r);
                }
            }
        }
    }

    let mut msg_idx = Vec::with_capacity(messages.len());
    for &(from, to) in messages {
        let a = *index
            .get(&from)
            .ok_or(OrderError::DanglingMessageEndpoint(from))?;
        let b = *index
            .get(&to)
            .ok_or(OrderError::DanglingMessageEndpoint(to))?;
        if from.kind != EventKind::Invocation || to.kind != EventKind::Response {
            return Err(OrderError::InvalidMessageEndpoint { from, to });
        }
        if !succ[a].contains(&b) {
            succ[a].push(b);
        }
        msg_idx.push((a, b));
    }

    let mut order = CausalityOrder {
        nodes,
        index,
        chains: chain_idx,
        messages: msg_idx,
        succ,
        rank,
        closure: None,
    };
    let topo = order.topological()?;
    if order.nodes.len() <= CLOSURE_LIMIT {
        order.closure = Some(order.materialize_closure(&topo));
    }
    Ok(order)
}

impl CausalityOrder {
    /// Causality of a validated history: one chain per process.
    pub fn from_history(
        history: &History,
        messages: &[(EventKey, EventKey)],
    ) -> Result<Self, OrderError> {
        let chains: Vec<Vec<Event>> = history
            .processes()
            .into_iter()
            .map(|p| history.project_process(p).into_events())
            .collect();
        build_causality(&chains, messages)
    }

    pub fn carrier(&self) -> &[EventKey] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn chain(&self, p: ProcessId) -> Vec<EventKey> {
        self.chains
            .iter()
            .filter(|(q, _)| *q == p)
            .flat_map(|(_, m)| m.iter().map(|&i| self.nodes[i]))
            .collect()
    }

    pub fn processes(&self) -> Vec<ProcessId> {
        let mut ps: Vec<ProcessId> = self.chains.iter().map(|(p, _)| *p).collect();
        ps.sort();
        ps.dedup();
        ps
    }

    /// Generating pairs of the relation, before closure.
    pub fn base_edges(&self) -> Vec<(EventKey, EventKey)> {
        self.succ
            .iter()
            .enumerate()
            .flat_map(|(a, bs)| bs.iter().map(move |&b| (a, b)))
            .map(|(a, b)| (self.nodes[a], self.nodes[b]))
            .collect()
    }

    pub fn messages(&self) -> Vec<(EventKey, EventKey)> {
        self.messages
            .iter()
            .map(|&(a, b)| (self.nodes[a], self.nodes[b]))
            .collect()
    }

    pub fn has_materialized_closure(&self) -> bool {
        self.closure.is_some()
    }

    /// `a` causes `b` in the transitive closure.
    pub fn precedes(&self, a: EventKey, b: EventKey) -> bool {
        let (Some(&i), Some(&j)) = (self.index.get(&a), self.index.get(&b)) else {
            return false;
        };
        match &self.closure {
            Some(rows) => rows[i][j / 64] >> (j % 64) & 1 == 1,
            None => self.reachable(i, j),
        }
    }

    /// Number of pairs in the transitive closure.
    pub fn closure_len(&self) -> usize {
        match &self.closure {
            Some(rows) => rows
                .iter()
                .map(|r| r.iter().map(|w| w.count_ones() as usize).sum::<usize>())
                .sum(),
            None => (0..self.nodes.len()).map(|i| self.reach_set(i).len()).sum(),
        }
    }

    fn reach_set(&self, from: usize) -> HashSet<usize> {
        let mut seen = HashSet::new();
        let mut stack: Vec<usize> = self.succ[from].clone();
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                stack.extend(&self.succ[n]);
            }
        }
        seen
    }

    fn reachable(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = self.succ[from].clone();
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if !std::mem::replace(&mut seen[n], true) {
                stack.extend(&self.succ[n]);
            }
        }
        false
    }

    fn materialize_closure(&self, topo: &[usize]) -> Vec<Vec<u64>> {
        let n = self.nodes.len();
        let words = n.div_ceil(64);
        let mut rows = vec![vec![0u64; words]; n];
        for &v in topo.iter().rev() {
            let mut row = vec![0u64; words];
            for &s in &self.succ[v] {
                row[s / 64] |= 1 << (s % 64);
                for (w, x) in row.iter_mut().zip(&rows[s]) {
                    *w |= x;
                }
            }
            rows[v] = row;
        }
        rows
    }

    /// Source-removal ordering, always taking the ready event with the
    /// smallest (process, position) key.
    fn topological(&self) -> Result<Vec<usize>, OrderError> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for bs in &self.succ {
            for &b in bs {
                indeg[b] += 1;
            }
        }
        let mut ready: BinaryHeap<Reverse<(Rank, usize)>> = (0..n)
            .filter(|&i| indeg[i] == 0)
            .map(|i| Reverse((self.rank[i], i)))
            .collect();
        let mut out = Vec::with_capacity(n);
        while let Some(Reverse((_, v))) = ready.pop() {
            out.push(v);
            for &s in &self.succ[v] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.push(Reverse((self.rank[s], s)));
                }
            }
        }
        if out.len() < n {
            return Err(OrderError::CyclicCausality {
                cycle: self.find_cycle(&indeg),
            });
        }
        Ok(out)
    }

    // Every node left with positive in-degree after source removal has a
    // predecessor that is also left over, so walking predecessors must
    // revisit a node.
    fn find_cycle(&self, indeg: &[usize]) -> Vec<EventKey> {
        let n = self.nodes.len();
        let mut pred = vec![Vec::new(); n];
        for (a, bs) in self.succ.iter().enumerate() {
            for &b in bs {
                pred[b].push(a);
            }
        }
        let left = |i: usize| indeg[i] > 0;
        let Some(start) = (0..n).find(|&i| left(i)) else {
            return Vec::new();
        };
        let mut path = vec![start];
        let mut on_path: HashMap<usize, usize> = HashMap::from([(start, 0)]);
        let mut cur = start;
        loop {
            let p = *pred[cur]
                .iter()
                .find(|&&p| left(p))
                .expect("left-over node has a left-over predecessor");
            if let Some(&at) = on_path.get(&p) {
                // path[at..] walked backwards is the cycle
                let mut cycle: Vec<usize> = path[at..].to_vec();
                cycle.reverse();
                return cycle.into_iter().map(|i| self.nodes[i]).collect();
            }
            on_path.insert(p, path.len());
            path.push(p);
            cur = p;
        }
    }

    /// Extends the causality relation to a total order on the carrier.
    pub fn extend_to_well_order(&self) -> Result<TotalOrderWitness, OrderError> {
        Ok(TotalOrderWitness {
            sequence: self
                .topological()?
                .into_iter()
                .map(|i| self.nodes[i])
                .collect(),
        })
    }

    /// True iff `w` orders every causal pair correctly. Errors when `w` is
    /// not a permutation of the carrier.
    pub fn verify_extension(&self, w: &TotalOrderWitness) -> Result<bool, OrderError> {
        if w.sequence.len() != self.nodes.len() {
            return Err(OrderError::CarrierMismatch);
        }
        let mut pos = vec![usize::MAX; self.nodes.len()];
        for (at, key) in w.sequence.iter().enumerate() {
            let Some(&i) = self.index.get(key) else {
                return Err(OrderError::CarrierMismatch);
            };
            if pos[i] != usize::MAX {
                return Err(OrderError::CarrierMismatch);
            }
            pos[i] = at;
        }
        // A total order respecting the generating edges respects their
        // transitive closure.
        Ok(self
            .succ
            .iter()
            .enumerate()
            .all(|(a, bs)| bs.iter().all(|&b| pos[a] < pos[b])))
    }
}

/// Convenience wrapper for [`CausalityOrder::extend_to_well_order`].
pub fn extend_to_well_order(c: &CausalityOrder) -> Result<TotalOrderWitness, OrderError> {
    c.extend_to_well_order()
}

/// Convenience wrapper for [`CausalityOrder::verify_extension`].
pub fn verify_extension(c: &CausalityOrder, w: &TotalOrderWitness) -> Result<bool, OrderError> {
    c.verify_extension(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::CallId;

    fn call(p: u32, s: u32, op: &str) -> [Event; 2] {
        [
            Event::inv(p, s, "c", op, Vec::<String>::new()),
            Event::resp(p, s, "c", op, Vec::<String>::new()),
        ]
    }

    #[test]
    fn single_process_chain() {
        let chain = [call(1, 1, "a"), call(1, 2, "b")].concat();
        let c = build_causality(std::slice::from_ref(&chain), &[]).unwrap();
        assert_eq!(c.closure_len(), 6);
        let w = c.extend_to_well_order().unwrap();
        let keys: Vec<EventKey> = chain.iter().map(Event::key).collect();
        assert_eq!(w.sequence, keys);
    }

    #[test]
    fn independent_processes_have_no_cross_pairs() {
        let a = call(1, 1, "a").to_vec();
        let b = call(2, 1, "b").to_vec();
        let c = build_causality(&[a.clone(), b.clone()], &[]).unwrap();
        for x in &a {
            for y in &b {
                assert!(!c.precedes(x.key(), y.key()));
                assert!(!c.precedes(y.key(), x.key()));
            }
        }
        assert_eq!(c.closure_len(), 2);
    }

    #[test]
    fn message_edge_orders_across_processes() {
        let p1 = [call(1, 1, "send"), call(1, 2, "x")].concat();
        let p2 = [call(2, 1, "y"), call(2, 2, "receive"), call(2, 3, "z")].concat();
        let send = EventKey::inv(CallId::new(1, 1));
        let recv = EventKey::resp(CallId::new(2, 2));
        let c = build_causality(&[p1.clone(), p2.clone()], &[(send, recv)]).unwrap();

        // brute-force reachability over the generating edges
        let edges = c.base_edges();
        let reach = |a: EventKey, b: EventKey| {
            let mut frontier = vec![a];
            let mut seen = HashSet::new();
            while let Some(x) = frontier.pop() {
                for &(u, v) in &edges {
                    if u == x && seen.insert(v) {
                        frontier.push(v);
                    }
                }
            }
            seen.contains(&b)
        };
        for x in p1.iter().chain(&p2) {
            for y in p1.iter().chain(&p2) {
                assert_eq!(c.precedes(x.key(), y.key()), reach(x.key(), y.key()));
            }
        }
        // send inv precedes receive resp and everything after it on p2
        assert!(c.precedes(send, recv));
        assert!(c.precedes(send, EventKey::resp(CallId::new(2, 3))));
        assert!(!c.precedes(EventKey::resp(CallId::new(1, 1)), recv));
    }

    #[test]
    fn extension_contains_input_pairs() {
        let p1 = call(1, 1, "e").to_vec();
        let p2 = call(2, 1, "f").to_vec();
        let e1 = p1[0].key();
        let f2 = p2[1].key();
        let c = build_causality(&[p1.clone(), p2.clone()], &[(e1, f2)]).unwrap();
        let w = c.extend_to_well_order().unwrap();
        let at = |k: EventKey| w.sequence.iter().position(|x| *x == k).unwrap();
        assert!(at(p1[0].key()) < at(p1[1].key()));
        assert!(at(p2[0].key()) < at(p2[1].key()));
        assert!(at(e1) < at(f2));
        assert!(c.verify_extension(&w).unwrap());
    }

    #[test]
    fn empty_carrier() {
        let c = build_causality(&[], &[]).unwrap();
        assert!(c.extend_to_well_order().unwrap().sequence.is_empty());
    }

    #[test]
    fn verify_rejects_inversions_and_missing() {
        let chain = [call(1, 1, "a"), call(1, 2, "b")].concat();
        let c = build_causality(&[chain], &[]).unwrap();
        let mut w = c.extend_to_well_order().unwrap();
        w.sequence.swap(1, 2);
        assert!(!c.verify_extension(&w).unwrap());
        w.sequence.pop();
        assert_eq!(c.verify_extension(&w), Err(OrderError::CarrierMismatch));
    }

    #[test]
    fn cycle_is_reported() {
        let p1 = [call(1, 1, "a"), call(1, 2, "send")].concat();
        let p2 = [call(2, 1, "recv"), call(2, 2, "send")].concat();
        // p1#2 inv -> p2#1 resp -> p2#2 inv -> p1#1 resp -> p1#2 inv
        let m1 = (
            EventKey::inv(CallId::new(1, 2)),
            EventKey::resp(CallId::new(2, 1)),
        );
        let m2 = (
            EventKey::inv(CallId::new(2, 2)),
            EventKey::resp(CallId::new(1, 1)),
        );
        let err = build_causality(&[p1, p2], &[m1, m2]).unwrap_err();
        let OrderError::CyclicCausality { cycle } = err else {
            panic!("expected cycle");
        };
        assert!(cycle.len() >= 2);
    }

    #[test]
    fn dangling_and_bad_endpoints() {
        let p1 = call(1, 1, "a").to_vec();
        let ghost = EventKey::resp(CallId::new(7, 1));
        assert_eq!(
            build_causality(std::slice::from_ref(&p1), &[(p1[0].key(), ghost)]).unwrap_err(),
            OrderError::DanglingMessageEndpoint(ghost)
        );
        let p2 = call(2, 1, "b").to_vec();
        assert!(matches!(
            build_causality(&[p1.clone(), p2.clone()], &[(p1[1].key(), p2[1].key())]),
            Err(OrderError::InvalidMessageEndpoint { .. })
        ));
    }
}
