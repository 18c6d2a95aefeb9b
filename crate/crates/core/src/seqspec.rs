//! Executable sequential specifications.
//!
//! A specification is a deterministic state machine. Applying an operation
//! to a state yields the next state and the unique result the object would
//! return; a recorded call is legal iff its recorded results equal that
//! result. Legality of a sequence is decided step by step, so the set of
//! legal sequences is prefix-closed by construction.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::history::{History, MethodCall, ObjectId};

/// Result returned by `deq`/`pop` on an empty container.
pub const EMPTY: &str = "empty";
/// Result of a `write`, `enq` or `push`.
pub const OK: &str = "ok";
/// Initial register value.
pub const REGISTER_INITIAL: &str = "0";

/// Opaque specification state. Built-in specs store their contents as strings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SpecState(pub Vec<String>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("spec `{spec}` has no operation `{op}`")]
    UnknownOperation { spec: String, op: String },
    #[error("operation `{op}` of spec `{spec}` takes {expected} argument(s), got {got}")]
    BadArity {
        spec: String,
        op: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown spec name `{0}`")]
    UnknownSpec(String),
    #[error("object `{0}` has no registered spec")]
    UnregisteredObject(ObjectId),
    #[error("history is not sequential")]
    NotSequential,
    #[error("history is not complete")]
    NotComplete,
    #[error("malformed registry: {0}")]
    Registry(String),
}

/// A deterministic sequential object.
pub trait SequentialSpec: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;

    fn initial(&self) -> SpecState;

    /// Runs `op(args)` on `state`, returning the next state and the result.
    fn apply(
        &self,
        state: &SpecState,
        op: &str,
        args: &[String],
    ) -> Result<(SpecState, Vec<String>), SpecError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Next(SpecState),
    Illegal { expected: Vec<String> },
}

/// Advances `state` by a complete call, checking its recorded results.
/// Pending calls are treated as having no recorded result and always step.
pub fn step(
    spec: &dyn SequentialSpec,
    state: &SpecState,
    call: &MethodCall,
) -> Result<Step, SpecError> {
    let (next, result) = spec.apply(state, &call.inv.op, &call.inv.payload)?;
    match &call.resp {
        Some(resp) if resp.payload != result => Ok(Step::Illegal { expected: result }),
        _ => Ok(Step::Next(next)),
    }
}

fn arity(spec: &str, op: &str, args: &[String], expected: usize) -> Result<(), SpecError> {
    if args.len() == expected {
        Ok(())
    } else {
        Err(SpecError::BadArity {
            spec: spec.to_owned(),
            op: op.to_owned(),
            expected,
            got: args.len(),
        })
    }
}

fn unknown(spec: &str, op: &str) -> SpecError {
    SpecError::UnknownOperation {
        spec: spec.to_owned(),
        op: op.to_owned(),
    }
}

/// Read/write register, initially `"0"`. `write(v)` → `ok`, `read()` → last value.
#[derive(Debug, Clone, Copy, Default)]
pub struct Register;

impl SequentialSpec for Register {
    fn name(&self) -> &str {
        "register"
    }

    fn initial(&self) -> SpecState {
        SpecState(vec![REGISTER_INITIAL.to_owned()])
    }

    fn apply(
        &self,
        state: &SpecState,
        op: &str,
        args: &[String],
    ) -> Result<(SpecState, Vec<String>), SpecError> {
        match op {
            "write" => {
                arity(self.name(), op, args, 1)?;
                Ok((SpecState(vec![args[0].clone()]), vec![OK.to_owned()]))
            }
            "read" => {
                arity(self.name(), op, args, 0)?;
                Ok((state.clone(), state.0.clone()))
            }
            _ => Err(unknown(self.name(), op)),
        }
    }
}

/// FIFO queue. `enq(v)` → `ok`; `deq()` → oldest element or `empty`.
#[derive(Debug, Clone, Copy, Default)]
pub struct FifoQueue;

impl SequentialSpec for FifoQueue {
    fn name(&self) -> &str {
        "fifo-queue"
    }

    fn initial(&self) -> SpecState {
        SpecState::default()
    }

    fn apply(
        &self,
        state: &SpecState,
        op: &str,
        args: &[String],
    ) -> Result<(SpecState, Vec<String>), SpecError> {
        match op {
            "enq" => {
                arity(self.name(), op, args, 1)?;
                let mut next = state.0.clone();
                next.push(args[0].clone());
                Ok((SpecState(next), vec![OK.to_owned()]))
            }
            "deq" => {
                arity(self.name(), op, args, 0)?;
                let mut items: VecDeque<String> = state.0.iter().cloned().collect();
                match items.pop_front() {
                    Some(front) => Ok((SpecState(items.into()), vec![front])),
                    None => Ok((state.clone(), vec![EMPTY.to_owned()])),
                }
            }
            _ => Err(unknown(self.name(), op)),
        }
    }
}

/// LIFO stack. `push(v)` → `ok`; `pop()` → newest element or `empty`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stack;

impl SequentialSpec for Stack {
    fn name(&self) -> &str {
        "stack"
    }

    fn initial(&self) -> SpecState {
        SpecState::default()
    }

    fn apply(
        &self,
        state: &SpecState,
        op: &str,
        args: &[String],
    ) -> Result<(SpecState, Vec<String>), SpecError> {
        match op {
            "push" => {
                arity(self.name(), op, args, 1)?;
                let mut next = state.0.clone();
                next.push(args[0].clone());
                Ok((SpecState(next), vec![OK.to_owned()]))
            }
            "pop" => {
                arity(self.name(), op, args, 0)?;
                let mut next = state.0.clone();
                match next.pop() {
                    Some(top) => Ok((SpecState(next), vec![top])),
                    None => Ok((state.clone(), vec![EMPTY.to_owned()])),
                }
            }
            _ => Err(unknown(self.name(), op)),
        }
    }
}

/// Looks up a built-in spec by name.
pub fn builtin(name: &str) -> Result<Arc<dyn SequentialSpec>, SpecError> {
    match name {
        "register" => Ok(Arc::new(Register)),
        "fifo-queue" => Ok(Arc::new(FifoQueue)),
        "stack" => Ok(Arc::new(Stack)),
        other => Err(SpecError::UnknownSpec(other.to_owned())),
    }
}

/// Maps object ids to their specifications.
#[derive(Debug, Clone, Default)]
pub struct SpecRegistry {
    specs: BTreeMap<ObjectId, Arc<dyn SequentialSpec>>,
}

impl SpecRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a spec under `obj`, replacing any previous one.
    pub fn register(&mut self, obj: impl Into<ObjectId>, spec: Arc<dyn SequentialSpec>) {
        self.specs.insert(obj.into(), spec);
    }

    pub fn with_builtin(mut self, obj: &str, name: &str) -> Result<Self, SpecError> {
        self.register(ObjectId::new(obj), builtin(name)?);
        Ok(self)
    }

    pub fn from_names<'a>(
        entries: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, SpecError> {
        entries
            .into_iter()
            .try_fold(Self::new(), |reg, (obj, name)| reg.with_builtin(obj, name))
    }

    /// Parses `{"q1":"fifo-queue","r1":"register"}`.
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let map: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| SpecError::Registry(e.to_string()))?;
        Self::from_names(map.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, &str> = self
            .specs
            .iter()
            .map(|(k, v)| (k.as_str(), v.name()))
            .collect();
        serde_json::to_string(&map).expect("string map serializes")
    }

    pub fn get(&self, obj: &ObjectId) -> Result<&Arc<dyn SequentialSpec>, SpecError> {
        self.specs
            .get(obj)
            .ok_or_else(|| SpecError::UnregisteredObject(obj.clone()))
    }

    pub fn objects(&self) -> impl Iterator<Item = &ObjectId> {
        self.specs.keys()
    }

    /// Errors on the first object of `history` without a spec.
    pub fn check_covers(&self, history: &History) -> Result<(), SpecError> {
        for o in history.objects() {
            self.get(&o)?;
        }
        Ok(())
    }
}

/// Legality of a sequential complete history: every object projection is
/// accepted by that object's spec.
pub fn is_legal(s: &History, registry: &SpecRegistry) -> Result<bool, SpecError> {
    if !s.is_sequential() {
        return Err(SpecError::NotSequential);
    }
    if !s.is_complete() {
        return Err(SpecError::NotComplete);
    }
    registry.check_covers(s)?;
    for (obj, sub) in s.by_object() {
        let spec = registry.get(&obj)?;
        let mut state = spec.initial();
        for call in sub.calls() {
            match step(spec.as_ref(), &state, &call)? {
                Step::Next(next) => state = next,
                Step::Illegal { .. } => return Ok(false),
            }
        }
    }
    Ok(true)
}
