use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::history::{CallId, History, ObjectId};

/// Which precedence relation the order-preservation condition quantifies over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Precedence in `complete(H')`, the extension restricted to complete calls.
    #[default]
    Strengthened,
    /// Precedence in the original history `H`, restricted to calls of `S`.
    Classic,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Strengthened => "strengthened",
            Mode::Classic => "classic",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strengthened" => Ok(Mode::Strengthened),
            "classic" => Ok(Mode::Classic),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// Evidence that a history is linearizable: an extension `H'` of `H` by
/// response events only, and a legal sequential history `S`.
///
/// `objects` is filled in by the compositional pipeline with the per-object
/// certificates the global one was merged from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub extension: History,
    pub linearization: History,
    pub mode: Mode,
    pub completed_pending: Vec<CallId>,
    pub objects: BTreeMap<ObjectId, Certificate>,
}

impl Certificate {
    pub fn empty(mode: Mode) -> Self {
        Certificate {
            extension: History::empty(),
            linearization: History::empty(),
            mode,
            completed_pending: Vec::new(),
            objects: BTreeMap::new(),
        }
    }

    /// Call ids of `S` in linearization order.
    pub fn order(&self) -> Vec<CallId> {
        self.linearization
            .events()
            .iter()
            .filter(|e| e.is_invocation())
            .map(|e| e.call_id())
            .collect()
    }
}
