//! Search-free re-validation of a certificate.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::certificate::{Certificate, Mode};
use crate::history::{CallId, History, MethodOrder};
use crate::seqspec::{is_legal, SpecRegistry};

/// Linearizability condition, in the order they are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Condition {
    /// `H ⊆ H'` and `H' − H` holds only responses.
    #[serde(rename = "L1")]
    L1,
    /// `complete(H')` is equivalent to `S`.
    #[serde(rename = "L2-equiv")]
    L2Equiv,
    /// `S` is sequential, complete and legal.
    #[serde(rename = "L2-legal")]
    L2Legal,
    /// `S` preserves call precedence.
    #[serde(rename = "L3")]
    L3,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::L1 => "L1",
            Condition::L2Equiv => "L2-equiv",
            Condition::L2Legal => "L2-legal",
            Condition::L3 => "L3",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub condition: Condition,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.condition, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    /// First violated condition, if any.
    pub violation: Option<Violation>,
    /// Whether the `≺_H` pairs among calls of `S` are contained in the
    /// `≺_complete(H')` pairs. `None` when L1 fails.
    pub classic_within_strengthened: Option<bool>,
}

impl VerificationReport {
    pub fn is_valid(&self) -> bool {
        self.violation.is_none()
    }

    pub fn condition(&self) -> Option<Condition> {
        self.violation.as_ref().map(|v| v.condition)
    }
}

fn fail(condition: Condition, detail: impl Into<String>) -> Violation {
    Violation {
        condition,
        detail: detail.into(),
    }
}

/// Re-checks L1, L2 and L3 for `cert` against `history`.
pub fn verify_certificate(
    history: &History,
    cert: &Certificate,
    registry: &SpecRegistry,
) -> VerificationReport {
    let ext = &cert.extension;
    let s = &cert.linearization;

    if let Err(v) = check_extension(history, ext) {
        return VerificationReport {
            violation: Some(v),
            classic_within_strengthened: None,
        };
    }
    let completed = ext.complete();
    let classic_within_strengthened = Some(classic_pairs_contained(history, &completed, s));
    let violation = check_equivalence(&completed, s)
        .and_then(|_| check_legal(s, registry))
        .and_then(|_| check_order(history, &completed, s, cert.mode))
        .err();
    VerificationReport {
        violation,
        classic_within_strengthened,
    }
}

fn check_extension(history: &History, ext: &History) -> Result<(), Violation> {
    if let Err(e) = History::validate(ext.events().to_vec()) {
        return Err(fail(
            Condition::L1,
            format!("extension is not a history: {e}"),
        ));
    }
    if !history.is_subhistory_of(ext) {
        return Err(fail(
            Condition::L1,
            "history is not a subhistory of the extension",
        ));
    }
    let diff = ext
        .difference(history)
        .map_err(|e| fail(Condition::L1, e.to_string()))?;
    if let Some(e) = diff.events().iter().find(|e| e.is_invocation()) {
        return Err(fail(
            Condition::L1,
            format!("extension adds invocation {e}"),
        ));
    }
    Ok(())
}

fn check_equivalence(completed: &History, s: &History) -> Result<(), Violation> {
    let procs = completed.processes().into_iter().chain(s.processes());
    for p in procs {
        if completed.project_process(p) != s.project_process(p) {
            return Err(fail(
                Condition::L2Equiv,
                format!("complete(extension)|{p} differs from linearization|{p}"),
            ));
        }
    }
    Ok(())
}

fn check_legal(s: &History, registry: &SpecRegistry) -> Result<(), Violation> {
    match is_legal(s, registry) {
        Ok(true) => Ok(()),
        Ok(false) => Err(fail(Condition::L2Legal, "linearization is not legal")),
        Err(e) => Err(fail(Condition::L2Legal, e.to_string())),
    }
}

fn positions(s: &History) -> HashMap<CallId, usize> {
    s.events()
        .iter()
        .filter(|e| e.is_invocation())
        .enumerate()
        .map(|(i, e)| (e.call_id(), i))
        .collect()
}

fn check_order(
    history: &History,
    completed: &History,
    s: &History,
    mode: Mode,
) -> Result<(), Violation> {
    let premise = match mode {
        Mode::Strengthened => MethodOrder::new(completed),
        Mode::Classic => MethodOrder::new(history),
    };
    let at = positions(s);
    for (m, mp) in premise.pairs() {
        // Classic mode quantifies only over calls that made it into S.
        let (Some(i), Some(j)) = (at.get(&m), at.get(&mp)) else {
            continue;
        };
        if i >= j {
            return Err(fail(
                Condition::L3,
                format!("{m} precedes {mp} ({mode}) but not in the linearization"),
            ));
        }
    }
    Ok(())
}

fn classic_pairs_contained(history: &History, completed: &History, s: &History) -> bool {
    let at = positions(s);
    let strengthened = MethodOrder::new(completed);
    MethodOrder::new(history)
        .pairs()
        .into_iter()
        .filter(|(m, mp)| at.contains_key(m) && at.contains_key(mp))
        .all(|(m, mp)| strengthened.precedes(m, mp))
}
