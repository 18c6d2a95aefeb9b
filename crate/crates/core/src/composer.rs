//! Compositional checking: per-object linearizations merged into a global one.
//!
//! The merge works like the merge step of merge sort. Each object's
//! linearization `S_o` is a stream of calls; at every step the head call
//! whose invocation comes first in the original history is appended to `S`.
//! The global extension `H'` is `H` followed by every object's synthesized
//! responses, grouped by ascending object id and ordered by call id inside
//! each group.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::checker::{
    linearize, verify_certificate, Certificate, CheckConfig, CheckError, Mode, Outcome, Refutation,
    SearchStats, Verdict,
};
use crate::history::{CallId, Event, History, ObjectId};
use crate::seqspec::SpecRegistry;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error("certificate for object `{object}` is invalid: {reason}")]
    InvalidObjectCertificate { object: ObjectId, reason: String },
    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),
}

/// Verified per-object certificates for a history.
#[derive(Debug, Clone)]
pub struct ObjectCertificateSet {
    original: History,
    certs: BTreeMap<ObjectId, Certificate>,
}

impl ObjectCertificateSet {
    /// Checks that every object of `original` has a certificate and that each
    /// one verifies against the object's subhistory.
    pub fn new(
        original: History,
        certs: BTreeMap<ObjectId, Certificate>,
        registry: &SpecRegistry,
    ) -> Result<Self, ComposeError> {
        for o in original.objects() {
            if !certs.contains_key(&o) {
                return Err(ComposeError::InvalidObjectCertificate {
                    object: o,
                    reason: "missing".into(),
                });
            }
        }
        for (o, cert) in &certs {
            let report = verify_certificate(&original.project_object(o), cert, registry);
            if let Some(v) = report.violation {
                return Err(ComposeError::InvalidObjectCertificate {
                    object: o.clone(),
                    reason: v.to_string(),
                });
            }
        }
        Ok(ObjectCertificateSet { original, certs })
    }

    // Certificates straight out of `linearize` on each H|o.
    fn from_search(original: History, certs: BTreeMap<ObjectId, Certificate>) -> Self {
        ObjectCertificateSet { original, certs }
    }

    pub fn original(&self) -> &History {
        &self.original
    }

    pub fn certificates(&self) -> &BTreeMap<ObjectId, Certificate> {
        &self.certs
    }
}

/// Responses a per-object extension adds, ordered by call id.
fn appended_responses(sub: &History, ext: &History) -> Vec<Event> {
    let mut out: Vec<Event> = ext
        .difference(sub)
        .map(History::into_events)
        .unwrap_or_default();
    out.sort_by_key(Event::call_id);
    out
}

/// Merges per-object certificates into a certificate for the whole history.
///
/// Per-object extensions whose synthesized responses are interleaved with
/// the object's events are first normalized by moving those responses to
/// the end. The normalized certificates are returned in `objects`, so that
/// `H'|o` equals each of them exactly.
pub fn compose(set: &ObjectCertificateSet) -> Result<Certificate, ComposeError> {
    let h = &set.original;
    let positions = h.position_index();

    let mut normalized: BTreeMap<ObjectId, Certificate> = BTreeMap::new();
    let mut streams: Vec<(ObjectId, Vec<(Event, Event)>)> = Vec::new();
    let mut ext_events = h.events().to_vec();
    let mut completed_pending: Vec<CallId> = Vec::new();

    for (o, cert) in &set.certs {
        let sub = h.project_object(o);
        let appended = appended_responses(&sub, &cert.extension);
        let mut ext_o = sub.events().to_vec();
        ext_o.extend(appended.iter().cloned());
        ext_events.extend(appended.iter().cloned());
        let ids: Vec<CallId> = appended.iter().map(Event::call_id).collect();
        completed_pending.extend(&ids);

        let s_o = cert.linearization.events();
        if s_o.len() % 2 != 0 || !cert.linearization.is_sequential() {
            return Err(ComposeError::InvalidObjectCertificate {
                object: o.clone(),
                reason: "linearization is not sequential and complete".into(),
            });
        }
        let calls: Vec<(Event, Event)> = s_o
            .chunks(2)
            .map(|pair| (pair[0].clone(), pair[1].clone()))
            .collect();
        streams.push((o.clone(), calls));
        normalized.insert(
            o.clone(),
            Certificate {
                extension: History::from_events_unchecked(ext_o),
                linearization: cert.linearization.clone(),
                mode: cert.mode,
                completed_pending: ids,
                objects: BTreeMap::new(),
            },
        );
    }

    let mut heads = vec![0usize; streams.len()];
    let total: usize = streams.iter().map(|(_, c)| c.len()).sum();
    let mut s_events = Vec::with_capacity(2 * total);
    for _ in 0..total {
        // (invocation position in H, stream index)
        let mut best: Option<(usize, usize)> = None;
        for (k, (o, calls)) in streams.iter().enumerate() {
            let Some((inv, _)) = calls.get(heads[k]) else {
                continue;
            };
            let Some(&pos) = positions.get(&inv.key()) else {
                return Err(ComposeError::InvalidObjectCertificate {
                    object: o.clone(),
                    reason: format!("{inv} is not an invocation of the history"),
                });
            };
            match best {
                Some((b, _)) if b == pos => {
                    return Err(ComposeError::InvalidObjectCertificate {
                        object: o.clone(),
                        reason: format!("invocation {inv} is claimed by two objects"),
                    })
                }
                Some((b, _)) if b < pos => {}
                _ => best = Some((pos, k)),
            }
        }
        let (_, k) = best.expect("an unconsumed call remains");
        let (inv, resp) = &streams[k].1[heads[k]];
        s_events.push(inv.clone());
        s_events.push(resp.clone());
        heads[k] += 1;
    }

    let mode = if set.certs.values().all(|c| c.mode == Mode::Classic) && !set.certs.is_empty() {
        Mode::Classic
    } else {
        Mode::Strengthened
    };
    Ok(Certificate {
        extension: History::from_events_unchecked(ext_events),
        linearization: History::from_events_unchecked(s_events),
        mode,
        completed_pending,
        objects: normalized,
    })
}

/// Per-object search results, in ascending object order.
pub type ObjectOutcomes = Vec<(ObjectId, Result<Outcome, CheckError>)>;

/// Runs the direct search on every `H|o`, in parallel across objects.
pub fn check_objects(
    history: &History,
    registry: &SpecRegistry,
    config: &CheckConfig,
) -> Result<ObjectOutcomes, CheckError> {
    registry.check_covers(history)?;
    Ok(history
        .by_object()
        .into_par_iter()
        .map(|(o, sub)| {
            let r = linearize(&sub, registry, config);
            (o, r)
        })
        .collect())
}

/// Combines per-object results into a verdict for `history`.
pub fn merge_outcomes(
    history: &History,
    results: ObjectOutcomes,
    mode: Mode,
) -> Result<Outcome, CheckError> {
    let mut stats = SearchStats::default();
    let mut certs = BTreeMap::new();
    let mut first_error = None;
    for (o, result) in results {
        match result {
            Ok(outcome) => {
                stats += outcome.stats;
                match outcome.verdict {
                    Verdict::Linearizable(cert) => {
                        certs.insert(o, *cert);
                    }
                    Verdict::NotLinearizable(r) => {
                        return Ok(Outcome {
                            verdict: Verdict::NotLinearizable(Refutation {
                                object: Some(o),
                                completions_explored: r.completions_explored,
                            }),
                            stats,
                        });
                    }
                }
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    // A refutation on any object settles the verdict; otherwise an error
    // on any object leaves it open.
    if let Some(e) = first_error {
        return Err(e);
    }
    let set = ObjectCertificateSet::from_search(history.clone(), certs);
    let mut cert = compose(&set).expect("search certificates compose");
    cert.mode = mode;
    Ok(Outcome {
        verdict: Verdict::Linearizable(Box::new(cert)),
        stats,
    })
}

/// Checks each object subhistory independently and merges the results.
pub fn check_compositional(
    history: &History,
    registry: &SpecRegistry,
    config: &CheckConfig,
) -> Result<Outcome, CheckError> {
    let results = check_objects(history, registry, config)?;
    merge_outcomes(history, results, config.mode)
}

/// Restricts a certificate to object `o`: `H'|o` and `S|o`.
pub fn project_certificate(cert: &Certificate, o: &ObjectId) -> Result<Certificate, ComposeError> {
    if !cert.linearization.is_sequential() || !cert.linearization.is_complete() {
        return Err(ComposeError::InvalidCertificate(
            "linearization is not sequential and complete".into(),
        ));
    }
    let extension = cert.extension.project_object(o);
    let completed_pending = cert
        .completed_pending
        .iter()
        .filter(|id| {
            extension
                .events()
                .iter()
                .any(|e| e.is_response() && e.call_id() == **id)
        })
        .copied()
        .collect();
    Ok(Certificate {
        extension,
        linearization: cert.linearization.project_object(o),
        mode: cert.mode,
        completed_pending,
        objects: BTreeMap::new(),
    })
}
