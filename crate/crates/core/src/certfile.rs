//! JSON serialization of certificates.
//!
//! A certificate document holds only what is not already in the trace: the
//! responses the extension appends, the linearization as an ordered list of
//! call ids with their results, and the mode. Compositional certificates
//! also list the per-object certificates they were merged from.
//!
//! ```text
//! {"mode":"strengthened",
//!  "appended":[{"type":"resp","proc":1,"seq":1,"obj":"q","op":"enq","payload":["ok"]}],
//!  "linearization":[{"proc":1,"seq":1,"result":["ok"]},{"proc":2,"seq":1,"result":["x"]}]}
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::{Certificate, Mode};
use crate::history::{CallId, Event, EventKey, History, ObjectId};
use crate::trace::TraceRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallEntry {
    pub proc: u32,
    pub seq: u32,
    pub result: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectCertificateDoc {
    pub obj: String,
    pub appended: Vec<TraceRecord>,
    pub linearization: Vec<CallEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateDoc {
    pub mode: Mode,
    pub appended: Vec<TraceRecord>,
    pub linearization: Vec<CallEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objects: Vec<ObjectCertificateDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CertDocError {
    #[error("malformed certificate: {0}")]
    Json(String),
    #[error("appended record {0} is not a response")]
    NotAResponse(usize),
    #[error("linearization references call {0}, which is not in the extension")]
    UnknownCall(CallId),
}

fn appended_of(base: &History, ext: &History) -> Vec<TraceRecord> {
    let known = base.position_index();
    ext.events()
        .iter()
        .filter(|e| !known.contains_key(&e.key()))
        .map(TraceRecord::from_event)
        .collect()
}

fn entries_of(s: &History) -> Vec<CallEntry> {
    s.calls()
        .into_iter()
        .map(|c| CallEntry {
            proc: c.inv.proc.0,
            seq: c.inv.seq,
            result: c.resp.map(|r| r.payload).unwrap_or_default(),
        })
        .collect()
}

fn rebuild(
    base: &History,
    appended: &[TraceRecord],
    entries: &[CallEntry],
) -> Result<(History, History), CertDocError> {
    let mut ext = base.events().to_vec();
    for (i, r) in appended.iter().enumerate() {
        match r {
            TraceRecord::Resp { .. } => ext.push(r.event().expect("response record")),
            _ => return Err(CertDocError::NotAResponse(i)),
        }
    }
    let ext = History::from_events_unchecked(ext);
    let index = ext.position_index();
    let mut s = Vec::with_capacity(2 * entries.len());
    for entry in entries {
        let id = CallId::new(entry.proc, entry.seq);
        let inv: &Event = index
            .get(&EventKey::inv(id))
            .map(|&i| &ext.events()[i])
            .ok_or(CertDocError::UnknownCall(id))?;
        s.push(inv.clone());
        s.push(inv.response_with(entry.result.clone()));
    }
    Ok((ext, History::from_events_unchecked(s)))
}

impl CertificateDoc {
    pub fn from_certificate(history: &History, cert: &Certificate) -> Self {
        CertificateDoc {
            mode: cert.mode,
            appended: appended_of(history, &cert.extension),
            linearization: entries_of(&cert.linearization),
            objects: cert
                .objects
                .iter()
                .map(|(o, c)| ObjectCertificateDoc {
                    obj: o.0.clone(),
                    appended: appended_of(&history.project_object(o), &c.extension),
                    linearization: entries_of(&c.linearization),
                })
                .collect(),
        }
    }

    /// Rebuilds the certificate relative to `history`.
    pub fn to_certificate(&self, history: &History) -> Result<Certificate, CertDocError> {
        let (extension, linearization) = rebuild(history, &self.appended, &self.linearization)?;
        let mut objects = BTreeMap::new();
        for doc in &self.objects {
            let o = ObjectId::new(doc.obj.clone());
            let (ext_o, s_o) = rebuild(
                &history.project_object(&o),
                &doc.appended,
                &doc.linearization,
            )?;
            objects.insert(
                o,
                Certificate {
                    completed_pending: completed(&doc.appended),
                    extension: ext_o,
                    linearization: s_o,
                    mode: self.mode,
                    objects: BTreeMap::new(),
                },
            );
        }
        Ok(Certificate {
            extension,
            linearization,
            mode: self.mode,
            completed_pending: completed(&self.appended),
            objects,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CertDocError> {
        serde_json::from_str(text).map_err(|e| CertDocError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

fn completed(appended: &[TraceRecord]) -> Vec<CallId> {
    appended
        .iter()
        .filter_map(TraceRecord::event)
        .map(|e| e.call_id())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::{linearize, verify_certificate, CheckConfig};
    use crate::composer::check_compositional;
    use crate::seqspec::SpecRegistry;

    fn setup() -> (History, SpecRegistry) {
        let h = History::validate(vec![
            Event::inv(1, 1, "q", "enq", ["x"]),
            Event::inv(2, 1, "q", "deq", Vec::<String>::new()),
            Event::inv(3, 1, "r", "write", ["1"]),
            Event::resp(2, 1, "q", "deq", ["x"]),
            Event::resp(3, 1, "r", "write", ["ok"]),
        ])
        .unwrap();
        let reg = SpecRegistry::from_json(r#"{"q":"fifo-queue","r":"register"}"#).unwrap();
        (h, reg)
    }

    #[test]
    fn document_roundtrip() {
        let (h, reg) = setup();
        let cert = linearize(&h, &reg, &CheckConfig::default())
            .unwrap()
            .verdict
            .into_certificate()
            .unwrap();
        let doc = CertificateDoc::from_certificate(&h, &cert);
        assert_eq!(doc.appended.len(), 1);
        let back = CertificateDoc::parse(&doc.to_json())
            .unwrap()
            .to_certificate(&h)
            .unwrap();
        assert_eq!(back, cert);
    }

    #[test]
    fn compositional_document_keeps_objects() {
        let (h, reg) = setup();
        let cert = check_compositional(&h, &reg, &CheckConfig::default())
            .unwrap()
            .verdict
            .into_certificate()
            .unwrap();
        let doc = CertificateDoc::from_certificate(&h, &cert);
        assert_eq!(doc.objects.len(), 2);
        let back = doc.to_certificate(&h).unwrap();
        assert_eq!(back, cert);
        assert!(verify_certificate(&h, &back, &reg).is_valid());
    }

    #[test]
    fn unknown_call() {
        let (h, _) = setup();
        let doc = CertificateDoc {
            mode: Mode::Strengthened,
            appended: vec![],
            linearization: vec![CallEntry {
                proc: 9,
                seq: 1,
                result: vec![],
            }],
            objects: vec![],
        };
        assert_eq!(
            doc.to_certificate(&h),
            Err(CertDocError::UnknownCall(CallId::new(9, 1)))
        );
    }
}
