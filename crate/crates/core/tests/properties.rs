mod common;

use linwell::certfile::CertificateDoc;
use linwell::checker::{linearize, verify_certificate, CheckConfig, Mode};
use linwell::composer::{check_compositional, project_certificate};
use linwell::generate::{generate, GenConfig};
use linwell::order::build_causality;
use linwell::trace::Trace;
use linwell::{Event, History};
use proptest::prelude::*;

use common::*;

const OPS: [(&str, &str, &[&str], &[&str]); 4] = [
    ("r", "write", &["1", "2"], &["ok"]),
    ("r", "read", &[], &["0", "1", "2"]),
    ("q", "enq", &["x", "y"], &["ok"]),
    ("q", "deq", &[], &["x", "y", "empty"]),
];

/// Each step either invokes an operation (idle process) or responds with one
/// of the results the spec could give (busy process).
fn history(max_len: usize) -> impl Strategy<Value = History> {
    prop::collection::vec((0u32..3, 0usize..4, 0usize..3), 0..max_len).prop_map(|steps| {
        let mut events = Vec::new();
        let mut open: [Option<(u32, usize)>; 3] = [None; 3];
        let mut seq = [0u32; 3];
        for (p, op, val) in steps {
            let i = p as usize;
            match open[i].take() {
                None => {
                    seq[i] += 1;
                    let (obj, name, args, _) = OPS[op];
                    let args: Vec<&str> = args
                        .get(val % args.len().max(1))
                        .into_iter()
                        .copied()
                        .collect();
                    events.push(Event::inv(p + 1, seq[i], obj, name, args));
                    open[i] = Some((seq[i], op));
                }
                Some((s, op)) => {
                    let (obj, name, _, results) = OPS[op];
                    events.push(Event::resp(
                        p + 1,
                        s,
                        obj,
                        name,
                        [results[val % results.len()]],
                    ));
                }
            }
        }
        History::validate(events).unwrap()
    })
}

fn specs2() -> Specs {
    specs(&[("r", "register"), ("q", "fifo-queue")])
}

fn registry() -> linwell::SpecRegistry {
    linwell::SpecRegistry::from_json(r#"{"r":"register","q":"fifo-queue"}"#).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projections_commute(h in history(16)) {
        for o in h.objects() {
            for p in h.processes() {
                prop_assert_eq!(h.project_object(&o).project_process(p), h.project_process(p).project_object(&o));
            }
            prop_assert_eq!(h.project_object(&o).complete(), h.complete().project_object(&o));
        }
    }

    #[test]
    fn process_projections_are_sequential(h in history(16)) {
        for p in h.processes() {
            let sub = h.project_process(p);
            prop_assert!(sub.is_sequential());
            prop_assert!(sub.pending_calls().len() <= 1);
        }
    }

    #[test]
    fn prefix_difference_commutes(h in history(16), cut in 0usize..16) {
        let cut = cut.min(h.len());
        let prefix = History::validate(h.events()[..cut].to_vec()).unwrap();
        prop_assert!(prefix.is_prefix_of(&h));
        let diff = h.difference(&prefix).unwrap();
        prop_assert_eq!(diff.events(), &h.events()[cut..]);
        for o in h.objects() {
            let right = h.project_object(&o).difference(&prefix.project_object(&o)).unwrap();
            let left = diff.project_object(&o);
            prop_assert_eq!(left.events(), right.events());
        }
    }

    #[test]
    fn method_order_is_a_strict_partial_order(h in history(16)) {
        let order = h.method_order();
        let ids: Vec<_> = order.calls().iter().map(|c| c.id()).collect();
        for &a in &ids {
            prop_assert!(!order.precedes(a, a));
            for &b in &ids {
                for &c in &ids {
                    if order.precedes(a, b) && order.precedes(b, c) {
                        prop_assert!(order.precedes(a, c));
                    }
                }
            }
        }
    }

    #[test]
    fn linearize_matches_brute_force(h in history(10)) {
        let reg = registry();
        let out = linearize(&h, &reg, &CheckConfig::default()).unwrap();
        prop_assert_eq!(out.verdict.is_linearizable(), brute_linearizable(h.events(), &specs2()));
        if let Some(cert) = out.verdict.certificate() {
            prop_assert!(verify_certificate(&h, cert, &reg).is_valid());
        }
    }

    #[test]
    fn compositional_agrees_with_direct(h in history(12)) {
        let reg = registry();
        let direct = linearize(&h, &reg, &CheckConfig::default()).unwrap();
        let comp = check_compositional(&h, &reg, &CheckConfig::default()).unwrap();
        prop_assert_eq!(direct.verdict.is_linearizable(), comp.verdict.is_linearizable());
        if let Some(cert) = comp.verdict.certificate() {
            prop_assert!(verify_certificate(&h, cert, &reg).is_valid());
            for o in h.objects() {
                let sub = project_certificate(cert, &o).unwrap();
                prop_assert!(verify_certificate(&h.project_object(&o), &sub, &reg).is_valid());
            }
        }
    }

    #[test]
    fn classic_accepts_what_strengthened_accepts(h in history(12)) {
        let reg = registry();
        let strong = linearize(&h, &reg, &CheckConfig::with_mode(Mode::Strengthened)).unwrap();
        let classic = linearize(&h, &reg, &CheckConfig::with_mode(Mode::Classic)).unwrap();
        prop_assert_eq!(strong.verdict.is_linearizable(), classic.verdict.is_linearizable());
        if let Some(cert) = strong.verdict.into_certificate() {
            let as_classic = linwell::Certificate { mode: Mode::Classic, ..cert };
            prop_assert!(verify_certificate(&h, &as_classic, &reg).is_valid());
        }
    }

    #[test]
    fn trace_roundtrip_is_byte_identical(h in history(16)) {
        let text = Trace::from_history(&h).to_jsonl();
        let back = Trace::parse(&text).unwrap();
        prop_assert_eq!(back.history(), &h);
        prop_assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn certificate_document_roundtrip(h in history(12)) {
        let reg = registry();
        if let Some(cert) = linearize(&h, &reg, &CheckConfig::default()).unwrap().verdict.into_certificate() {
            let doc = CertificateDoc::from_certificate(&h, &cert);
            let back = CertificateDoc::parse(&doc.to_json()).unwrap().to_certificate(&h).unwrap();
            prop_assert_eq!(back, cert);
        }
    }

    #[test]
    fn history_order_extends_causality(h in history(24), picks in prop::collection::vec((0usize..24, 0usize..24), 0..8)) {
        let events = h.events();
        let messages: Vec<_> = picks
            .into_iter()
            .filter(|&(i, j)| i < j && j < events.len() && events[i].is_invocation() && events[j].is_response())
            .map(|(i, j)| (events[i].key(), events[j].key()))
            .collect();
        let chains: Vec<Vec<Event>> = h.processes().into_iter().map(|p| h.project_process(p).into_events()).collect();
        let c = build_causality(&chains, &messages).unwrap();
        let w = c.extend_to_well_order().unwrap();
        prop_assert!(c.verify_extension(&w).unwrap());
        // the history's own order is an extension as well
        let own = linwell::order::TotalOrderWitness { sequence: events.iter().map(Event::key).collect() };
        prop_assert!(c.verify_extension(&own).unwrap());
    }

    #[test]
    fn generated_traces_linearize(seed in any::<u64>(), procs in 1u32..4, pending in 0.0f64..1.0) {
        let config = GenConfig {
            seed,
            procs,
            objects: [("q", "fifo-queue"), ("r", "register"), ("s", "stack")]
                .iter()
                .map(|(o, s)| (o.to_string(), s.to_string()))
                .collect(),
            max_events: 14,
            pending_prob: pending,
            violation: None,
        };
        let h = generate(&config).unwrap();
        prop_assert!(h.len() <= 14);
        prop_assert_eq!(&generate(&config).unwrap(), &h);
        let reg = config.registry().unwrap();
        prop_assert!(linearize(&h, &reg, &CheckConfig::default()).unwrap().verdict.is_linearizable());
    }
}
