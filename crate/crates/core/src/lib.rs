//! Linearizability over well-ordered histories.
//!
//! A history is a finite sequence of invocation and response events. This
//! crate checks whether a history is linearizable with respect to executable
//! sequential specifications, produces certificates (a completed extension
//! plus a legal sequential witness) that can be verified independently, and
//! merges per-object certificates into a certificate for the whole history.
//!
//! ```
//! use linwell::{Event, History, SpecRegistry, checker::{linearize, CheckConfig}};
//!
//! let h = History::validate(vec![
//!     Event::inv(1, 1, "r", "write", ["1"]),
//!     Event::resp(1, 1, "r", "write", ["ok"]),
//!     Event::inv(2, 1, "r", "read", Vec::<String>::new()),
//!     Event::resp(2, 1, "r", "read", ["1"]),
//! ])
//! .unwrap();
//! let registry = SpecRegistry::from_json(r#"{"r":"register"}"#).unwrap();
//! let outcome = linearize(&h, &registry, &CheckConfig::default()).unwrap();
//! assert!(outcome.verdict.is_linearizable());
//! ```

pub mod certfile;
pub mod checker;
pub mod composer;
pub mod generate;
pub mod history;
pub mod order;
pub mod seqspec;
pub mod trace;

pub use checker::{Certificate, Mode};
pub use history::{
    CallId, Event, EventKey, EventKind, History, MethodCall, MethodOrder, ObjectId, ProcessId,
    ValidationError, WellFormedRule,
};
pub use seqspec::{SequentialSpec, SpecRegistry, SpecState};
