//! Direct linearizability checking and certificate verification.

mod certificate;
mod search;
mod verify;

pub use certificate::{Certificate, Mode};
pub use search::{
    is_linearizable, linearize, CheckConfig, CheckError, Outcome, Refutation, SearchStats, Verdict,
    DEFAULT_BUDGET,
};
pub use verify::{verify_certificate, Condition, VerificationReport, Violation};
