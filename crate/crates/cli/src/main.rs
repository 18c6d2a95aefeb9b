//! `linwell`: check, verify, generate and project JSON Lines traces.
//!
//! Exit codes: 0 linearizable / certificate valid, 1 not linearizable /
//! certificate rejected, 2 input error, 3 search budget exhausted.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use linwell::certfile::{CertDocError, CertificateDoc};
use linwell::checker::{
    linearize, verify_certificate, CheckConfig, CheckError, Condition, Outcome, Verdict,
    VerificationReport, Violation, DEFAULT_BUDGET,
};
use linwell::composer::{check_objects, merge_outcomes};
use linwell::generate::{generate, GenConfig, ViolationKind, ViolationSpec};
use linwell::trace::{Selector, Trace};
use linwell::{History, Mode, ObjectId, SpecRegistry};

const BUDGET_ENV: &str = "LIN_BUDGET";

#[derive(Parser)]
#[command(
    name = "linwell",
    version,
    about = "Linearizability checker for JSON Lines traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckMode {
    Direct,
    Compositional,
}

#[derive(Clone, Copy, ValueEnum)]
enum L3 {
    Strengthened,
    Classic,
}

impl From<L3> for Mode {
    fn from(l: L3) -> Mode {
        match l {
            L3::Strengthened => Mode::Strengthened,
            L3::Classic => Mode::Classic,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decide linearizability of a trace and print a JSON report.
    Check {
        trace: PathBuf,
        registry: PathBuf,
        #[arg(long, value_enum, default_value = "direct")]
        mode: CheckMode,
        /// Precedence relation the linearization must respect.
        #[arg(long, value_enum, default_value = "strengthened")]
        l3: L3,
        /// Maximum search states; the LIN_BUDGET variable takes precedence.
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        /// Write the certificate here when the trace is linearizable.
        #[arg(long)]
        cert: Option<PathBuf>,
    },
    /// Re-check a certificate against a trace.
    Verify {
        trace: PathBuf,
        cert: PathBuf,
        registry: PathBuf,
    },
    /// Generate a seeded random trace.
    Gen {
        /// JSON config file; flags given alongside override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        procs: Option<u32>,
        /// Comma-separated `id=spec` pairs, e.g. `q1=fifo-queue,r1=register`.
        #[arg(long)]
        objects: Option<String>,
        #[arg(long)]
        max_events: Option<usize>,
        #[arg(long)]
        pending_prob: Option<f64>,
        /// `kind` or `kind:rate`, kind one of stale-read, reorder-dequeue, lost-update.
        #[arg(long)]
        violation: Option<String>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the subhistory selected by `process=P` or `object=O`.
    Project {
        trace: PathBuf,
        selector: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check {
            trace,
            registry,
            mode,
            l3,
            budget,
            cert,
        } => cmd_check(&trace, &registry, mode, l3.into(), budget, cert.as_deref()),
        Command::Verify {
            trace,
            cert,
            registry,
        } => cmd_verify(&trace, &cert, &registry),
        Command::Gen {
            config,
            seed,
            procs,
            objects,
            max_events,
            pending_prob,
            violation,
            out,
        } => gen_config(
            config.as_deref(),
            seed,
            procs,
            objects,
            max_events,
            pending_prob,
            violation,
        )
        .and_then(|c| cmd_gen(&c, out.as_deref())),
        Command::Project {
            trace,
            selector,
            out,
        } => cmd_project(&trace, &selector, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_trace(path: &Path) -> Result<Trace> {
    Trace::parse(&read(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn load_registry(path: &Path) -> Result<SpecRegistry> {
    SpecRegistry::from_json(&read(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("report serializes")
    );
}

fn budget(flag: u64) -> Result<u64> {
    match std::env::var(BUDGET_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| anyhow!("{BUDGET_ENV}={v} is not a non-negative integer")),
        Err(std::env::VarError::NotPresent) => Ok(flag),
        Err(e) => bail!("{BUDGET_ENV}: {e}"),
    }
}

#[derive(Serialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum VerdictName {
    Linearizable,
    NotLinearizable,
    BudgetExceeded,
}

impl VerdictName {
    fn of(result: &Result<Outcome, CheckError>) -> Result<Self> {
        match result {
            Ok(o) if o.verdict.is_linearizable() => Ok(VerdictName::Linearizable),
            Ok(_) => Ok(VerdictName::NotLinearizable),
            Err(CheckError::BudgetExceeded { .. }) => Ok(VerdictName::BudgetExceeded),
            Err(e @ CheckError::Spec(_)) => Err(anyhow!("{e}")),
        }
    }

    fn exit_code(self) -> u8 {
        match self {
            VerdictName::Linearizable => 0,
            VerdictName::NotLinearizable => 1,
            VerdictName::BudgetExceeded => 3,
        }
    }
}

#[derive(Serialize)]
struct CheckReport {
    verdict: VerdictName,
    mode: &'static str,
    l3: Mode,
    events: usize,
    messages: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    objects: Option<BTreeMap<String, VerdictName>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    refuted_object: Option<String>,
    states_explored: u64,
    completions_explored: u64,
    budget: u64,
    elapsed_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<String>,
}

fn cmd_check(
    trace_path: &Path,
    registry_path: &Path,
    mode: CheckMode,
    l3: Mode,
    budget_flag: u64,
    cert_out: Option<&Path>,
) -> Result<u8> {
    let trace = load_trace(trace_path)?;
    let registry = load_registry(registry_path)?;
    let budget = budget(budget_flag)?;
    // Message edges must be consistent with the line order; they do not
    // influence the verdict.
    trace
        .causality()
        .map_err(|e| anyhow!("{}: {e}", trace_path.display()))?;
    let history = trace.history();
    registry.check_covers(history)?;
    let config = CheckConfig { mode: l3, budget };

    let start = Instant::now();
    let (result, objects) = match mode {
        CheckMode::Direct => (linearize(history, &registry, &config), None),
        CheckMode::Compositional => {
            let per_object = check_objects(history, &registry, &config)?;
            let names = per_object
                .iter()
                .map(|(o, r)| Ok((o.to_string(), VerdictName::of(r)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            (merge_outcomes(history, per_object, l3), Some(names))
        }
    };
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let verdict = VerdictName::of(&result)?;

    let stats = match &result {
        Ok(o) => o.stats,
        Err(CheckError::BudgetExceeded { stats, .. }) => *stats,
        Err(_) => unreachable!("spec errors are reported above"),
    };
    let refuted_object = match &result {
        Ok(Outcome {
            verdict: Verdict::NotLinearizable(r),
            ..
        }) => r.object.as_ref().map(|o| o.to_string()),
        _ => None,
    };
    let mut certificate = None;
    if let (
        Some(path),
        Ok(Outcome {
            verdict: Verdict::Linearizable(cert),
            ..
        }),
    ) = (cert_out, &result)
    {
        let doc = CertificateDoc::from_certificate(history, cert);
        fs::write(path, doc.to_json() + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
        certificate = Some(path.display().to_string());
    }

    print_json(&CheckReport {
        verdict,
        mode: match mode {
            CheckMode::Direct => "direct",
            CheckMode::Compositional => "compositional",
        },
        l3,
        events: history.len(),
        messages: trace.messages().len(),
        objects,
        refuted_object,
        states_explored: stats.states_explored,
        completions_explored: stats.completions_explored,
        budget,
        elapsed_ms,
        certificate,
    });
    Ok(verdict.exit_code())
}

#[derive(Serialize)]
struct VerifyReport {
    valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    condition: Option<Condition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    classic_within_strengthened: Option<bool>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    objects: BTreeMap<String, VerifyReport>,
}

impl VerifyReport {
    fn from_report(r: VerificationReport) -> Self {
        VerifyReport {
            valid: r.violation.is_none(),
            condition: r.condition(),
            detail: r.violation.map(|v| v.detail),
            classic_within_strengthened: r.classic_within_strengthened,
            objects: BTreeMap::new(),
        }
    }
}

/// Turns a certificate document into a report; documents that cannot be
/// mapped onto the trace are rejected under the condition they break.
fn verify_doc(
    history: &History,
    doc: &CertificateDoc,
    registry: &SpecRegistry,
) -> VerificationReport {
    match doc.to_certificate(history) {
        Ok(cert) => verify_certificate(history, &cert, registry),
        Err(CertDocError::UnknownCall(id)) => {
            // L1 is checked first, so judge the extension alone before
            // blaming the linearization.
            let without_s = CertificateDoc {
                linearization: Vec::new(),
                objects: Vec::new(),
                ..doc.clone()
            };
            let l1 = without_s
                .to_certificate(history)
                .map(|c| verify_certificate(history, &c, registry));
            match l1 {
                Ok(r) if r.condition() == Some(Condition::L1) => r,
                _ => rejected(
                    Condition::L2Equiv,
                    format!("linearization contains {id}, which is not a call of the extension"),
                ),
            }
        }
        Err(e @ CertDocError::NotAResponse(_)) => rejected(Condition::L1, e.to_string()),
        Err(e @ CertDocError::Json(_)) => rejected(Condition::L1, e.to_string()),
    }
}

fn rejected(condition: Condition, detail: String) -> VerificationReport {
    VerificationReport {
        violation: Some(Violation { condition, detail }),
        classic_within_strengthened: None,
    }
}

fn cmd_verify(trace_path: &Path, cert_path: &Path, registry_path: &Path) -> Result<u8> {
    let trace = load_trace(trace_path)?;
    let registry = load_registry(registry_path)?;
    let doc = CertificateDoc::parse(&read(cert_path)?)
        .map_err(|e| anyhow!("{}: {e}", cert_path.display()))?;
    let history = trace.history();
    registry.check_covers(history)?;

    let mut report = VerifyReport::from_report(verify_doc(history, &doc, &registry));
    for obj_doc in &doc.objects {
        let o = ObjectId::new(obj_doc.obj.clone());
        let sub = history.project_object(&o);
        let single = CertificateDoc {
            mode: doc.mode,
            appended: obj_doc.appended.clone(),
            linearization: obj_doc.linearization.clone(),
            objects: Vec::new(),
        };
        let r = VerifyReport::from_report(verify_doc(&sub, &single, &registry));
        report.valid &= r.valid;
        report.objects.insert(obj_doc.obj.clone(), r);
    }
    let valid = report.valid;
    if let Some(c) = report.condition {
        eprintln!("certificate rejected: {c}");
    } else if let Some((o, r)) = report.objects.iter().find(|(_, r)| !r.valid) {
        eprintln!(
            "certificate rejected: object {o}: {}",
            r.condition.map(|c| c.to_string()).unwrap_or_default()
        );
    }
    print_json(&report);
    Ok(if valid { 0 } else { 1 })
}

fn parse_objects(spec: &str) -> Result<BTreeMap<String, String>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (id, name) = pair
                .split_once('=')
                .ok_or_else(|| anyhow!("object `{pair}` is not id=spec"))?;
            Ok((id.trim().to_owned(), name.trim().to_owned()))
        })
        .collect()
}

fn parse_violation(spec: &str) -> Result<ViolationSpec> {
    let (kind, rate) = match spec.split_once(':') {
        Some((k, r)) => (
            k,
            r.parse().map_err(|_| anyhow!("bad violation rate `{r}`"))?,
        ),
        None => (spec, 1.0),
    };
    let kind: ViolationKind = kind.parse().map_err(|e: String| anyhow!(e))?;
    Ok(ViolationSpec { kind, rate })
}

fn gen_config(
    path: Option<&Path>,
    seed: Option<u64>,
    procs: Option<u32>,
    objects: Option<String>,
    max_events: Option<usize>,
    pending_prob: Option<f64>,
    violation: Option<String>,
) -> Result<GenConfig> {
    let mut config = match path {
        Some(p) => serde_json::from_str(&read(p)?).with_context(|| format!("{}", p.display()))?,
        None => GenConfig {
            seed: 0,
            procs: 2,
            objects: BTreeMap::from([("q".to_owned(), "fifo-queue".to_owned())]),
            max_events: 8,
            pending_prob: 0.0,
            violation: None,
        },
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(p) = procs {
        config.procs = p;
    }
    if let Some(o) = objects {
        config.objects = parse_objects(&o)?;
    }
    if let Some(m) = max_events {
        config.max_events = m;
    }
    if let Some(p) = pending_prob {
        config.pending_prob = p;
    }
    if let Some(v) = violation {
        config.violation = Some(parse_violation(&v)?);
    }
    Ok(config)
}

fn cmd_gen(config: &GenConfig, out: Option<&Path>) -> Result<u8> {
    let history = generate(config)?;
    write_out(out, &Trace::from_history(&history).to_jsonl())?;
    Ok(0)
}

fn cmd_project(trace_path: &Path, selector: &str, out: Option<&Path>) -> Result<u8> {
    let trace = load_trace(trace_path)?;
    let selector: Selector = selector.parse().map_err(|e: String| anyhow!(e))?;
    write_out(out, &trace.project(&selector).to_jsonl())?;
    Ok(0)
}
