//! Batch runner: one JSON job document in, one result document (plus an
//! optional CSV artifact) out.
//!
//! Exit codes: `0` success, `1` internal numerical failure, `2` schema or I/O
//! error in the job, `3` mathematical precondition violated. Failures with a
//! known output path still write a result document carrying `status` and a
//! machine-readable `reason`.

pub mod commands;
pub mod job;
pub mod json;

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use job::JobDocument;

/// Revision tag of the result document layout.
pub const SCHEMA_REVISION: &str = "opkernel-result/1";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Core(opkernel::Error),
    /// Precondition detected by the runner itself, e.g. a failed order check.
    #[error("{message}")]
    Precondition { reason: &'static str, message: String },
}

impl CliError {
    /// Library errors raised while building inputs are schema errors unless
    /// they are mathematical preconditions.
    pub fn from_input(e: opkernel::Error) -> Self {
        if e.is_precondition() {
            CliError::Core(e)
        } else {
            CliError::Schema(e.to_string())
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) | CliError::Io(_) => 2,
            CliError::Precondition { .. } => 3,
            CliError::Core(e) if e.is_precondition() => 3,
            CliError::Core(opkernel::Error::Numerical(_)) => 1,
            // malformed shapes or parameters that slipped past the schema
            CliError::Core(_) => 2,
        }
    }

    pub fn status(&self) -> &'static str {
        match self.exit_code() {
            3 => "precondition_failed",
            2 => "schema_error",
            _ => "numerical_failure",
        }
    }

    pub fn reason(&self) -> &'static str {
        match self {
            CliError::Schema(_) => "schema",
            CliError::Io(_) => "io",
            CliError::Core(e) => e.reason(),
            CliError::Precondition { reason, .. } => reason,
        }
    }
}

impl From<opkernel::Error> for CliError {
    fn from(e: opkernel::Error) -> Self {
        CliError::Core(e)
    }
}

/// Overrides taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

/// Tolerances in effect for a run; written into every result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// PSD and order verdicts.
    pub psd: f64,
    pub rank: f64,
    pub range: f64,
    pub rn_spectrum: f64,
    pub trace: f64,
}

impl Tolerances {
    pub fn new(psd_override: Option<f64>) -> Self {
        Self {
            psd: psd_override.unwrap_or(opkernel::numerics::DEFAULT_PSD_TOL),
            rank: opkernel::numerics::DEFAULT_RANK_TOL,
            range: opkernel::ordering::RANGE_TOL,
            rn_spectrum: opkernel::ordering::RN_SPECTRUM_TOL,
            trace: opkernel::optim::TRACE_TOL,
        }
    }

    fn to_json(self) -> Value {
        json!({
            "psd": json::num(self.psd),
            "rank": json::num(self.rank),
            "range": json::num(self.range),
            "rn_spectrum": json::num(self.rn_spectrum),
            "trace": json::num(self.trace),
        })
    }
}

/// Output of a command before it is wrapped in the result envelope.
pub struct Outcome {
    pub result: Value,
    /// Set when the command completed its computation but the inputs violate
    /// the relation being tested (reported with exit code 3).
    pub violation: Option<CliError>,
    pub csv: Option<String>,
}

impl Outcome {
    pub fn ok(result: Value) -> Self {
        Self {
            result,
            violation: None,
            csv: None,
        }
    }

    pub fn with_csv(mut self, csv: String) -> Self {
        self.csv = Some(csv);
        self
    }
}

/// Reads a job document. A result document is accepted too: its embedded
/// `job` is replayed.
pub fn load_job(path: &Path) -> Result<JobDocument, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?;
    let value: Value = serde_json::from_slice(&bytes).map_err(|e| CliError::Schema(format!("invalid JSON: {e}")))?;
    let job_value = match value.get("schema_revision") {
        Some(_) => value
            .get("job")
            .cloned()
            .ok_or_else(|| CliError::Schema("result document has no job".into()))?,
        None => value,
    };
    serde_json::from_value(job_value).map_err(|e| CliError::Schema(e.to_string()))
}

/// The job as executed, after command-line overrides.
pub fn effective_job(mut job: JobDocument, overrides: &Overrides) -> JobDocument {
    if let Some(seed) = overrides.seed {
        job.seed = Some(seed);
    }
    if let Some(tol) = overrides.tol {
        job.tol = Some(tol);
    }
    if let Some(out) = &overrides.out {
        job.output_path = Some(out.display().to_string());
    }
    job
}

/// The job without its output location; this is what gets digested and
/// embedded in the result, so replays written elsewhere stay byte-identical.
pub fn replayable(job: &JobDocument) -> JobDocument {
    JobDocument {
        output_path: None,
        ..job.clone()
    }
}

pub fn input_digest(job: &JobDocument) -> String {
    hex::encode(Sha256::digest(json::to_canonical_bytes(&replayable(job))))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Builds the result document for a finished (or failed) run.
pub fn envelope(job: &JobDocument, tol: Tolerances, outcome: Result<&Outcome, &CliError>) -> Value {
    let mut doc = serde_json::Map::new();
    doc.insert("schema_revision".into(), json!(SCHEMA_REVISION));
    doc.insert("command".into(), json!(job.command.name()));
    doc.insert("input_digest".into(), json!(input_digest(job)));
    doc.insert("tolerances".into(), tol.to_json());
    let failure = match outcome {
        Ok(o) => o.violation.as_ref(),
        Err(e) => Some(e),
    };
    match failure {
        None => {
            doc.insert("status".into(), json!("ok"));
        }
        Some(e) => {
            doc.insert("status".into(), json!(e.status()));
            doc.insert("reason".into(), json!(e.reason()));
            doc.insert("message".into(), json!(e.to_string()));
        }
    }
    match outcome {
        Ok(o) => {
            doc.insert("result".into(), o.result.clone());
            if let (Some(path), Some(csv)) = (&job.csv_path, &o.csv) {
                doc.insert(
                    "csv".into(),
                    json!({ "path": path, "sha256": sha256_hex(csv.as_bytes()) }),
                );
            }
        }
        Err(_) => {
            doc.insert("result".into(), Value::Null);
        }
    }
    doc.insert("job".into(), serde_json::to_value(replayable(job)).expect("job serializes"));
    Value::Object(doc)
}

/// Runs a job and writes its artifacts. Returns the process exit code.
pub fn run_job(job: JobDocument, overrides: &Overrides) -> i32 {
    let job = effective_job(job, overrides);
    let tol = Tolerances::new(job.tol);
    let outcome = match validate_tol(job.tol) {
        Ok(()) => commands::run(&job, tol),
        Err(e) => Err(e),
    };
    let doc = envelope(&job, tol, outcome.as_ref());
    let mut code = match &outcome {
        Ok(o) => o.violation.as_ref().map_or(0, CliError::exit_code),
        Err(e) => e.exit_code(),
    };
    if let Err(e) = &outcome {
        eprintln!("error: {e}");
    } else if let Ok(Outcome {
        violation: Some(v), ..
    }) = &outcome
    {
        eprintln!("precondition failed: {v}");
    }
    match &job.output_path {
        Some(path) => {
            if let Err(e) = fs::write(path, json::to_canonical_bytes(&doc)) {
                eprintln!("error: cannot write {path}: {e}");
                code = code.max(1);
            }
        }
        None => {
            print!("{}", String::from_utf8(json::to_canonical_bytes(&doc)).expect("utf-8 JSON"));
        }
    }
    if let (Ok(o), Some(path)) = (&outcome, &job.csv_path) {
        if let Some(csv) = &o.csv {
            if let Err(e) = fs::write(path, csv) {
                eprintln!("error: cannot write {path}: {e}");
                code = code.max(1);
            }
        }
    }
    code
}

fn validate_tol(tol: Option<f64>) -> Result<(), CliError> {
    match tol {
        Some(t) if !(t >= 0.0 && t.is_finite()) => Err(CliError::Schema(format!("tolerance must be non-negative, got {t}"))),
        _ => Ok(()),
    }
}

/// Entry point shared by the binary and tests: loads the job, runs it, and
/// reports schema failures that occur before a job exists.
pub fn run_path(job_path: &Path, overrides: &Overrides) -> i32 {
    match load_job(job_path) {
        Ok(job) => run_job(job, overrides),
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(out) = &overrides.out {
                let doc = json!({
                    "schema_revision": SCHEMA_REVISION,
                    "status": e.status(),
                    "reason": e.reason(),
                    "message": e.to_string(),
                    "result": Value::Null,
                });
                if let Err(w) = fs::write(out, json::to_canonical_bytes(&doc)) {
                    eprintln!("error: cannot write {}: {w}", out.display());
                }
            }
            e.exit_code()
        }
    }
}
