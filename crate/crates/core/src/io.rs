//! Result emission and re-ingestion.
//!
//! Run logs are CSV with the fixed header
//! `step,phase,rho,theta_error,loss,grad_norm,s_t,tau,return`; an absent
//! instability value is an empty field, never a NaN. Summaries are JSON with
//! sorted keys. All float formatting is shortest-round-trip, so re-emitting
//! parsed artifacts reproduces them byte for byte.

use crate::error::{MtrError, Result};
use crate::record::{RunAbort, RunRecord};
use crate::schedule::Phase;
use std::path::Path;

pub const RUN_CSV_HEADER: &str = "step,phase,rho,theta_error,loss,grad_norm,s_t,tau,return";

/// Shortest-round-trip float formatting. Positional notation for the common
/// magnitude range, exponent notation outside it; both parse back exactly.
pub fn fmt_f64(x: f64) -> String {
    assert!(x.is_finite(), "refusing to emit a non-finite value: {x}");
    if x == 0.0 {
        return "0".to_string();
    }
    let a = x.abs();
    if (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| MtrError::invalid(format!("bad float field {s:?}")))
}

/// Render one run record as CSV text.
pub fn run_csv_string(record: &RunRecord) -> String {
    let mut out = String::with_capacity(record.len() * 64 + 64);
    out.push_str(RUN_CSV_HEADER);
    out.push('\n');
    for i in 0..record.len() {
        out.push_str(&i.to_string());
        out.push(',');
        out.push_str(&record.phase[i].to_string());
        out.push(',');
        out.push_str(&record.rho[i].to_string());
        out.push(',');
        out.push_str(&fmt_f64(record.param_error[i]));
        out.push(',');
        out.push_str(&fmt_f64(record.loss[i]));
        out.push(',');
        out.push_str(&fmt_f64(record.grad_norm[i]));
        out.push(',');
        if let Some(s) = record.instability[i] {
            out.push_str(&fmt_f64(s));
        }
        out.push(',');
        out.push_str(&fmt_f64(record.tau[i]));
        out.push(',');
        out.push_str(&fmt_f64(record.reward[i]));
        out.push('\n');
    }
    out
}

pub fn emit_run_csv(record: &RunRecord, path: &Path) -> Result<()> {
    write_text(path, &run_csv_string(record))
}

/// Parse a run CSV back into a record. Final parameters and abort metadata
/// live in the manifest, not the CSV, and are patched in by the caller.
pub fn parse_run_csv(text: &str) -> Result<RunRecord> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| MtrError::invalid("empty run CSV"))?;
    if header != RUN_CSV_HEADER {
        return Err(MtrError::invalid(format!(
            "unexpected run CSV header {header:?}"
        )));
    }
    let mut record = RunRecord::default();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(MtrError::invalid(format!(
                "run CSV line {} has {} fields, expected 9",
                lineno + 2,
                fields.len()
            )));
        }
        let step: usize = fields[0]
            .parse()
            .map_err(|_| MtrError::invalid(format!("bad step index {:?}", fields[0])))?;
        if step != record.len() {
            return Err(MtrError::invalid(format!(
                "run CSV step {step} out of order at line {}",
                lineno + 2
            )));
        }
        let phase = Phase::parse(fields[1])?;
        let rho: u8 = fields[2]
            .parse()
            .map_err(|_| MtrError::invalid(format!("bad rho field {:?}", fields[2])))?;
        let instability = if fields[6].is_empty() {
            None
        } else {
            Some(parse_f64(fields[6])?)
        };
        record.push_row(
            parse_f64(fields[3])?,
            parse_f64(fields[4])?,
            parse_f64(fields[5])?,
            instability,
            parse_f64(fields[7])?,
            rho,
            phase,
            parse_f64(fields[8])?,
        )?;
    }
    Ok(record)
}

/// One line per run in `runs/manifest.csv`; carries what the run CSV schema
/// cannot: labels, sweep coordinates, final parameters, abort state.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub file: String,
    pub label: String,
    pub learner_index: Option<usize>,
    pub seed: u64,
    pub drift: Option<f64>,
    pub final_params: Vec<f64>,
    pub abort: Option<RunAbort>,
}

pub const MANIFEST_HEADER: &str =
    "file,label,learner_index,seed,drift,aborted_at,abort_reason,final_params";

pub fn manifest_string(metas: &[RunMeta]) -> String {
    let mut out = String::new();
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for m in metas {
        let aborted_at = m
            .abort
            .as_ref()
            .map(|a| a.step.to_string())
            .unwrap_or_default();
        // keep the manifest comma-splittable
        let reason = m
            .abort
            .as_ref()
            .map(|a| a.reason.replace([',', '\n'], ";"))
            .unwrap_or_default();
        let params = m
            .final_params
            .iter()
            .map(|&v| fmt_f64(v))
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            m.file,
            m.label,
            m.learner_index.map(|i| i.to_string()).unwrap_or_default(),
            m.seed,
            m.drift.map(fmt_f64).unwrap_or_default(),
            aborted_at,
            reason,
            params,
        ));
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<Vec<RunMeta>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| MtrError::invalid("empty manifest"))?;
    if header != MANIFEST_HEADER {
        return Err(MtrError::invalid(format!(
            "unexpected manifest header {header:?}"
        )));
    }
    let mut metas = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(MtrError::invalid(format!(
                "manifest line has {} fields, expected 8",
                fields.len()
            )));
        }
        let abort = if fields[5].is_empty() {
            None
        } else {
            Some(RunAbort {
                step: fields[5]
                    .parse()
                    .map_err(|_| MtrError::invalid("bad aborted_at field"))?,
                reason: fields[6].to_string(),
            })
        };
        let final_params = if fields[7].is_empty() {
            Vec::new()
        } else {
            fields[7]
                .split(';')
                .map(parse_f64)
                .collect::<Result<Vec<_>>>()?
        };
        metas.push(RunMeta {
            file: fields[0].to_string(),
            label: fields[1].to_string(),
            learner_index: if fields[2].is_empty() {
                None
            } else {
                Some(
                    fields[2]
                        .parse()
                        .map_err(|_| MtrError::invalid("bad learner_index field"))?,
                )
            },
            seed: fields[3]
                .parse()
                .map_err(|_| MtrError::invalid("bad seed field"))?,
            drift: if fields[4].is_empty() {
                None
            } else {
                Some(parse_f64(fields[4])?)
            },
            final_params,
            abort,
        });
    }
    Ok(metas)
}

/// Serialize a JSON value with sorted keys (the default map is ordered) and
/// a trailing newline.
pub fn summary_string(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("summary serializes");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| MtrError::io(parent.display().to_string(), e))?;
    }
    std::fs::write(path, text).map_err(|e| MtrError::io(path.display().to_string(), e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| MtrError::io(path.display().to_string(), e))
}

/// JSON number from a finite float; absent values must be mapped to
/// `Value::Null` by the caller rather than NaN.
pub fn json_num(x: f64) -> serde_json::Value {
    assert!(x.is_finite(), "refusing to emit non-finite JSON number {x}");
    serde_json::Value::from(x)
}
