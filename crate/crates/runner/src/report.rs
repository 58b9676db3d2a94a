use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use zsense_core::estimator::Parts;

use crate::experiment::{Payload, ResultSet, RowStatus};
use crate::io::write_atomic;

pub const REPORT_SCHEMA: &str = "zsense.report";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum ReportKind {
    PropagatorTable,
    MassCurve,
    NoiseScaling,
}

impl ReportKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PropagatorTable => "propagator_table",
            Self::MassCurve => "mass_curve",
            Self::NoiseScaling => "noise_scaling",
        }
    }

    fn columns(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Self::PropagatorTable => &[
                ("t", "time separation t₂ − t₁ (lattice units)"),
                ("x", "site separation x₂ − x₁"),
                ("re_est", "reconstructed Re Δ"),
                ("im_est", "reconstructed Im Δ (empty if not measured)"),
                ("re_oracle", "oracle Re Δ"),
                ("im_oracle", "oracle Im Δ"),
                ("abs_error", "|estimate − oracle| over the measured parts"),
                ("run", "sweep point index"),
            ],
            Self::MassCurve => &[
                ("lambda", "quartic coupling λ̃"),
                ("m_est", "mass fitted to the zero-momentum correlator"),
                ("ed_gap", "exact-diagonalization gap E₁ − E₀"),
                ("run", "sweep point index"),
            ],
            Self::NoiseScaling => &[
                ("n", "GHZ register size"),
                ("rate", "fitted parity decay rate"),
                ("reference", "n²/T₂ for global dephasing, n/T₂ for local"),
                ("run", "sweep point index"),
            ],
        }
    }
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

fn table(rs: &ResultSet, kind: ReportKind) -> Vec<Vec<Value>> {
    let mut out = Vec::new();
    for row in rs.rows.iter().filter(|r| r.status == RowStatus::Ok) {
        let run = json!(row.run);
        match (&row.payload, kind) {
            (
                Some(Payload::Propagator { points, estimate, oracle, abs_error, .. }),
                ReportKind::PropagatorTable,
            ) if points.len() == 2 => {
                let t = points[1].0 - points[0].0;
                let x = points[1].1 as i64 - points[0].1 as i64;
                let re = estimate.parts != Parts::ImagOnly;
                let im = estimate.parts != Parts::RealOnly;
                out.push(vec![
                    num(t),
                    json!(x),
                    opt(re.then_some(estimate.value.re)),
                    opt(im.then_some(estimate.value.im)),
                    opt(oracle.map(|o| o.re)),
                    opt(oracle.map(|o| o.im)),
                    opt(*abs_error),
                    run,
                ]);
            }
            (Some(Payload::Mass { lambda, fit, ed_gap, .. }), ReportKind::MassCurve) => {
                out.push(vec![num(*lambda), num(fit.mass), opt(*ed_gap), run]);
            }
            (Some(Payload::NoiseScaling { n, rate, reference, .. }), ReportKind::NoiseScaling) => {
                out.push(vec![json!(n), num(*rate), num(*reference), run]);
            }
            _ => {}
        }
    }
    out
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Paths of the files written by [`report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
}

/// Writes `<stem>_<kind>.csv` and a schema-versioned `<stem>_<kind>.json`
/// sidecar carrying the same rows plus provenance.
pub fn report(rs: &ResultSet, kind: ReportKind, dir: &Path, stem: &str) -> Result<ReportFiles> {
    let rows = table(rs, kind);
    if rows.is_empty() {
        bail!("result set has no rows for a {} report", kind.name());
    }
    let cols = kind.columns();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(cols.iter().map(|c| c.0))?;
    for r in &rows {
        w.write_record(r.iter().map(cell))?;
    }
    let csv_bytes = w.into_inner()?;

    let mut hashes: Vec<&str> = Vec::new();
    for r in &rs.rows {
        if !hashes.contains(&r.config_hash.as_str()) {
            hashes.push(&r.config_hash);
        }
    }
    let records: Vec<Value> = rows
        .iter()
        .map(|r| Value::Object(cols.iter().map(|c| c.0.to_string()).zip(r.iter().cloned()).collect::<Map<_, _>>()))
        .collect();
    let doc = json!({
        "schema": REPORT_SCHEMA,
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": kind,
        "code_version": rs.code_version,
        "source_schema_version": rs.schema_version,
        "config_hashes": hashes,
        "columns": cols.iter().map(|(n, d)| json!({"name": n, "description": d})).collect::<Vec<_>>(),
        "rows": records,
    });
    let mut json_bytes = serde_json::to_vec_pretty(&doc)?;
    json_bytes.push(b'\n');

    let files = ReportFiles {
        csv: dir.join(format!("{stem}_{}.csv", kind.name())),
        json: dir.join(format!("{stem}_{}.json", kind.name())),
    };
    write_atomic(&files.csv, &csv_bytes)?;
    write_atomic(&files.json, &json_bytes)?;
    Ok(files)
}
