//! Report assembly, rounding and file output.

use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};

use catalyst_core::catalysis::{CatalyticProtocol, Variant, EQ_TOL};
use catalyst_core::channel_catalysis::{MARGINAL_TOL, SDP_SLACK, TELESCOPING_TOL};
use catalyst_core::{Error, Result};

use crate::run::{Outcome, RunConfig};

/// Absolute tolerance used by `verify` on numeric fields.
pub const VERIFY_TOL: f64 = 1e-8;
pub const SIGNIFICANT_DIGITS: usize = 12;
pub const FORMAT: &str = "catalyst-report/1";

pub fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Block => "s1",
        Variant::Tradeoff => "s4",
        Variant::TradeoffAlternative => "s4_alt",
    }
}

fn round_f64(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

/// Rounds every float leaf so that reruns print identical bytes.
pub fn rounded(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .map(round_f64)
            .and_then(serde_json::Number::from_f64)
            .map(Value::Number)
            .unwrap_or(Value::Null),
        Value::Array(a) => Value::Array(a.into_iter().map(rounded).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, rounded(v))).collect()),
        other => other,
    }
}

pub fn report_value(config: &RunConfig, outcome: &Outcome) -> Value {
    let report = json!({
        "config": config,
        "tolerances": {
            "equality": EQ_TOL,
            "marginal": MARGINAL_TOL,
            "telescoping": TELESCOPING_TOL,
            "sdp_slack": SDP_SLACK,
            "solver": config.tol(),
            "verify": VERIFY_TOL,
        },
        "versions": {
            "format": FORMAT,
            "catalyst_core": catalyst_core::VERSION,
            "catalyst_cli": env!("CARGO_PKG_VERSION"),
        },
        "result": outcome.result,
        "pass": outcome.pass,
    });
    rounded(report)
}

/// Collects paths where `stored` and `fresh` disagree.
pub fn compare(stored: &Value, fresh: &Value, tol: f64, path: &str, out: &mut Vec<String>) {
    match (stored, fresh) {
        (Value::Number(a), Value::Number(b)) => {
            let (a, b) = (a.as_f64().unwrap_or(f64::NAN), b.as_f64().unwrap_or(f64::NAN));
            // NaN on either side counts as a mismatch
            if (a - b).abs().is_nan() || (a - b).abs() > tol {
                out.push(format!("{path}: stored {a}, recomputed {b}"));
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            if a.len() != b.len() {
                out.push(format!("{path}: length {} vs {}", a.len(), b.len()));
                return;
            }
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                compare(x, y, tol, &format!("{path}/{i}"), out);
            }
        }
        (Value::Object(a), Value::Object(b)) => {
            for k in a.keys().chain(b.keys().filter(|k| !a.contains_key(*k))) {
                match (a.get(k), b.get(k)) {
                    (Some(x), Some(y)) => compare(x, y, tol, &format!("{path}/{k}"), out),
                    _ => out.push(format!("{path}/{k}: present in only one report")),
                }
            }
        }
        (a, b) if a == b => {}
        (a, b) => out.push(format!("{path}: stored {a}, recomputed {b}")),
    }
}

fn protocol_value(cp: &CatalyticProtocol) -> Value {
    let steps: Vec<Value> = cp
        .steps
        .iter()
        .map(|s| serde_json::to_value(s.summary()).unwrap_or(Value::Null))
        .collect();
    let branches: Vec<Value> = cp
        .catalyst
        .branches()
        .iter()
        .map(|b| {
            json!({
                "label": b.label,
                "weight": b.weight,
                "file": format!("catalyst/branch_{}.json", b.label),
            })
        })
        .collect();
    rounded(json!({
        "variant": variant_name(cp.variant),
        "n_in": cp.n_in,
        "m_out": cp.m_out,
        "block_size": cp.block_size,
        "slots": cp.slots,
        "source_dim": cp.source_dim,
        "catalyst_quantum_dim": cp.catalyst_quantum_dim(),
        "catalyst_classical_dim": cp.catalyst_classical_dim(),
        "expected_error": cp.expected_eps,
        "expected_success_probability": cp.expected_p,
        "multishot_success_probability": cp.multishot_p,
        "failure_from_protocol": cp.failure_from_protocol,
        "catalyst": branches,
        "input_block": "input_block.json",
        "target": "target.json",
        "steps": steps,
    }))
}

fn pretty(v: &Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn summary_csv(outcome: &Outcome) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut row = outcome.summary.clone();
    row.success_probability = round_f64(row.success_probability);
    row.error = round_f64(row.error);
    row.restoration_error = round_f64(row.restoration_error);
    w.serialize(row).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Writes `report.json`, `protocol.json` with its state files and
/// `summary.csv` under `out`, or prints the report when `out` is `None`.
pub fn emit(config: &RunConfig, outcome: &Outcome, out: Option<&Path>) -> Result<()> {
    let report = report_value(config, outcome);
    let Some(dir) = out else {
        print!("{}", pretty(&report)?);
        return Ok(());
    };
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), pretty(&report)?)?;
    let csv = summary_csv(outcome)?;
    fs::write(dir.join("summary.csv"), &csv)?;
    print!("{}", csv.lines().nth(1).map(|l| format!("{l}\n")).unwrap_or_default());
    if let Some(cp) = &outcome.protocol {
        let mut proto = protocol_value(cp);
        if let Value::Object(o) = &mut proto {
            let mut head = Map::new();
            head.insert("config".into(), serde_json::to_value(config)?);
            o.append(&mut head);
        }
        fs::write(dir.join("protocol.json"), pretty(&proto)?)?;
        let cat = dir.join("catalyst");
        fs::create_dir_all(&cat)?;
        for b in cp.catalyst.branches() {
            fs::write(cat.join(format!("branch_{}.json", b.label)), b.body.to_json()? + "\n")?;
        }
        fs::write(dir.join("input_block.json"), cp.input_block.to_json()? + "\n")?;
        fs::write(dir.join("target.json"), cp.target.to_json()? + "\n")?;
    }
    Ok(())
}
