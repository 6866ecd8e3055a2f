//! Run configurations and their execution.

use std::collections::BTreeMap;
use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use catalyst_core::catalysis::{
    convert_to_catalytic_with, simulate_reuse, tradeoff_convert_with, verify, CatalyticProtocol,
    FailureModel,
};
use catalyst_core::channel_catalysis::{catalytic_channel_convert, ChannelCode};
use catalyst_core::channels::{amplitude_damping, dephasing, depolarizing};
use catalyst_core::protocols::registry::{build_protocol, lookup, resolve_params};
use catalyst_core::sampling::random_qubit_channel;
use catalyst_core::{Error, QuantumOp, Result, State, SystemLayout};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::output;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum VariantArg {
    /// Block catalyst, blocks of ⌈n/m⌉ copies.
    S1,
    /// Trade-off catalyst, blocks of k copies.
    S4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FailureArg {
    /// The protocol's own failure branch when it has one.
    Auto,
    /// Trace and replace by the maximally mixed state.
    Junk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    Convert {
        protocol: String,
        params: BTreeMap<String, String>,
        variant: VariantArg,
        k: Option<usize>,
        alt_catalyst: bool,
        failure: FailureArg,
        tol: f64,
    },
    Reuse {
        protocol: String,
        params: BTreeMap<String, String>,
        rounds: usize,
        tol: f64,
    },
    Channel {
        code: String,
        n: usize,
        params: BTreeMap<String, String>,
        tol: f64,
    },
}

const CHANNEL_PARAMS: &[(&str, &str)] = &[
    ("channel", "depolarizing"),
    ("strength", "0.2"),
    ("q", "0.3"),
    ("mi", "auto"),
    ("seed", "7"),
];

fn protocol_params(
    protocol: &str,
    mut params: BTreeMap<String, String>,
    seed: Option<u64>,
) -> Result<BTreeMap<String, String>> {
    let info = lookup(protocol)?;
    if let Some(s) = seed {
        if info.params.iter().any(|(k, _)| *k == "seed") {
            params.entry("seed".into()).or_insert_with(|| s.to_string());
        }
    }
    resolve_params(protocol, &params)
}

impl RunConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn convert(
        protocol: String,
        params: BTreeMap<String, String>,
        variant: VariantArg,
        k: Option<usize>,
        alt_catalyst: bool,
        failure: FailureArg,
        seed: Option<u64>,
        tol: f64,
    ) -> Result<Self> {
        if variant == VariantArg::S1 && (k.is_some() || alt_catalyst) {
            return Err(Error::InvalidArgument(
                "--k and --alt-catalyst apply to the s4 variant only".into(),
            ));
        }
        let params = protocol_params(&protocol, params, seed)?;
        Ok(RunConfig::Convert {
            protocol,
            params,
            variant,
            k: if variant == VariantArg::S4 { Some(k.unwrap_or(1)) } else { None },
            alt_catalyst,
            failure,
            tol,
        })
    }

    pub fn reuse(
        protocol: String,
        params: BTreeMap<String, String>,
        rounds: usize,
        seed: Option<u64>,
        tol: f64,
    ) -> Result<Self> {
        let params = protocol_params(&protocol, params, seed)?;
        Ok(RunConfig::Reuse {
            protocol,
            params,
            rounds,
            tol,
        })
    }

    pub fn channel(
        code: String,
        n: usize,
        mut params: BTreeMap<String, String>,
        seed: Option<u64>,
        tol: f64,
    ) -> Result<Self> {
        if !matches!(code.as_str(), "trivial" | "measure_prepare") {
            return Err(Error::InvalidArgument(format!(
                "unknown code `{code}` (expected trivial or measure_prepare)"
            )));
        }
        for key in params.keys() {
            if !CHANNEL_PARAMS.iter().any(|(k, _)| k == key) {
                return Err(Error::InvalidArgument(format!("channel has no parameter `{key}`")));
            }
        }
        if let Some(s) = seed {
            params.entry("seed".into()).or_insert_with(|| s.to_string());
        }
        for (k, v) in CHANNEL_PARAMS {
            params.entry(k.to_string()).or_insert_with(|| v.to_string());
        }
        if params["mi"] == "auto" {
            let on = if n <= 2 { "true" } else { "false" };
            params.insert("mi".into(), on.into());
        }
        Ok(RunConfig::Channel { code, n, params, tol })
    }

    pub fn command(&self) -> &'static str {
        match self {
            RunConfig::Convert { .. } => "convert",
            RunConfig::Reuse { .. } => "reuse",
            RunConfig::Channel { .. } => "channel",
        }
    }

    pub fn tol(&self) -> f64 {
        match self {
            RunConfig::Convert { tol, .. } | RunConfig::Reuse { tol, .. } | RunConfig::Channel { tol, .. } => *tol,
        }
    }
}

/// Flat record written to the CSV summary.
#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub command: String,
    pub subject: String,
    pub variant: String,
    pub n: usize,
    pub m: usize,
    pub block_size: usize,
    pub slots: usize,
    pub success_probability: f64,
    pub error: f64,
    pub restoration_error: f64,
    pub pass: bool,
}

pub struct Outcome {
    pub result: Value,
    pub pass: bool,
    pub failed: Vec<String>,
    pub summary: SummaryRow,
    pub protocol: Option<CatalyticProtocol>,
}

fn get<T: std::str::FromStr>(params: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = params
        .get(key)
        .ok_or_else(|| Error::InvalidArgument(format!("missing parameter `{key}`")))?;
    raw.parse()
        .map_err(|_| Error::InvalidArgument(format!("cannot parse `{key}={raw}`")))
}

fn compile(
    protocol: &str,
    params: &BTreeMap<String, String>,
    variant: VariantArg,
    k: Option<usize>,
    alt: bool,
    failure: FailureArg,
) -> Result<CatalyticProtocol> {
    let p = build_protocol(protocol, params)?;
    let pi = State::maximally_mixed(SystemLayout::single("S", p.source_dim()))?;
    let model = match failure {
        FailureArg::Auto => FailureModel::Auto,
        FailureArg::Junk => FailureModel::Junk(None),
    };
    match variant {
        VariantArg::S1 => convert_to_catalytic_with(&p, &pi, &model),
        VariantArg::S4 => tradeoff_convert_with(&p, k.unwrap_or(1), alt, &pi, &model),
    }
}

fn demo_channel(params: &BTreeMap<String, String>) -> Result<QuantumOp> {
    let a = SystemLayout::single("A", 2);
    let strength: f64 = get(params, "strength")?;
    match params["channel"].as_str() {
        "depolarizing" => depolarizing(a, strength),
        "dephasing" => dephasing(a, strength),
        "amplitude_damping" => amplitude_damping(a, strength),
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(get(params, "seed")?);
            random_qubit_channel(&mut rng)
        }
        other => Err(Error::InvalidArgument(format!("unknown channel `{other}`"))),
    }
}

pub fn execute(config: &RunConfig) -> Result<Outcome> {
    match config {
        RunConfig::Convert {
            protocol,
            params,
            variant,
            k,
            alt_catalyst,
            failure,
            ..
        } => {
            let cp = compile(protocol, params, *variant, *k, *alt_catalyst, *failure)?;
            let report = verify(&cp)?;
            let failed = report.failed_checks().iter().map(|c| c.name.clone()).collect();
            let summary = SummaryRow {
                command: config.command().into(),
                subject: protocol.clone(),
                variant: output::variant_name(report.variant).into(),
                n: report.n_in,
                m: report.m_out,
                block_size: report.block_size,
                slots: report.slots,
                success_probability: report.success_probability,
                error: report.output_error,
                restoration_error: report.catalyst_restoration_error,
                pass: report.pass,
            };
            Ok(Outcome {
                pass: report.pass,
                result: serde_json::to_value(&report)?,
                failed,
                summary,
                protocol: Some(cp),
            })
        }
        RunConfig::Reuse {
            protocol,
            params,
            rounds,
            ..
        } => {
            let cp = compile(protocol, params, VariantArg::S1, None, false, FailureArg::Auto)?;
            let report = simulate_reuse(&cp, *rounds)?;
            let failed = report.failed_checks().iter().map(|c| c.name.clone()).collect();
            let restoration = report
                .rounds
                .iter()
                .map(|r| r.catalyst_restoration_error)
                .fold(0.0, f64::max);
            let error = report
                .rounds
                .iter()
                .flat_map(|r| r.output_errors.iter().copied())
                .fold(0.0, f64::max);
            let summary = SummaryRow {
                command: config.command().into(),
                subject: protocol.clone(),
                variant: output::variant_name(report.variant).into(),
                n: report.n_in,
                m: report.m_out,
                block_size: report.block_size,
                slots: report.slots,
                success_probability: report.success_probability,
                error,
                restoration_error: restoration,
                pass: report.pass,
            };
            Ok(Outcome {
                pass: report.pass,
                result: serde_json::to_value(&report)?,
                failed,
                summary,
                protocol: Some(cp),
            })
        }
        RunConfig::Channel { code, n, params, tol } => {
            let ch = demo_channel(params)?;
            let q: f64 = get(params, "q")?;
            let mi: bool = get(params, "mi")?;
            let c = match code.as_str() {
                "trivial" => ChannelCode::trivial(2, 2, *n)?,
                _ => ChannelCode::measure_and_prepare(2, 2, *n, q)?,
            };
            let report = catalytic_channel_convert(&ch, &c, &ch, *n, *tol, mi)?;
            let failed = report
                .checks
                .iter()
                .filter(|c| !c.pass)
                .map(|c| c.name.clone())
                .collect();
            let summary = SummaryRow {
                command: config.command().into(),
                subject: code.clone(),
                variant: "channel".into(),
                n: *n,
                m: *n,
                block_size: 1,
                slots: *n,
                success_probability: 1.0,
                error: report.g3_vs_target.weighted,
                restoration_error: report.g3_marginal.max,
                pass: report.pass,
            };
            Ok(Outcome {
                pass: report.pass,
                result: serde_json::to_value(&report)?,
                failed,
                summary,
                protocol: None,
            })
        }
    }
}

/// Re-runs the stored configuration; exit 0 iff every field matches and
/// the recomputed run passes.
pub fn verify_report(path: &Path, _tol: f64) -> Result<u8> {
    let text = std::fs::read_to_string(path)?;
    let stored: Value = serde_json::from_str(&text)?;
    let config: RunConfig = serde_json::from_value(
        stored
            .get("config")
            .cloned()
            .ok_or_else(|| Error::InvalidArgument("report has no `config`".into()))?,
    )?;
    let outcome = execute(&config)?;
    let fresh = output::report_value(&config, &outcome);
    let tol = stored
        .pointer("/tolerances/verify")
        .and_then(Value::as_f64)
        .unwrap_or(output::VERIFY_TOL);
    let mut mismatches = Vec::new();
    output::compare(&stored, &fresh, tol, "", &mut mismatches);
    if !mismatches.is_empty() {
        for m in mismatches.iter().take(20) {
            eprintln!("mismatch: {m}");
        }
        eprintln!("{} field(s) differ from the recomputed report", mismatches.len());
        return Ok(crate::EXIT_INVARIANT);
    }
    if !outcome.pass {
        eprintln!("invariant check failed: {}", outcome.failed.join(", "));
        return Ok(crate::EXIT_INVARIANT);
    }
    println!("verified {}", path.display());
    Ok(crate::EXIT_PASS)
}
