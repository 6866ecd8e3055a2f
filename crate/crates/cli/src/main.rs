//! `catalyst` command-line front end.

mod output;
mod run;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use catalyst_core::protocols::registry::PROTOCOLS;
use catalyst_core::Error;

use run::{FailureArg, RunConfig, VariantArg};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_INVARIANT: u8 = 2;
pub const EXIT_CAP: u8 = 3;
pub const EXIT_USAGE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "catalyst")]
#[command(about = "Compile multi-shot distillation protocols into catalytic ones and certify them")]
struct Cli {
    /// Solver tolerance for diamond-norm and mutual-information optimizations.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,

    /// Seed for randomized protocols and channels that do not set one in --params.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; the report is printed to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a registered protocol into a catalytic one and verify it.
    Convert {
        protocol: String,

        /// Protocol parameters as key=val (repeatable).
        #[arg(long = "params", value_parser = parse_param, value_delimiter = ',')]
        params: Vec<(String, String)>,

        #[arg(long, value_enum, default_value = "s1")]
        variant: VariantArg,

        /// Block size for the trade-off variant.
        #[arg(long)]
        k: Option<usize>,

        /// Use the alternative trade-off catalyst.
        #[arg(long)]
        alt_catalyst: bool,

        /// Failure branch used for catalyst-loss bookkeeping.
        #[arg(long, value_enum, default_value = "auto")]
        failure: FailureArg,
    },

    /// Same as `convert --variant s4`.
    Tradeoff {
        protocol: String,

        #[arg(long = "params", value_parser = parse_param, value_delimiter = ',')]
        params: Vec<(String, String)>,

        #[arg(long)]
        k: Option<usize>,

        #[arg(long)]
        alt_catalyst: bool,

        #[arg(long, value_enum, default_value = "auto")]
        failure: FailureArg,
    },

    /// Reuse one catalyst for several rounds (deterministic protocols only).
    Reuse {
        protocol: String,

        #[arg(long = "params", value_parser = parse_param, value_delimiter = ',')]
        params: Vec<(String, String)>,

        #[arg(long, default_value_t = 3)]
        rounds: usize,
    },

    /// Channel catalyst construction for a code on n slots.
    Channel {
        /// trivial | measure_prepare
        code: String,

        #[arg(long, default_value_t = 2)]
        n: usize,

        /// channel=depolarizing|dephasing|amplitude_damping|random, strength=…, q=…, mi=true|false
        #[arg(long = "params", value_parser = parse_param, value_delimiter = ',')]
        params: Vec<(String, String)>,
    },

    /// Recompute a stored report and compare every numeric field.
    Verify { report: PathBuf },

    /// List registered protocols and their parameters.
    ListProtocols {
        #[arg(long, value_enum, default_value = "text")]
        format: ListFormat,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ListFormat {
    Text,
    Json,
}

fn parse_param(s: &str) -> Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=val, got `{s}`"))?;
    if k.is_empty() {
        return Err(format!("empty key in `{s}`"));
    }
    Ok((k.to_string(), v.to_string()))
}

fn to_map(params: Vec<(String, String)>) -> BTreeMap<String, String> {
    params.into_iter().collect()
}

pub fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::CapExceeded { .. } => EXIT_CAP,
        Error::InvariantViolation { .. } | Error::NonConvergence { .. } => EXIT_INVARIANT,
        _ => EXIT_USAGE,
    }
}

fn list_protocols(format: ListFormat) -> u8 {
    match format {
        ListFormat::Text => {
            for p in PROTOCOLS {
                let params: Vec<String> = p.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("{:<26} {:<28} {}", p.key, params.join(","), p.description);
            }
        }
        ListFormat::Json => {
            let list: Vec<_> = PROTOCOLS
                .iter()
                .map(|p| {
                    serde_json::json!({
                        "key": p.key,
                        "description": p.description,
                        "params": p.params.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<BTreeMap<_, _>>(),
                    })
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&list).expect("plain JSON"));
        }
    }
    EXIT_PASS
}

fn dispatch(cli: Cli) -> catalyst_core::Result<u8> {
    let config = match cli.command {
        Command::ListProtocols { format } => return Ok(list_protocols(format)),
        Command::Verify { report } => return run::verify_report(&report, cli.tol),
        Command::Convert {
            protocol,
            params,
            variant,
            k,
            alt_catalyst,
            failure,
        } => RunConfig::convert(protocol, to_map(params), variant, k, alt_catalyst, failure, cli.seed, cli.tol)?,
        Command::Tradeoff {
            protocol,
            params,
            k,
            alt_catalyst,
            failure,
        } => RunConfig::convert(
            protocol,
            to_map(params),
            VariantArg::S4,
            k,
            alt_catalyst,
            failure,
            cli.seed,
            cli.tol,
        )?,
        Command::Reuse {
            protocol,
            params,
            rounds,
        } => RunConfig::reuse(protocol, to_map(params), rounds, cli.seed, cli.tol)?,
        Command::Channel { code, n, params } => RunConfig::channel(code, n, to_map(params), cli.seed, cli.tol)?,
    };
    let outcome = run::execute(&config)?;
    output::emit(&config, &outcome, cli.out.as_deref())?;
    if outcome.pass {
        Ok(EXIT_PASS)
    } else {
        eprintln!("invariant check failed: {}", outcome.failed.join(", "));
        Ok(EXIT_INVARIANT)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
