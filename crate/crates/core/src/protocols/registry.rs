//! Named protocols with string parameters, as used by the command line.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::catalysis::MultiShotProtocol;
use crate::channels::QuantumOp;
use crate::error::{Error, Result};
use crate::protocols::{entanglement, magic, synthetic};
use crate::states::State;
use crate::tensor::SystemLayout;

#[derive(Clone, Copy, Debug)]
pub struct ProtocolInfo {
    pub key: &'static str,
    pub description: &'static str,
    /// (name, default)
    pub params: &'static [(&'static str, &'static str)],
}

pub const PROTOCOLS: &[ProtocolInfo] = &[
    ProtocolInfo {
        key: "identity",
        description: "1 -> 1 identity on |0><0|",
        params: &[("d", "2")],
    },
    ProtocolInfo {
        key: "recurrence",
        description: "two-copy recurrence on isotropic pairs, run `copies` times in parallel",
        params: &[("f", "0.85"), ("copies", "1")],
    },
    ProtocolInfo {
        key: "recurrence_deterministic",
        description: "recurrence keeping the first pair on every outcome",
        params: &[("f", "0.85"), ("copies", "2")],
    },
    ProtocolInfo {
        key: "five_qubit_t",
        description: "5 -> 1 T-state distillation on the five-qubit code",
        params: &[("noise", "0.05")],
    },
    ProtocolInfo {
        key: "random",
        description: "seeded random n -> m map with a failure branch",
        params: &[("n", "3"), ("m", "1"), ("d", "2"), ("seed", "7")],
    },
    ProtocolInfo {
        key: "random_deterministic",
        description: "seeded random n -> m channel",
        params: &[("n", "3"), ("m", "1"), ("d", "2"), ("seed", "7")],
    },
];

pub fn lookup(key: &str) -> Result<&'static ProtocolInfo> {
    PROTOCOLS
        .iter()
        .find(|p| p.key == key)
        .ok_or_else(|| Error::UnknownProtocol(key.to_string()))
}

/// Parameters with defaults filled in; unknown names are rejected.
pub fn resolve_params(
    key: &str,
    given: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, String>> {
    let info = lookup(key)?;
    for name in given.keys() {
        if !info.params.iter().any(|(p, _)| p == name) {
            return Err(Error::InvalidArgument(format!(
                "protocol `{key}` has no parameter `{name}`"
            )));
        }
    }
    Ok(info
        .params
        .iter()
        .map(|(p, default)| {
            let v = given
                .get(*p)
                .cloned()
                .unwrap_or_else(|| default.to_string());
            (p.to_string(), v)
        })
        .collect())
}

fn get<T: FromStr>(params: &BTreeMap<String, String>, name: &str) -> Result<T> {
    let raw = params
        .get(name)
        .ok_or_else(|| Error::InvalidArgument(format!("missing parameter `{name}`")))?;
    raw.parse()
        .map_err(|_| Error::InvalidArgument(format!("cannot parse `{name}={raw}`")))
}

pub fn build_protocol(key: &str, given: &BTreeMap<String, String>) -> Result<MultiShotProtocol> {
    let params = resolve_params(key, given)?;
    match key {
        "identity" => {
            let d: usize = get(&params, "d")?;
            let s = SystemLayout::single("S", d);
            let rho = State::basis(0, s.clone())?;
            MultiShotProtocol::measured(
                "identity",
                QuantumOp::identity(s),
                None,
                1,
                1,
                rho.clone(),
                rho,
            )
        }
        "recurrence" => {
            let p = entanglement::recurrence_protocol(get(&params, "f")?)?;
            entanglement::product_protocol(&p, get(&params, "copies")?)
        }
        "recurrence_deterministic" => {
            let p = entanglement::recurrence_deterministic(get(&params, "f")?)?;
            entanglement::product_protocol(&p, get(&params, "copies")?)
        }
        "five_qubit_t" => magic::five_qubit_t_protocol(get(&params, "noise")?),
        "random" => synthetic::random_protocol(
            get(&params, "n")?,
            get(&params, "m")?,
            get(&params, "d")?,
            get(&params, "seed")?,
        ),
        "random_deterministic" => synthetic::random_channel_protocol(
            get(&params, "n")?,
            get(&params, "m")?,
            get(&params, "d")?,
            get(&params, "seed")?,
        ),
        other => Err(Error::UnknownProtocol(other.to_string())),
    }
}
