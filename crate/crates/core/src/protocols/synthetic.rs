//! Seeded random multi-shot protocols with measured (ε, p).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalysis::MultiShotProtocol;
use crate::channels::QuantumOp;
use crate::error::{Error, Result};
use crate::sampling::{random_kraus, random_pure, random_state};
use crate::tensor::{check_cap, SystemLayout};

/// Random `S^n → S^m` map split from one Stinespring isometry: the first
/// half of its Kraus operators succeed, the rest fail. The source is a
/// random rank-2 state and the target a random pure state.
pub fn random_protocol(n: usize, m: usize, d: usize, seed: u64) -> Result<MultiShotProtocol> {
    if n == 0 || m == 0 || m > n || d < 2 {
        return Err(Error::InvalidArgument(format!(
            "random protocol needs 1 ≤ m ≤ n and d ≥ 2, got n={n} m={m} d={d}"
        )));
    }
    let din = d.checked_pow(n as u32).unwrap_or(usize::MAX);
    let dout = d.pow(m as u32);
    check_cap(din)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = din.div_ceil(dout).max(1);
    let mut ks = random_kraus(din, dout, 2 * half, &mut rng);
    let kf = ks.split_off(half);
    let input = SystemLayout::uniform("S", d, n);
    let output = SystemLayout::uniform("S", d, m);
    let map = QuantumOp::from_kraus(input.clone(), output.clone(), ks)?;
    let fail = QuantumOp::from_kraus(input, output, kf)?;
    let s = SystemLayout::single("S", d);
    let source = random_state(s.clone(), 2, &mut rng)?;
    let target = random_pure(s, &mut rng)?;
    MultiShotProtocol::measured(
        format!("random(n={n},m={m},d={d},seed={seed})"),
        map,
        Some(fail),
        n,
        m,
        source,
        target,
    )
}

/// Deterministic variant: all Kraus operators kept.
pub fn random_channel_protocol(
    n: usize,
    m: usize,
    d: usize,
    seed: u64,
) -> Result<MultiShotProtocol> {
    let p = random_protocol(n, m, d, seed)?;
    let fail = p
        .failure_map
        .clone()
        .expect("random protocols carry a failure map");
    let mut ks = p.map.kraus()?;
    ks.extend(fail.kraus()?);
    let map = QuantumOp::from_kraus(p.map.input().clone(), p.map.output().clone(), ks)?;
    MultiShotProtocol::measured(
        format!("random_channel(n={n},m={m},d={d},seed={seed})"),
        map,
        None,
        n,
        m,
        p.source,
        p.target,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_reproducible() {
        let a = random_protocol(3, 1, 2, 9).unwrap();
        let b = random_protocol(3, 1, 2, 9).unwrap();
        assert_eq!(a.declared_p, b.declared_p);
        assert_eq!(a.declared_eps, b.declared_eps);
        assert!(a.declared_p > 0.0 && a.declared_p < 1.0);
    }

    #[test]
    fn channel_variant_is_deterministic() {
        let p = random_channel_protocol(2, 1, 2, 3).unwrap();
        assert!((p.declared_p - 1.0).abs() < 1e-12);
        assert!(random_protocol(1, 2, 2, 0).is_err());
    }
}
