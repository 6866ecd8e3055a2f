//! Five-to-one T-state distillation on the five-qubit code.

use crate::catalysis::MultiShotProtocol;
use crate::channels::{pauli_i, pauli_x, pauli_y, pauli_z, QuantumOp};
use crate::error::{Error, Result};
use crate::protocols::free_sets::single_qubit_cliffords;
use crate::states::{trace_distance, State};
use crate::tensor::{fidelity, kron_all, ComplexMatrix, SystemLayout, C64};

const GENERATORS: [&str; 4] = ["XZZXI", "IXZZX", "XIXZZ", "ZXIXZ"];

fn pauli(c: char) -> ComplexMatrix {
    match c {
        'X' => pauli_x(),
        'Y' => pauli_y(),
        'Z' => pauli_z(),
        _ => pauli_i(),
    }
}

pub fn pauli_string(s: &str) -> ComplexMatrix {
    let ps: Vec<ComplexMatrix> = s.chars().map(pauli).collect();
    kron_all(&ps)
}

/// ½(I + (X + Y + Z)/√3)
pub fn t_state() -> State {
    let r = 1.0 / 3f64.sqrt();
    let mut m = pauli_x().scaled(r);
    m += &pauli_y().scaled(r);
    m += &pauli_z().scaled(r);
    m += &pauli_i();
    State::new(
        m.scaled(0.5),
        SystemLayout::single("S", 2),
        crate::states::NormClass::Normalized,
    )
    .expect("valid state")
}

/// (1−λ)|T⟩⟨T| + λ I/2
pub fn noisy_t_state(lambda: f64) -> Result<State> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "noise {lambda} outside [0,1]"
        )));
    }
    let t = t_state();
    let mut m = t.matrix().scaled(1.0 - lambda);
    m += &ComplexMatrix::identity(2).scaled(lambda / 2.0);
    State::new(m, t.layout().clone(), crate::states::NormClass::Normalized)
}

/// Syndrome projectors, corrections and the decoder of the five-qubit code.
#[derive(Clone, Debug)]
pub struct FiveQubitCode {
    pub stabilizers: Vec<ComplexMatrix>,
    /// Indexed by the syndrome bits, entry 0 is the code space.
    pub syndrome_projectors: Vec<ComplexMatrix>,
    /// Single-qubit Pauli returning syndrome `s` to the code space.
    pub corrections: Vec<ComplexMatrix>,
    /// |0⟩⟨0̄| + |1⟩⟨1̄|
    pub decoder: ComplexMatrix,
}

impl FiveQubitCode {
    pub fn new() -> Result<Self> {
        let stabilizers: Vec<ComplexMatrix> = GENERATORS.iter().map(|g| pauli_string(g)).collect();
        let id = ComplexMatrix::identity(32);
        let syndrome_projectors: Vec<ComplexMatrix> = (0..16)
            .map(|s| {
                let mut p = id.clone();
                for (i, g) in stabilizers.iter().enumerate() {
                    let sign = if s >> (3 - i) & 1 == 1 { -1.0 } else { 1.0 };
                    let mut f = id.clone();
                    f.axpy(C64::new(sign, 0.0), g);
                    p = p.matmul(&f.scaled(0.5));
                }
                p
            })
            .collect();
        let mut corrections = vec![ComplexMatrix::zeros(0, 0); 16];
        corrections[0] = id.clone();
        for q in 0..5 {
            for c in ['X', 'Y', 'Z'] {
                let s: String = (0..5).map(|i| if i == q { c } else { 'I' }).collect();
                let e = pauli_string(&s);
                let syn = stabilizers.iter().fold(0usize, |acc, g| {
                    let anti = e.matmul(g).matmul(&e).inner(g).re < 0.0;
                    acc << 1 | anti as usize
                });
                corrections[syn] = e;
            }
        }
        if corrections.iter().any(|c| c.rows() == 0) {
            return Err(Error::invariant(
                "five_qubit_syndromes",
                "syndrome table incomplete",
            ));
        }
        let code = &syndrome_projectors[0];
        let mut zero = vec![C64::new(0.0, 0.0); 32];
        zero[0] = C64::new(1.0, 0.0);
        let v0 = code.matmul(&ComplexMatrix::from_vec(32, 1, zero)?);
        let v0 = v0.scaled(1.0 / v0.frobenius_norm());
        let v1 = pauli_string("XXXXX").matmul(&v0);
        let mut decoder = ComplexMatrix::zeros(2, 32);
        for i in 0..32 {
            decoder[(0, i)] = v0[(i, 0)].conj();
            decoder[(1, i)] = v1[(i, 0)].conj();
        }
        Ok(FiveQubitCode {
            stabilizers,
            syndrome_projectors,
            corrections,
            decoder,
        })
    }
}

/// Clifford mapping the decoded noiseless output onto |T⟩.
fn output_clifford(code: &FiveQubitCode) -> Result<ComplexMatrix> {
    let t5 = t_state().tensor_power(5)?;
    let k = code.decoder.matmul(&code.syndrome_projectors[0]);
    let out = k.sandwich(t5.matrix());
    let out = out.scaled(1.0 / out.trace().re);
    let t = t_state();
    let (best, f) = single_qubit_cliffords()
        .iter()
        .map(|c| (c, fidelity(&c.sandwich(&out), t.matrix()).unwrap_or(0.0)))
        .fold(
            (None, -1.0),
            |acc, (c, f)| if f > acc.1 { (Some(c), f) } else { acc },
        );
    if f < 1.0 - 1e-9 {
        return Err(Error::invariant(
            "five_qubit_output_clifford",
            format!("best fidelity with |T⟩ is {f}"),
        ));
    }
    Ok(best.expect("24 candidates").clone())
}

/// Five noisy T states in, project onto the code space, decode, rotate to |T⟩.
pub fn five_qubit_t_protocol(noise: f64) -> Result<MultiShotProtocol> {
    let code = FiveQubitCode::new()?;
    let c = output_clifford(&code)?;
    let decode = c.matmul(&code.decoder);
    let success = vec![decode.matmul(&code.syndrome_projectors[0])];
    let failure: Vec<ComplexMatrix> = (1..16)
        .map(|s| {
            decode
                .matmul(&code.corrections[s])
                .matmul(&code.syndrome_projectors[s])
        })
        .collect();
    let input = SystemLayout::uniform("S", 2, 5);
    let output = SystemLayout::uniform("S", 2, 1);
    let map = QuantumOp::from_kraus(input.clone(), output.clone(), success)?;
    let fail = QuantumOp::from_kraus(input, output, failure)?;
    MultiShotProtocol::measured(
        format!("five_qubit_t(noise={noise})"),
        map,
        Some(fail),
        5,
        1,
        noisy_t_state(noise)?,
        t_state(),
    )
}

/// Whether the protocol's output error is below the input error.
pub fn improves(p: &MultiShotProtocol) -> Result<bool> {
    Ok(p.declared_eps < trace_distance(&p.source, &p.target)?)
}
