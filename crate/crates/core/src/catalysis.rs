//! State-level catalytic conversions.
//!
//! A multi-shot protocol `ρ^{⊗n} → σ^{⊗m}` is compiled into a one-shot
//! protocol acting on a block of source copies together with a classically
//! flagged catalyst. Two constructions are provided:
//!
//! * block conversion: blocks of `k = ⌈n/m⌉` copies, `m` catalyst branches;
//! * trade-off conversion: blocks of any `k ≤ n/m` copies embedded into
//!   `T = S^k ⊕ W`, `g = ⌈n/k⌉` branches and a final measurement
//!   `{P_{S^k}, P_W}` that heralds success with probability `p·m/g`.
//!
//! Both run the same step sequence: a classically controlled application
//! of the multi-shot map on the last branch, a cyclic relabeling of the
//! register, a cyclic permutation of the quantum slots and the removal of
//! the embedding on the first slot.

use serde::{Deserialize, Serialize};

use crate::channels::{apply_controlled_at, ControlledOp, QuantumOp};
use crate::error::{Error, Result};
use crate::states::{
    cyclic_shift_labels, direct_sum_isometry, flagged_trace_distance, orthogonal_free_state,
    slot_groups, trace_distance, Branch, FlaggedEnsemble, State, TRACE_TOL,
};
use crate::tensor::{self, check_cap, cyclic_forward, kron, ComplexMatrix, SystemLayout, C64};

/// Restoration and equality tolerance used by every certificate.
pub const EQ_TOL: f64 = 1e-9;

/// A trace-nonincreasing map `S^n → S^m` together with its source and
/// target and the error and success probability it is claimed to reach.
#[derive(Clone, Debug)]
pub struct MultiShotProtocol {
    pub name: String,
    pub map: QuantumOp,
    /// Complementary branch `L_fail` with `map + failure_map` trace preserving.
    pub failure_map: Option<QuantumOp>,
    pub n_in: usize,
    pub m_out: usize,
    pub source: State,
    pub target: State,
    pub declared_eps: f64,
    pub declared_p: f64,
}

/// Direct simulation of a multi-shot protocol on `ρ^{⊗n}`.
#[derive(Clone, Debug)]
pub struct MultiShotOutput {
    pub p: f64,
    /// Normalized output η on `S^m`.
    pub eta: State,
    /// Δ(ηᵢ, σ) per output slot.
    pub marginal_errors: Vec<f64>,
    pub marginals: Vec<State>,
}

impl MultiShotOutput {
    pub fn max_error(&self) -> f64 {
        self.marginal_errors.iter().copied().fold(0.0, f64::max)
    }
}

impl MultiShotProtocol {
    /// Validating constructor with declared (ε, p).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        map: QuantumOp,
        failure_map: Option<QuantumOp>,
        n_in: usize,
        m_out: usize,
        source: State,
        target: State,
        declared_eps: f64,
        declared_p: f64,
    ) -> Result<Self> {
        let p = MultiShotProtocol {
            name: name.into(),
            map,
            failure_map,
            n_in,
            m_out,
            source,
            target,
            declared_eps,
            declared_p,
        };
        p.validate()?;
        Ok(p)
    }

    /// Constructor attaching the measured (ε, p) as the declared ones.
    pub fn measured(
        name: impl Into<String>,
        map: QuantumOp,
        failure_map: Option<QuantumOp>,
        n_in: usize,
        m_out: usize,
        source: State,
        target: State,
    ) -> Result<Self> {
        let mut p = MultiShotProtocol {
            name: name.into(),
            map,
            failure_map,
            n_in,
            m_out,
            source,
            target,
            declared_eps: 0.0,
            declared_p: 0.0,
        };
        p.check_shapes()?;
        let out = p.simulate()?;
        p.declared_eps = out.max_error();
        p.declared_p = out.p;
        Ok(p)
    }

    pub fn source_dim(&self) -> usize {
        self.source.dim()
    }

    fn check_shapes(&self) -> Result<()> {
        if self.n_in == 0 || self.m_out == 0 {
            return Err(Error::InvalidArgument("n and m must be positive".into()));
        }
        if self.m_out > self.n_in {
            return Err(Error::InvalidArgument(format!(
                "distillation needs m ≤ n, got n={} m={}",
                self.n_in, self.m_out
            )));
        }
        let d = self.source_dim();
        if self.target.dim() != d {
            return Err(Error::DimensionMismatch(
                "source and target dimensions differ".into(),
            ));
        }
        let din = d.checked_pow(self.n_in as u32);
        let dout = d.checked_pow(self.m_out as u32);
        if din != Some(self.map.din()) || dout != Some(self.map.dout()) {
            return Err(Error::DimensionMismatch(format!(
                "map {} -> {} does not act S^{} -> S^{}",
                self.map.input(),
                self.map.output(),
                self.n_in,
                self.m_out
            )));
        }
        if let Some(f) = &self.failure_map {
            if f.din() != self.map.din() || f.dout() != self.map.dout() {
                return Err(Error::DimensionMismatch("failure map shape".into()));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        let out = self.simulate()?;
        if (out.p - self.declared_p).abs() >= EQ_TOL {
            return Err(Error::invariant(
                "declared_success_probability",
                format!("measured p = {} but declared {}", out.p, self.declared_p),
            ));
        }
        if out.max_error() > self.declared_eps + EQ_TOL {
            return Err(Error::invariant(
                "declared_error",
                format!(
                    "measured ε = {} exceeds declared {}",
                    out.max_error(),
                    self.declared_eps
                ),
            ));
        }
        Ok(())
    }

    /// Source layout with `count` subsystems.
    pub fn s_layout(&self, count: usize) -> SystemLayout {
        SystemLayout::uniform("S", self.source_dim(), count)
    }

    pub fn simulate(&self) -> Result<MultiShotOutput> {
        let d = self.source_dim();
        check_cap(d.pow(self.n_in as u32))?;
        let input = self
            .source
            .with_layout(SystemLayout::single("S", d))?
            .tensor_power(self.n_in)?;
        let input = input.with_layout(self.map.input().clone())?;
        let out = self.map.apply(&input)?;
        let p = out.trace();
        if let Some(f) = &self.failure_map {
            let q = f.apply(&input)?.trace();
            if (p + q - 1.0).abs() > EQ_TOL {
                return Err(Error::invariant(
                    "failure_branch_completes",
                    format!("success {p} and failure {q} weights do not sum to 1"),
                ));
            }
        }
        if p <= 0.0 {
            return Err(Error::invariant(
                "success_probability",
                "protocol never succeeds",
            ));
        }
        let eta = out
            .scaled(1.0 / p)?
            .with_layout(self.s_layout(self.m_out))?;
        let mut marginals = Vec::with_capacity(self.m_out);
        let mut errors = Vec::with_capacity(self.m_out);
        for i in 0..self.m_out {
            let mi = eta.partial_trace_positions(&[i])?;
            errors.push(trace_distance(&mi, &self.target)?);
            marginals.push(mi);
        }
        Ok(MultiShotOutput {
            p,
            eta,
            marginal_errors: errors,
            marginals,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Block,
    Tradeoff,
    TradeoffAlternative,
}

/// How the multi-shot map's failure branch is modeled.
#[derive(Clone, Debug, Default)]
pub enum FailureModel {
    /// The protocol's own failure map if it has one, otherwise junk.
    #[default]
    Auto,
    /// Trace and replace the inputs by this state on `S^m` (default `π^{⊗m}`).
    Junk(Option<State>),
}

#[derive(Clone, Debug)]
pub enum Step {
    /// `scale · op` on the branch `label`, identity elsewhere.
    Controlled {
        label: usize,
        op: QuantumOp,
        failure_op: QuantumOp,
        scale: f64,
    },
    ClassicalShift,
    QuantumShift {
        slots: usize,
    },
    /// Compress the first slot from `T` onto `S^k` (the accepted outcome).
    Project {
        op: QuantumOp,
    },
    /// Keep the first subsystem of the first slot, trace out the next
    /// `discard` subsystems.
    ReverseEmbed {
        discard: usize,
    },
}

impl Step {
    pub fn summary(&self) -> StepSummary {
        match self {
            Step::Controlled {
                label, op, scale, ..
            } => StepSummary {
                kind: "controlled".into(),
                label: Some(*label),
                scale: Some(*scale),
                slots: None,
                description: format!("{} -> {} on branch {label}", op.input(), op.output()),
            },
            Step::ClassicalShift => StepSummary {
                kind: "classical_shift".into(),
                label: None,
                scale: None,
                slots: None,
                description: "label i -> i+1, last -> 1".into(),
            },
            Step::QuantumShift { slots } => StepSummary {
                kind: "quantum_shift".into(),
                label: None,
                scale: None,
                slots: Some(*slots),
                description: "slot i -> i+1, last -> first".into(),
            },
            Step::Project { op } => StepSummary {
                kind: "project".into(),
                label: None,
                scale: None,
                slots: None,
                description: format!("first slot {} -> {}", op.input(), op.output()),
            },
            Step::ReverseEmbed { discard } => StepSummary {
                kind: "reverse_embed".into(),
                label: None,
                scale: None,
                slots: None,
                description: format!("trace out {discard} appended free subsystems"),
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StepSummary {
    pub kind: String,
    pub label: Option<usize>,
    pub scale: Option<f64>,
    pub slots: Option<usize>,
    pub description: String,
}

#[derive(Clone, Debug)]
pub struct CatalyticProtocol {
    pub variant: Variant,
    pub n_in: usize,
    pub m_out: usize,
    pub block_size: usize,
    /// Number of slots (and catalyst branches): `m` or `g`.
    pub slots: usize,
    pub source_dim: usize,
    pub catalyst: FlaggedEnsemble,
    pub steps: Vec<Step>,
    pub expected_eps: f64,
    pub expected_p: f64,
    pub multishot_p: f64,
    /// The block consumed per run (`ρ^{⊗k}`, embedded for the trade-off).
    pub input_block: State,
    pub target: State,
    pub multishot: MultiShotOutput,
    pub failure_from_protocol: bool,
}

/// Catalyst dimensions without building it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalystShape {
    pub block_size: usize,
    pub branches: usize,
    /// Source subsystems per branch body.
    pub body_subsystems: usize,
}

pub fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Shape of the block catalyst for an `n → m` protocol.
pub fn block_catalyst_shape(n: usize, m: usize) -> Result<CatalystShape> {
    if m == 0 || n < m {
        return Err(Error::InvalidArgument(format!(
            "need 1 ≤ m ≤ n, got n={n} m={m}"
        )));
    }
    let k = ceil_div(n, m);
    Ok(CatalystShape {
        block_size: k,
        branches: m,
        body_subsystems: k * (m - 1),
    })
}

/// `E(·) = (·) ⊗ π^{⊗(k−1)}` on one source subsystem.
fn append_embedding(d: usize, k: usize, pi: &State) -> Result<QuantumOp> {
    let s = SystemLayout::single("S", d);
    if k == 1 {
        return Ok(QuantumOp::identity(s));
    }
    let pis = pi
        .with_layout(SystemLayout::single("P", d))?
        .tensor_power(k - 1)?;
    let op = QuantumOp::append(s, &pis)?;
    let out = SystemLayout::uniform("S", d, k);
    let input = op.input().clone();
    op.relabeled(input, out)
}

/// `S^k → T = S^k ⊕ W` as a single-Kraus isometry.
fn direct_sum_embedding(d: usize, k: usize) -> Result<QuantumOp> {
    let dk = d.pow(k as u32);
    QuantumOp::from_kraus(
        SystemLayout::uniform("S", d, k),
        SystemLayout::single("T", dk + 1),
        vec![direct_sum_isometry(dk, 1)],
    )
}

/// `T → S^k`, the compression `V†`; kills the `W` component.
fn direct_sum_compression(d: usize, k: usize) -> Result<QuantumOp> {
    let dk = d.pow(k as u32);
    QuantumOp::from_kraus(
        SystemLayout::single("T", dk + 1),
        SystemLayout::uniform("S", d, k),
        vec![direct_sum_isometry(dk, 1).adjoint()],
    )
}

fn marginal_first(s: &State, count: usize) -> Result<State> {
    if count == 0 {
        return Ok(State::trivial());
    }
    s.partial_trace_positions(&(0..count).collect::<Vec<_>>())
}

/// Applies `slot_op` to each of the first `count` subsystems of `s_marg`.
fn embed_slots(s_marg: &State, slot_op: &QuantumOp, count: usize) -> Result<State> {
    if count == 0 {
        return Ok(State::trivial());
    }
    let op = slot_op.tensor_power(count);
    let input = op.input().clone();
    op.apply(&s_marg.with_layout(input)?)
}

fn tensor_all(parts: &[&State]) -> Result<State> {
    let mut out = State::trivial();
    for p in parts {
        out = out.tensor(p)?;
    }
    Ok(out)
}

/// ω = (1/m) Σᵢ ζ^{⊗(i−1)} ⊗ η̂_{1:m−i} ⊗ |i⟩⟨i|
pub fn build_block_catalyst(p: &MultiShotProtocol, free_pi: &State) -> Result<FlaggedEnsemble> {
    let out = p.simulate()?;
    block_catalyst_from(p, free_pi, &out)
}

fn block_catalyst_from(
    p: &MultiShotProtocol,
    free_pi: &State,
    out: &MultiShotOutput,
) -> Result<FlaggedEnsemble> {
    let shape = block_catalyst_shape(p.n_in, p.m_out)?;
    let (m, k, d) = (p.m_out, shape.block_size, p.source_dim());
    check_cap(d.pow((k * m) as u32))?;
    let e = append_embedding(d, k, free_pi)?;
    let zeta = p
        .source
        .with_layout(SystemLayout::single("S", d))?
        .tensor_power(k)?;
    let mut bodies = Vec::with_capacity(m);
    for i in 1..=m {
        let z = zeta.tensor_power(i - 1)?;
        let eta = embed_slots(&marginal_first(&out.eta, m - i)?, &e, m - i)?;
        bodies.push(canonical(&tensor_all(&[&z, &eta])?));
    }
    FlaggedEnsemble::uniform(bodies)
}

fn canonical(s: &State) -> State {
    s.relabeled("q")
}

fn check_free_state(p: &MultiShotProtocol, free_pi: &State) -> Result<()> {
    if free_pi.dim() != p.source_dim() {
        return Err(Error::DimensionMismatch(format!(
            "free state of dimension {} for {}-dimensional source",
            free_pi.dim(),
            p.source_dim()
        )));
    }
    if (free_pi.trace() - 1.0).abs() > TRACE_TOL {
        return Err(Error::InvalidArgument(
            "free state must be normalized".into(),
        ));
    }
    Ok(())
}

fn failure_core(
    p: &MultiShotProtocol,
    model: &FailureModel,
    free_pi: &State,
) -> Result<(QuantumOp, bool)> {
    match (model, &p.failure_map) {
        (FailureModel::Auto, Some(f)) => Ok((f.clone(), true)),
        (FailureModel::Auto, None) | (FailureModel::Junk(None), _) => {
            let junk = free_pi
                .with_layout(SystemLayout::single("S", p.source_dim()))?
                .tensor_power(p.m_out)?;
            Ok((
                QuantumOp::trace_and_replace(p.map.input().clone(), &junk)?,
                false,
            ))
        }
        (FailureModel::Junk(Some(j)), _) => Ok((
            QuantumOp::trace_and_replace(p.map.input().clone(), j)?,
            false,
        )),
    }
}

/// `[Discard residual] → core → tail`, on `slots·k` source subsystems.
fn wrap_core(
    p: &MultiShotProtocol,
    k: usize,
    slots: usize,
    core: &QuantumOp,
    tail: &QuantumOp,
) -> Result<QuantumOp> {
    let d = p.source_dim();
    let total = slots * k;
    let layout = SystemLayout::uniform("S", d, total);
    let mut ops = Vec::new();
    if total > p.n_in {
        ops.push(QuantumOp::discard_positions(
            layout.clone(),
            (0..p.n_in).collect(),
        )?);
    }
    let core = core
        .clone()
        .relabeled(p.s_layout(p.n_in), p.s_layout(p.m_out))?;
    ops.push(core);
    ops.push(tail.clone());
    QuantumOp::sequence(ops)
}

/// Compiles the block conversion: `ρ^{⊗k} ⊗ ω → σ ⊗ ω` with `k = ⌈n/m⌉`.
pub fn convert_to_catalytic(p: &MultiShotProtocol, free_pi: &State) -> Result<CatalyticProtocol> {
    convert_to_catalytic_with(p, free_pi, &FailureModel::Auto)
}

pub fn convert_to_catalytic_with(
    p: &MultiShotProtocol,
    free_pi: &State,
    failure: &FailureModel,
) -> Result<CatalyticProtocol> {
    p.validate()?;
    check_free_state(p, free_pi)?;
    let out = p.simulate()?;
    let shape = block_catalyst_shape(p.n_in, p.m_out)?;
    let (m, k, d) = (p.m_out, shape.block_size, p.source_dim());
    let catalyst = block_catalyst_from(p, free_pi, &out)?;
    let e = append_embedding(d, k, free_pi)?;
    let tail = e.tensor_power(m);
    let l2 = wrap_core(p, k, m, &p.map, &tail)?;
    let (fail_core, from_protocol) = failure_core(p, failure, free_pi)?;
    let l2_fail = wrap_core(p, k, m, &fail_core, &tail)?;
    let mut steps = vec![
        Step::Controlled {
            label: m,
            op: l2,
            failure_op: l2_fail,
            scale: 1.0 / out.p,
        },
        Step::ClassicalShift,
        Step::QuantumShift { slots: m },
    ];
    if k > 1 {
        steps.push(Step::ReverseEmbed { discard: k - 1 });
    }
    let zeta = p
        .source
        .with_layout(SystemLayout::single("S", d))?
        .tensor_power(k)?;
    Ok(CatalyticProtocol {
        variant: Variant::Block,
        n_in: p.n_in,
        m_out: m,
        block_size: k,
        slots: m,
        source_dim: d,
        catalyst,
        steps,
        expected_eps: p.declared_eps,
        expected_p: p.declared_p,
        multishot_p: out.p,
        input_block: canonical(&zeta),
        target: p.target.clone(),
        multishot: out,
        failure_from_protocol: from_protocol,
    })
}

/// Compiles the trade-off conversion with blocks of `k ≤ n/m` copies.
pub fn tradeoff_convert(
    p: &MultiShotProtocol,
    k: usize,
    alt_catalyst: bool,
) -> Result<CatalyticProtocol> {
    let pi = State::maximally_mixed(SystemLayout::single("S", p.source_dim()))?;
    tradeoff_convert_with(p, k, alt_catalyst, &pi, &FailureModel::Auto)
}

pub fn tradeoff_convert_with(
    p: &MultiShotProtocol,
    k: usize,
    alt_catalyst: bool,
    free_pi: &State,
    failure: &FailureModel,
) -> Result<CatalyticProtocol> {
    p.validate()?;
    check_free_state(p, free_pi)?;
    let (n, m, d) = (p.n_in, p.m_out, p.source_dim());
    if k == 0 || k * m > n {
        return Err(Error::InvalidArgument(format!(
            "block size k={k} must satisfy 1 ≤ k ≤ n/m = {n}/{m}"
        )));
    }
    let g = ceil_div(n, k);
    let dk = d.pow(k as u32);
    let dt = dk + 1;
    check_cap(dt.checked_pow(g as u32).unwrap_or(usize::MAX))?;
    let out = p.simulate()?;

    let e = append_embedding(d, k, free_pi)?;
    let v = direct_sum_embedding(d, k)?;
    let slot_embed = e.then(&v)?;
    let theta = orthogonal_free_state(dk, 1)?;
    let zeta = p
        .source
        .with_layout(SystemLayout::single("S", d))?
        .tensor_power(k)?;
    let zeta_t = v.apply(&zeta.with_layout(v.input().clone())?)?;

    let eta_t = |count: usize| -> Result<State> {
        embed_slots(&marginal_first(&out.eta, count)?, &slot_embed, count)
    };
    let eta_t_excluding_last = eta_t(m - 1)?;
    let eta_full = eta_t(m)?;

    let mut bodies = Vec::with_capacity(g);
    for i in 1..=g {
        let z = zeta_t.tensor_power(i - 1)?;
        let body = if !alt_catalyst && i + m < g {
            tensor_all(&[&z, &eta_full, &theta.tensor_power(g - m - i)?])?
        } else if alt_catalyst && i + m <= g {
            tensor_all(&[
                &z,
                &eta_t_excluding_last,
                &theta.tensor_power(g - m - i + 1)?,
            ])?
        } else {
            tensor_all(&[&z, &eta_t(g - i)?])?
        };
        bodies.push(canonical(&body));
    }
    let catalyst = FlaggedEnsemble::uniform(bodies)?;

    // L₂: T^g → S^{gk} → (L) → S^m → T^m ⊗ θ̃^{g−m}
    let compress_all = direct_sum_compression(d, k)?.tensor_power(g);
    let mut tail_ops = vec![slot_embed.tensor_power(m)];
    if g > m {
        let t_layout = SystemLayout::uniform("T", dt, m);
        let thetas = theta.tensor_power(g - m)?;
        tail_ops.push(QuantumOp::append(t_layout, &thetas)?);
    }
    if alt_catalyst {
        let order: Vec<usize> = (0..g).filter(|&s| s != m - 1).chain([m - 1]).collect();
        tail_ops.push(QuantumOp::permutation(
            SystemLayout::uniform("T", dt, g),
            order,
        )?);
    }
    let tail = QuantumOp::sequence(tail_ops)?;
    let build = |core: &QuantumOp| -> Result<QuantumOp> {
        let inner = wrap_core(p, k, g, core, &tail)?;
        compress_all.then(&inner)
    };
    let l2 = build(&p.map)?;
    let (fail_core, from_protocol) = failure_core(p, failure, free_pi)?;
    let l2_fail = build(&fail_core)?;

    let mut steps = vec![
        Step::Controlled {
            label: g,
            op: l2,
            failure_op: l2_fail,
            scale: 1.0 / out.p,
        },
        Step::ClassicalShift,
        Step::QuantumShift { slots: g },
        Step::Project {
            op: direct_sum_compression(d, k)?,
        },
    ];
    if k > 1 {
        steps.push(Step::ReverseEmbed { discard: k - 1 });
    }
    Ok(CatalyticProtocol {
        variant: if alt_catalyst {
            Variant::TradeoffAlternative
        } else {
            Variant::Tradeoff
        },
        n_in: n,
        m_out: m,
        block_size: k,
        slots: g,
        source_dim: d,
        catalyst,
        steps,
        expected_eps: p.declared_eps,
        expected_p: p.declared_p * m as f64 / g as f64,
        multishot_p: out.p,
        input_block: canonical(&zeta_t),
        target: p.target.clone(),
        multishot: out,
        failure_from_protocol: from_protocol,
    })
}

/// Intermediate ensembles of one run.
#[derive(Clone, Debug)]
pub struct Execution {
    pub after_controlled: FlaggedEnsemble,
    /// State right after the quantum shift; its slots 2.. hold the catalyst.
    pub after_shift: FlaggedEnsemble,
    pub final_state: FlaggedEnsemble,
    /// tr of the unscaled controlled op on its branch.
    pub controlled_trace: f64,
}

fn region_shift(body: &State, offset: usize, slots: usize) -> Result<State> {
    if slots <= 1 {
        return Ok(body.clone());
    }
    let region = body
        .layout()
        .select(&(offset..body.layout().len()).collect::<Vec<_>>());
    let groups = slot_groups(&region, slots)?;
    let mut perm: Vec<usize> = (0..offset).collect();
    for g in cyclic_forward(slots) {
        perm.extend(groups[g].iter().map(|x| x + offset));
    }
    body.permute(&perm)
}

impl CatalyticProtocol {
    pub fn catalyst_quantum_dim(&self) -> usize {
        self.catalyst.body_dim()
    }

    pub fn catalyst_classical_dim(&self) -> usize {
        self.catalyst.register_dim()
    }

    /// ζ ⊗ ω, or with `prefix` kept in front of every branch.
    pub fn joint_input(&self, prefix: Option<&FlaggedEnsemble>) -> Result<FlaggedEnsemble> {
        match prefix {
            None => self
                .catalyst
                .map_bodies(|b| Ok(canonical(&self.input_block.tensor(&b.body)?))),
            Some(prev) => {
                prev.map_bodies(|b| insert_block(&b.body, &self.input_block, self.carried(b)))
            }
        }
    }

    /// Number of body subsystems in front of the catalyst for a branch
    /// carried over from an earlier round.
    fn carried(&self, b: &Branch) -> usize {
        let cat = self
            .catalyst
            .branch(b.label)
            .map_or(0, |c| c.body.layout().len());
        b.body.layout().len() - cat
    }

    /// Runs the steps on `e`, acting on body subsystems from `offset` on.
    pub fn execute(&self, e: &FlaggedEnsemble, offset: usize) -> Result<Execution> {
        self.execute_inner(e, offset, false)
    }

    /// Same as [`execute`](Self::execute) with the failure branch of the
    /// controlled step in place of the success branch.
    pub fn execute_failure(&self, e: &FlaggedEnsemble, offset: usize) -> Result<Execution> {
        self.execute_inner(e, offset, true)
    }

    fn execute_inner(&self, e: &FlaggedEnsemble, offset: usize, fail: bool) -> Result<Execution> {
        let mut cur = e.clone();
        let mut after_controlled = None;
        let mut after_shift = None;
        let mut controlled_trace = 1.0;
        for step in &self.steps {
            cur = match step {
                Step::Controlled {
                    label,
                    op,
                    failure_op,
                    scale,
                } => {
                    let branch = cur.branch(*label).ok_or_else(|| {
                        Error::InvalidArgument(format!("no branch labeled {label}"))
                    })?;
                    let region = branch.body.layout().len() - offset;
                    let region_layout = branch
                        .body
                        .layout()
                        .select(&(offset..offset + region).collect::<Vec<_>>());
                    let (op, scale) = if fail {
                        let q = 1.0 - 1.0 / scale;
                        if q <= 0.0 {
                            return Err(Error::InvalidArgument(
                                "deterministic protocol has no failure branch".into(),
                            ));
                        }
                        (failure_op, 1.0 / q)
                    } else {
                        (op, *scale)
                    };
                    let mut c = ControlledOp::new();
                    for b in cur.branches() {
                        if b.label == *label {
                            c = c.with_case(b.label, op.clone(), scale);
                        } else {
                            c = c.with_case(
                                b.label,
                                QuantumOp::identity(region_layout.clone()),
                                1.0,
                            );
                        }
                    }
                    let next = apply_controlled_at(&c, &cur, offset)?;
                    controlled_trace = next.branch(*label).expect("kept").body.trace() / scale;
                    let next = next.map_bodies(|b| Ok(canonical(&b.body)))?;
                    after_controlled = Some(next.clone());
                    next
                }
                Step::ClassicalShift => cyclic_shift_labels(&cur)?,
                Step::QuantumShift { slots } => {
                    let next = cur.map_bodies(|b| region_shift(&b.body, offset, *slots))?;
                    after_shift = Some(next.clone());
                    next
                }
                Step::Project { op } => cur.map_bodies(|b| {
                    let s = op.apply_on(&b.body, &[offset])?;
                    Ok(canonical(&s))
                })?,
                Step::ReverseEmbed { discard } => cur.map_bodies(|b| {
                    let keep: Vec<usize> = (0..b.body.layout().len())
                        .filter(|&i| i <= offset || i > offset + discard)
                        .collect();
                    Ok(canonical(&b.body.partial_trace_positions(&keep)?))
                })?,
            };
        }
        let after_shift = after_shift.unwrap_or_else(|| cur.clone());
        Ok(Execution {
            after_controlled: after_controlled.unwrap_or_else(|| e.clone()),
            after_shift,
            final_state: cur,
            controlled_trace,
        })
    }

    /// Catalyst marginal (slots 2..) of the post-shift ensemble, region at `offset`.
    pub fn catalyst_marginal(
        &self,
        after_shift: &FlaggedEnsemble,
        offset: usize,
    ) -> Result<FlaggedEnsemble> {
        after_shift.map_bodies(|b| {
            let region = b
                .body
                .layout()
                .select(&(offset..b.body.layout().len()).collect::<Vec<_>>());
            let groups = slot_groups(&region, self.slots)?;
            let keep: Vec<usize> = groups[1..].iter().flatten().map(|x| x + offset).collect();
            if keep.is_empty() {
                // the state scaled to the branch trace on the empty layout
                let tr = b.body.trace();
                return State::from_parts(
                    ComplexMatrix::identity(1).scaled(tr),
                    SystemLayout::empty(),
                );
            }
            Ok(canonical(&b.body.partial_trace_positions(&keep)?))
        })
    }
}

/// `prefix ⊗ block ⊗ rest` from a body `prefix ⊗ rest` split at `at`.
fn insert_block(body: &State, block: &State, at: usize) -> Result<State> {
    let joined = body.tensor(block)?;
    let n_body = body.layout().len();
    let n_block = block.layout().len();
    let mut perm: Vec<usize> = (0..at).collect();
    perm.extend(n_body..n_body + n_block);
    perm.extend(at..n_body);
    Ok(canonical(&joined.permute(&perm)?))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Check {
        Check {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold && value.is_finite(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CorrelationReport {
    pub lhs: f64,
    pub rhs: f64,
    pub eps: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FailureReport {
    /// `protocol` if the multi-shot protocol supplied its failure branch,
    /// `junk` for trace-and-replace.
    pub model: String,
    pub failure_probability: f64,
    pub catalyst_distance: f64,
    pub loss_probability: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub catalyst_restoration_error: f64,
    /// Δ(ν_{Sᵢ}, σ) for every output produced so far.
    pub output_errors: Vec<f64>,
    /// max over i of Δ(ν_{Sᵢ}, ν_{S₁}).
    pub output_spread: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct VerificationReport {
    pub variant: Variant,
    pub n_in: usize,
    pub m_out: usize,
    pub block_size: usize,
    pub slots: usize,
    pub catalyst_quantum_dim: usize,
    pub catalyst_classical_dim: usize,
    pub multishot_success_probability: f64,
    pub multishot_error: f64,
    pub expected_error: f64,
    pub expected_success_probability: f64,
    pub success_probability: f64,
    pub controlled_weight_sum: f64,
    pub catalyst_restoration_error: f64,
    pub output_error: f64,
    pub output_vs_marginal_average: f64,
    pub correlation: Option<CorrelationReport>,
    pub rejected_weight: Option<f64>,
    pub accepted_leakage: Option<f64>,
    pub failure: Option<FailureReport>,
    pub rounds: Vec<RoundReport>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

/// Output marginal of body position `pos`, averaged over branches and
/// renormalized by the total weight.
fn averaged_marginal(e: &FlaggedEnsemble, pos: usize) -> Result<(State, f64)> {
    let mut acc: Option<ComplexMatrix> = None;
    let mut layout = SystemLayout::empty();
    let mut total = 0.0;
    for b in e.branches() {
        let w = b.weight * b.body.trace();
        if w <= 0.0 {
            continue;
        }
        let marg = b.body.partial_trace_positions(&[pos])?;
        layout = marg.layout().clone();
        let m = marg.matrix().scaled(b.weight);
        match &mut acc {
            Some(a) => *a += &m,
            None => acc = Some(m),
        }
        total += w;
    }
    let acc = acc.ok_or_else(|| Error::invariant("accepted_weight", "no accepted branch"))?;
    Ok((State::from_parts(acc.scaled(1.0 / total), layout)?, total))
}

/// Δ(ν_SA, φ ⊗ ν_A) for a state whose first subsystem is S.
pub fn correlation_check(nu_sa: &State, phi: &State) -> Result<CorrelationReport> {
    if !phi.is_pure(1e-10) {
        return Err(Error::InvalidArgument("target must be pure".into()));
    }
    let n = nu_sa.layout().len();
    if n == 0 || nu_sa.layout().dims()[0] != phi.dim() {
        return Err(Error::DimensionMismatch(
            "first subsystem must match the target".into(),
        ));
    }
    let rest: Vec<usize> = (1..n).collect();
    let nu_s = nu_sa.partial_trace_positions(&[0])?;
    let nu_a = nu_sa.partial_trace_positions(&rest)?;
    let prod = kron(phi.matrix(), nu_a.matrix());
    let lhs = 0.5 * tensor::trace_norm(&(nu_sa.matrix() - &prod))?;
    let eps = trace_distance(&nu_s, phi)?;
    let rhs = eps + 3.0 * eps.sqrt();
    Ok(CorrelationReport {
        lhs,
        rhs,
        eps,
        pass: lhs <= rhs + EQ_TOL,
    })
}

/// Branch-wise version over a flagged ensemble (register counted as part of A).
pub fn correlation_check_flagged(
    e: &FlaggedEnsemble,
    phi: &State,
    s_pos: usize,
) -> Result<CorrelationReport> {
    if !phi.is_pure(1e-10) {
        return Err(Error::InvalidArgument("target must be pure".into()));
    }
    let (nu_s, total) = averaged_marginal(e, s_pos)?;
    let mut lhs = 0.0;
    for b in e.branches() {
        if b.weight * b.body.trace() <= 0.0 {
            continue;
        }
        let n = b.body.layout().len();
        let rest: Vec<usize> = (0..n).filter(|&i| i != s_pos).collect();
        // bring S to the front
        let order: Vec<usize> = std::iter::once(s_pos).chain(rest.iter().copied()).collect();
        let body = b.body.permute(&order)?;
        let a = b.body.partial_trace_positions(&rest)?;
        let prod = kron(phi.matrix(), a.matrix());
        lhs += b.weight * 0.5 * tensor::trace_norm(&(body.matrix() - &prod))?;
    }
    lhs /= total;
    let eps = trace_distance(&nu_s, phi)?;
    let rhs = eps + 3.0 * eps.sqrt();
    Ok(CorrelationReport {
        lhs,
        rhs,
        eps,
        pass: lhs <= rhs + EQ_TOL,
    })
}

/// Runs the compiled protocol on `ζ ⊗ ω` and certifies every claim.
pub fn verify(cp: &CatalyticProtocol) -> Result<VerificationReport> {
    let input = cp.joint_input(None)?;
    let run = cp.execute(&input, 0)?;
    let mut checks = Vec::new();

    let controlled_weight_sum = run.after_controlled.total_weight();
    checks.push(Check::at_most(
        "controlled_weight_sum",
        (controlled_weight_sum - 1.0).abs(),
        EQ_TOL,
    ));

    let restored = cp.catalyst_marginal(&run.after_shift, 0)?;
    let restoration = flagged_trace_distance(&restored, &cp.catalyst)?;
    checks.push(Check::at_most("catalyst_restoration", restoration, EQ_TOL));

    let (nu_s, accepted) = averaged_marginal(&run.final_state, 0)?;
    let output_error = trace_distance(&nu_s, &cp.target)?;
    checks.push(Check::at_most(
        "output_error",
        output_error,
        cp.expected_eps + EQ_TOL,
    ));

    let d = cp.source_dim;
    let mut avg = ComplexMatrix::zeros(d, d);
    for mi in &cp.multishot.marginals {
        avg.axpy(C64::new(1.0 / cp.m_out as f64, 0.0), mi.matrix());
    }
    let avg = State::from_parts(avg, nu_s.layout().clone())?;
    let vs_avg = trace_distance(&nu_s, &avg)?;
    checks.push(Check::at_most(
        "output_equals_marginal_average",
        vs_avg,
        EQ_TOL,
    ));

    let success = run.controlled_trace * accepted;
    checks.push(Check::at_most(
        "success_probability",
        (success - cp.expected_p).abs(),
        EQ_TOL,
    ));
    checks.push(Check::at_most(
        "block_size_at_most_n",
        cp.block_size as f64,
        cp.n_in as f64,
    ));

    let (rejected_weight, accepted_leakage) = if matches!(cp.variant, Variant::Block) {
        (None, None)
    } else {
        let (rej, leak) = measurement_weights(cp, &run.after_shift)?;
        let want = 1.0 - cp.m_out as f64 / cp.slots as f64;
        checks.push(Check::at_most(
            "rejected_weight",
            (rej - want).abs(),
            EQ_TOL,
        ));
        checks.push(Check::at_most("accepted_leakage", leak, EQ_TOL));
        (Some(rej), Some(leak))
    };

    let correlation = if cp.target.is_pure(1e-10) {
        let c = correlation_check_flagged(&run.final_state, &cp.target, 0)?;
        checks.push(Check::at_most("correlation_bound", c.lhs, c.rhs + EQ_TOL));
        Some(c)
    } else {
        None
    };

    let failure = failure_report(cp, &input)?;
    if let Some(f) = &failure {
        checks.push(Check::at_most(
            "catalyst_loss_probability",
            f.loss_probability,
            f.failure_probability + EQ_TOL,
        ));
    }

    let pass = checks.iter().all(|c| c.pass);
    Ok(VerificationReport {
        variant: cp.variant,
        n_in: cp.n_in,
        m_out: cp.m_out,
        block_size: cp.block_size,
        slots: cp.slots,
        catalyst_quantum_dim: cp.catalyst_quantum_dim(),
        catalyst_classical_dim: cp.catalyst_classical_dim(),
        multishot_success_probability: cp.multishot.p,
        multishot_error: cp.multishot.max_error(),
        expected_error: cp.expected_eps,
        expected_success_probability: cp.expected_p,
        success_probability: success,
        controlled_weight_sum,
        catalyst_restoration_error: restoration,
        output_error,
        output_vs_marginal_average: vs_avg,
        correlation,
        rejected_weight,
        accepted_leakage,
        failure,
        rounds: Vec::new(),
        checks,
        pass,
    })
}

/// (tr P_W ν′, tr P_W P_{S^k} ν′ P_{S^k}) for the first slot before the measurement.
fn measurement_weights(
    cp: &CatalyticProtocol,
    after_shift: &FlaggedEnsemble,
) -> Result<(f64, f64)> {
    let dt = cp.source_dim.pow(cp.block_size as u32) + 1;
    let pw = ComplexMatrix::unit(dt, dt - 1, dt - 1);
    let ps = &ComplexMatrix::identity(dt) - &pw;
    let mut rejected = 0.0;
    let mut leak = 0.0;
    for b in after_shift.branches() {
        let first = b.body.partial_trace_positions(&[0])?;
        rejected += b.weight * pw.inner(first.matrix()).re;
        let accepted = ps.matmul(first.matrix()).matmul(&ps);
        leak += b.weight * pw.inner(&accepted).re;
    }
    Ok((rejected, leak.abs()))
}

fn failure_report(
    cp: &CatalyticProtocol,
    input: &FlaggedEnsemble,
) -> Result<Option<FailureReport>> {
    let q = 1.0 - cp.multishot_p;
    if q <= EQ_TOL {
        return Ok(None);
    }
    let run = cp.execute_failure(input, 0)?;
    let marg = cp.catalyst_marginal(&run.after_shift, 0)?;
    let dist = flagged_trace_distance(&marg, &cp.catalyst)?;
    Ok(Some(FailureReport {
        model: if cp.failure_from_protocol {
            "protocol"
        } else {
            "junk"
        }
        .into(),
        failure_probability: q,
        catalyst_distance: dist,
        loss_probability: if dist > EQ_TOL { q } else { 0.0 },
    }))
}

/// Uses the catalyst `rounds` times on fresh source blocks, keeping every
/// produced output. Only deterministic protocols qualify.
pub fn simulate_reuse(cp: &CatalyticProtocol, rounds: usize) -> Result<VerificationReport> {
    if (cp.expected_p - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "catalyst reuse needs a deterministic protocol, success probability is {}",
            cp.expected_p
        )));
    }
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be positive".into()));
    }
    let mut report = verify(cp)?;
    let mut state: Option<FlaggedEnsemble> = None;
    for r in 1..=rounds {
        let offset = r - 1;
        let input = cp.joint_input(state.as_ref())?;
        let run = cp.execute(&input, offset)?;
        let restored = cp.catalyst_marginal(&run.after_shift, offset)?;
        let restoration = flagged_trace_distance(&restored, &cp.catalyst)?;
        let mut outputs = Vec::with_capacity(r);
        for i in 0..r {
            outputs.push(averaged_marginal(&run.final_state, i)?.0);
        }
        let errors = outputs
            .iter()
            .map(|o| trace_distance(o, &cp.target))
            .collect::<Result<Vec<_>>>()?;
        let spread = outputs
            .iter()
            .map(|o| trace_distance(o, &outputs[0]))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let max_err = errors.iter().copied().fold(0.0, f64::max);
        report.checks.push(Check::at_most(
            &format!("round_{r}_catalyst_restoration"),
            restoration,
            EQ_TOL,
        ));
        report.checks.push(Check::at_most(
            &format!("round_{r}_output_spread"),
            spread,
            EQ_TOL,
        ));
        report.checks.push(Check::at_most(
            &format!("round_{r}_output_error"),
            max_err,
            cp.expected_eps + EQ_TOL,
        ));
        report.rounds.push(RoundReport {
            round: r,
            catalyst_restoration_error: restoration,
            output_errors: errors,
            output_spread: spread,
        });
        state = Some(run.final_state);
    }
    report.pass = report.checks.iter().all(|c| c.pass);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qubit() -> SystemLayout {
        SystemLayout::single("S", 2)
    }

    fn identity_protocol() -> MultiShotProtocol {
        let rho = State::basis(0, qubit()).unwrap();
        MultiShotProtocol::new(
            "identity",
            QuantumOp::identity(qubit()),
            None,
            1,
            1,
            rho.clone(),
            rho,
            0.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn shape_of_fifteen_to_five() {
        let s = block_catalyst_shape(15, 5).unwrap();
        assert_eq!(s.block_size, 3);
        assert_eq!(s.branches, 5);
        assert!(block_catalyst_shape(2, 3).is_err());
    }

    #[test]
    fn identity_protocol_is_trivially_catalytic() {
        let p = identity_protocol();
        let pi = State::maximally_mixed(qubit()).unwrap();
        let cp = convert_to_catalytic(&p, &pi).unwrap();
        assert_eq!(cp.block_size, 1);
        assert_eq!(cp.catalyst.len(), 1);
        assert_eq!(cp.catalyst.body_dim(), 1);
        let r = verify(&cp).unwrap();
        assert!(r.pass, "{:?}", r.failed_checks());
        assert_eq!(r.catalyst_restoration_error, 0.0);
        assert!(r.output_error.abs() < 1e-15);
        assert!((r.success_probability - 1.0).abs() < 1e-15);
        assert!(r.failure.is_none());
    }

    #[test]
    fn wrong_declared_values_are_rejected() {
        let rho = State::basis(0, qubit()).unwrap();
        let one = State::basis(1, qubit()).unwrap();
        let bad = MultiShotProtocol::new(
            "bad",
            QuantumOp::identity(qubit()),
            None,
            1,
            1,
            rho.clone(),
            one,
            0.5,
            1.0,
        );
        assert!(matches!(bad, Err(Error::InvariantViolation { .. })));
        let bad_p = MultiShotProtocol::new(
            "bad",
            QuantumOp::identity(qubit()),
            None,
            1,
            1,
            rho.clone(),
            rho,
            0.0,
            0.9,
        );
        assert!(bad_p.is_err());
    }

    #[test]
    fn correlation_of_product_is_zero() {
        let phi = State::basis(0, qubit()).unwrap();
        let omega = State::maximally_mixed(SystemLayout::single("A", 3)).unwrap();
        let c = correlation_check(&phi.tensor(&omega).unwrap(), &phi).unwrap();
        assert!(c.lhs.abs() < 1e-15 && c.eps.abs() < 1e-15 && c.pass);
        let mixed = State::maximally_mixed(qubit()).unwrap();
        assert!(correlation_check(&mixed.tensor(&omega).unwrap(), &mixed).is_err());
    }

    #[test]
    fn reuse_rejects_probabilistic_protocols() {
        let p = identity_protocol();
        let pi = State::maximally_mixed(qubit()).unwrap();
        let mut cp = convert_to_catalytic(&p, &pi).unwrap();
        cp.expected_p = 0.5;
        assert!(simulate_reuse(&cp, 2).is_err());
    }

    #[test]
    fn tradeoff_rejects_bad_block_size() {
        let p = identity_protocol();
        assert!(tradeoff_convert(&p, 0, false).is_err());
        assert!(tradeoff_convert(&p, 2, false).is_err());
    }
}
