//! Catalytic channel transformations.
//!
//! Given a code turning `N^{⊗n}` into `P^n ≈ M^{⊗n}`, the catalyst channel
//!
//! ```text
//! C_n = (1/n) Σ_k N^{⊗(k−1)} ⊗ P^n_{1:n−k} ⊗ |k⟩⟨k|
//! ```
//!
//! together with one fresh use of `N` is turned into `M ⊗ C_n` up to
//! diamond error `ε = ‖P^n − M^{⊗n}‖_⋄`. Flagged channels are kept
//! branch-wise: distances are reported per branch, as a weighted sum (an
//! upper bound on the flagged diamond distance) and as a maximum.

use serde::{Deserialize, Serialize};

use crate::catalysis::Check;
use crate::channels::{measure_prepare, reduced_channel, QuantumOp};
use crate::error::{Error, Result};
use crate::optim::{channel_mutual_information, continuity_bound, diamond_distance};
use crate::states::State;
use crate::tensor::{cyclic_forward, trace_norm, SystemLayout};

/// Equality of channels that agree by construction, via the Choi bound.
pub const MARGINAL_TOL: f64 = 1e-8;
pub const TELESCOPING_TOL: f64 = 1e-9;
/// Slack for inequalities between SDP values.
pub const SDP_SLACK: f64 = 1e-7;
/// Slots are capped so every diamond SDP stays small.
pub const MAX_SLOTS: usize = 3;

#[derive(Clone, Debug)]
pub struct ChannelBranch {
    pub weight: f64,
    pub op: QuantumOp,
    pub label: usize,
}

/// (1/n) Σ_k Φ_k ⊗ |k⟩⟨k|, kept branch-wise.
#[derive(Clone, Debug)]
pub struct FlaggedChannel {
    branches: Vec<ChannelBranch>,
}

impl FlaggedChannel {
    pub fn new(mut branches: Vec<ChannelBranch>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidArgument(
                "flagged channel without branches".into(),
            ));
        }
        let (din, dout) = (branches[0].op.din(), branches[0].op.dout());
        let mut total = 0.0;
        for (i, b) in branches.iter().enumerate() {
            if b.op.din() != din || b.op.dout() != dout {
                return Err(Error::DimensionMismatch(format!(
                    "branch {} acts {} -> {}, expected {din} -> {dout}",
                    b.label,
                    b.op.din(),
                    b.op.dout()
                )));
            }
            if branches[..i].iter().any(|o| o.label == b.label) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate label {}",
                    b.label
                )));
            }
            total += b.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "branch weights sum to {total}"
            )));
        }
        branches.sort_by_key(|b| b.label);
        Ok(FlaggedChannel { branches })
    }

    pub fn branches(&self) -> &[ChannelBranch] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn branch(&self, label: usize) -> Option<&ChannelBranch> {
        self.branches.iter().find(|b| b.label == label)
    }

    pub fn map_ops(&self, mut f: impl FnMut(&ChannelBranch) -> Result<QuantumOp>) -> Result<Self> {
        let branches = self
            .branches
            .iter()
            .map(|b| {
                Ok(ChannelBranch {
                    weight: b.weight,
                    op: f(b)?,
                    label: b.label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FlaggedChannel::new(branches)
    }

    /// Labels k → k+1, n → 1.
    pub fn shift_labels(&self) -> Result<Self> {
        let n = self.branches.len();
        FlaggedChannel::new(
            self.branches
                .iter()
                .map(|b| ChannelBranch {
                    weight: b.weight,
                    op: b.op.clone(),
                    label: b.label % n + 1,
                })
                .collect(),
        )
    }

    /// The flag as an extra output subsystem `F` of dimension max label.
    pub fn to_op(&self) -> Result<QuantumOp> {
        let r = self.branches.iter().map(|b| b.label).max().unwrap_or(1);
        let terms = self
            .branches
            .iter()
            .map(|b| {
                let flag = State::basis(b.label - 1, SystemLayout::single("F", r))?;
                let tag = QuantumOp::append(b.op.output().clone(), &flag)?;
                Ok((b.weight, b.op.then(&tag)?))
            })
            .collect::<Result<Vec<_>>>()?;
        QuantumOp::mixture(terms)
    }
}

/// Pre/post-processing with memory: Π(Φ) = post ∘ (Φ ⊗ id_R) ∘ pre.
#[derive(Clone, Debug)]
pub struct ChannelCode {
    pub name: String,
    /// `A^n → A^n ⊗ R` (no `R` when `memory_dim == 1`).
    pub pre: QuantumOp,
    /// `B^n ⊗ R → B^n`.
    pub post: QuantumOp,
    pub memory_dim: usize,
}

impl ChannelCode {
    pub fn new(
        name: impl Into<String>,
        pre: QuantumOp,
        post: QuantumOp,
        memory_dim: usize,
    ) -> Result<Self> {
        if !pre.is_trace_preserving() || !post.is_trace_preserving() {
            return Err(Error::invariant(
                "code_cptp",
                "pre and post processing must be channels",
            ));
        }
        if memory_dim == 0
            || !pre.dout().is_multiple_of(memory_dim)
            || !post.din().is_multiple_of(memory_dim)
        {
            return Err(Error::DimensionMismatch(format!(
                "memory dimension {memory_dim} does not divide the code's interfaces"
            )));
        }
        Ok(ChannelCode {
            name: name.into(),
            pre,
            post,
            memory_dim,
        })
    }

    /// Π = id on `n` slots.
    pub fn trivial(d_in: usize, d_out: usize, n: usize) -> Result<Self> {
        ChannelCode::new(
            "trivial",
            QuantumOp::identity(SystemLayout::uniform("A", d_in, n)),
            QuantumOp::identity(SystemLayout::uniform("B", d_out, n)),
            1,
        )
    }

    /// post = (1 − q)·id + q·MP^{⊗n} with MP the computational-basis
    /// measure-and-prepare channel.
    pub fn measure_and_prepare(d_in: usize, d_out: usize, n: usize, q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidArgument(format!(
                "mixing weight {q} outside [0,1]"
            )));
        }
        let b = SystemLayout::uniform("B", d_out, n);
        let mp = measure_prepare(SystemLayout::single("B", d_out))?
            .tensor_power(n)
            .relabeled(b.clone(), b.clone())?;
        let post = QuantumOp::mixture(vec![(1.0 - q, QuantumOp::identity(b)), (q, mp)])?;
        ChannelCode::new(
            format!("measure_prepare(q={q})"),
            QuantumOp::identity(SystemLayout::uniform("A", d_in, n)),
            post,
            1,
        )
    }

    pub fn apply(&self, phi: &QuantumOp) -> Result<QuantumOp> {
        let middle = if self.memory_dim == 1 {
            phi.clone()
        } else {
            QuantumOp::tensor(
                phi,
                &QuantumOp::identity(SystemLayout::single("R", self.memory_dim)),
            )
        };
        QuantumOp::sequence(vec![self.pre.clone(), middle, self.post.clone()])
    }
}

fn slot_layouts(d_in: usize, d_out: usize, n: usize) -> (SystemLayout, SystemLayout) {
    (
        SystemLayout::uniform("A", d_in, n),
        SystemLayout::uniform("B", d_out, n),
    )
}

/// `op` relabeled to `A1..An → B1..Bn`.
fn on_slots(op: &QuantumOp, d_in: usize, d_out: usize, n: usize) -> Result<QuantumOp> {
    let (a, b) = slot_layouts(d_in, d_out, n);
    op.clone().relabeled(a, b)
}

fn power(op: &QuantumOp, k: usize) -> Result<QuantumOp> {
    let (d_in, d_out) = (op.din(), op.dout());
    on_slots(&op.tensor_power(k), d_in, d_out, k)
}

fn tensor(
    a: &QuantumOp,
    b: &QuantumOp,
    d_in: usize,
    d_out: usize,
    slots: usize,
) -> Result<QuantumOp> {
    on_slots(&QuantumOp::tensor(a, b), d_in, d_out, slots)
}

/// Slots `0..keep` of an `n`-slot channel, the rest fed π and traced.
fn reduced_first(
    p: &QuantumOp,
    d_in: usize,
    d_out: usize,
    n: usize,
    keep: usize,
) -> Result<QuantumOp> {
    if keep == n {
        return on_slots(p, d_in, d_out, n);
    }
    if keep == 0 {
        return Ok(QuantumOp::identity(SystemLayout::empty()));
    }
    let p = on_slots(p, d_in, d_out, n)?;
    let kin: Vec<String> = (1..=keep).map(|i| format!("A{i}")).collect();
    let kout: Vec<String> = (1..=keep).map(|i| format!("B{i}")).collect();
    let r = reduced_channel(&p, &kin, &kout, None)?;
    on_slots(&r, d_in, d_out, keep)
}

/// Slots `1..n` of an `n`-slot channel, slot 0 fed π and traced.
fn reduced_tail(p: &QuantumOp, d_in: usize, d_out: usize, n: usize) -> Result<QuantumOp> {
    if n == 1 {
        return Ok(QuantumOp::identity(SystemLayout::empty()));
    }
    let p = on_slots(p, d_in, d_out, n)?;
    let kin: Vec<String> = (2..=n).map(|i| format!("A{i}")).collect();
    let kout: Vec<String> = (2..=n).map(|i| format!("B{i}")).collect();
    on_slots(&reduced_channel(&p, &kin, &kout, None)?, d_in, d_out, n - 1)
}

fn slot_dims(n_ch: &QuantumOp) -> (usize, usize) {
    (n_ch.din(), n_ch.dout())
}

fn check_slots(n: usize) -> Result<()> {
    if n == 0 || n > MAX_SLOTS {
        return Err(Error::InvalidArgument(format!(
            "slot count {n} outside 1..={MAX_SLOTS}"
        )));
    }
    Ok(())
}

/// C_n = (1/n) Σ_{k=1}^{n} N^{⊗(k−1)} ⊗ P^n_{1:n−k} ⊗ |k⟩⟨k|
pub fn build_channel_catalyst(
    n_ch: &QuantumOp,
    p_n: &QuantumOp,
    n: usize,
) -> Result<FlaggedChannel> {
    check_slots(n)?;
    let (da, db) = slot_dims(n_ch);
    if Some(p_n.din()) != da.checked_pow(n as u32) || Some(p_n.dout()) != db.checked_pow(n as u32) {
        return Err(Error::DimensionMismatch(format!(
            "P^n acts {} -> {}, not on {n} slots of {da} -> {db}",
            p_n.din(),
            p_n.dout()
        )));
    }
    let branches = (1..=n)
        .map(|k| {
            let head = power(n_ch, k - 1)?;
            let tail = reduced_first(p_n, da, db, n, n - k)?;
            Ok(ChannelBranch {
                weight: 1.0 / n as f64,
                op: tensor(&head, &tail, da, db, n - 1)?,
                label: k,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FlaggedChannel::new(branches)
}

/// ½‖J_a − J_b‖₁, an upper bound on ½‖a − b‖_⋄.
pub fn choi_bound_distance(a: &QuantumOp, b: &QuantumOp) -> Result<f64> {
    if a.din() != b.din() || a.dout() != b.dout() {
        return Err(Error::DimensionMismatch(
            "channels of different shapes".into(),
        ));
    }
    Ok(0.5 * trace_norm(&(&a.choi()? - &b.choi()?))?)
}

/// ½‖a − b‖_⋄; channels equal to machine precision skip the SDP.
pub fn channel_distance(a: &QuantumOp, b: &QuantumOp, tol: f64) -> Result<f64> {
    let bound = choi_bound_distance(a, b)?;
    if bound <= 1e-12 || a.din() == 1 {
        return Ok(bound);
    }
    Ok(diamond_distance(a, b, tol)?.min(bound))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BranchDistances {
    pub per_branch: Vec<f64>,
    pub weighted: f64,
    pub max: f64,
}

fn branch_distances(
    a: &FlaggedChannel,
    mut f: impl FnMut(&ChannelBranch) -> Result<f64>,
) -> Result<BranchDistances> {
    let per_branch = a
        .branches()
        .iter()
        .map(&mut f)
        .collect::<Result<Vec<_>>>()?;
    let weighted = a
        .branches()
        .iter()
        .zip(&per_branch)
        .map(|(b, d)| b.weight * d)
        .sum();
    let max = per_branch.iter().copied().fold(0.0, f64::max);
    Ok(BranchDistances {
        per_branch,
        weighted,
        max,
    })
}

/// Per-branch diamond distance between flagged channels with equal labels.
pub fn flagged_channel_distance(
    a: &FlaggedChannel,
    b: &FlaggedChannel,
    tol: f64,
) -> Result<BranchDistances> {
    branch_distances(a, |x| {
        let y = b
            .branch(x.label)
            .ok_or_else(|| Error::InvalidArgument(format!("label {} missing", x.label)))?;
        channel_distance(&x.op, &y.op, tol)
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TriangleTerm {
    pub label: usize,
    /// ½‖P_{1:n−k+1} − P_{1:n−k} ⊗ M‖_⋄
    pub lhs: f64,
    /// ½‖P_{1:n−k+1} − M^{⊗(n−k+1)}‖_⋄
    pub upper_term: f64,
    /// ½‖P_{1:n−k} − M^{⊗(n−k)}‖_⋄
    pub lower_term: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MutualInfoSlack {
    pub i_source_with_catalyst: f64,
    pub i_target_with_catalyst: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ChannelReport {
    pub n: usize,
    pub code: String,
    /// ‖P^n − M^{⊗n}‖_⋄
    pub eps: f64,
    /// Choi-bound residual of tr_{Bn} ∘ G₂((·) ⊗ π) against C_n.
    pub g2_marginal: BranchDistances,
    /// Choi-bound residual of the slot-1-traced G₃ against C_n.
    pub g3_marginal: BranchDistances,
    /// ½‖G₂ − C_n ⊗ M‖_⋄ branch-wise.
    pub g2_vs_target: BranchDistances,
    /// ½‖G₃ − M ⊗ C_n‖_⋄ branch-wise.
    pub g3_vs_target: BranchDistances,
    pub triangle: Vec<TriangleTerm>,
    /// Choi-bound residuals of tr_{B_{i+1}} ∘ P_{1:i+1}((·) ⊗ π) against P_{1:i}.
    pub telescoping: Vec<f64>,
    /// ½‖P_{A′→B′} − M‖_⋄ for the slot-1 channel of G₃.
    pub marginal_channel_distance: f64,
    pub mutual_information: Option<MutualInfoSlack>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

fn check(name: &str, value: f64, threshold: f64) -> Check {
    Check {
        name: name.into(),
        value,
        threshold,
        pass: value.is_finite() && value <= threshold,
    }
}

/// Runs the three-step construction and certifies each claim about it.
pub fn catalytic_channel_convert(
    n_ch: &QuantumOp,
    code: &ChannelCode,
    m_ch: &QuantumOp,
    n: usize,
    tol: f64,
    with_mutual_info: bool,
) -> Result<ChannelReport> {
    check_slots(n)?;
    if !n_ch.is_trace_preserving() || !m_ch.is_trace_preserving() {
        return Err(Error::InvalidArgument(
            "source and target must be channels".into(),
        ));
    }
    let (da, db) = slot_dims(n_ch);
    if m_ch.din() != da || m_ch.dout() != db {
        return Err(Error::DimensionMismatch(
            "source and target channels differ in shape".into(),
        ));
    }
    let m_ch = on_slots(m_ch, da, db, 1)?;
    let n_one = on_slots(n_ch, da, db, 1)?;
    let nn = power(&n_one, n)?;
    let p = on_slots(&code.apply(&nn)?, da, db, n)?;
    let eps = 2.0 * channel_distance(&p, &power(&m_ch, n)?, tol)?;
    let catalyst = build_channel_catalyst(&n_one, &p, n)?;

    let with_source = catalyst.map_ops(|b| tensor(&n_one, &b.op, da, db, n))?;
    let g1 = with_source.map_ops(|b| {
        if b.label == n {
            on_slots(&code.apply(&b.op)?, da, db, n)
        } else {
            Ok(b.op.clone())
        }
    })?;
    let g2 = g1.shift_labels()?;
    let (a_n, b_n) = slot_layouts(da, db, n);
    let s_a = QuantumOp::permutation(a_n.clone(), (0..n).map(|j| (j + 1) % n).collect())?
        .relabeled(a_n.clone(), a_n)?;
    let s_b =
        QuantumOp::permutation(b_n.clone(), cyclic_forward(n))?.relabeled(b_n.clone(), b_n)?;
    let g3 = g2.map_ops(|b| {
        on_slots(
            &QuantumOp::sequence(vec![s_a.clone(), b.op.clone(), s_b.clone()])?,
            da,
            db,
            n,
        )
    })?;

    let target_of = |label: usize| catalyst.branch(label).expect("same labels").op.clone();
    let g2_marginal = branch_distances(&g2, |b| {
        choi_bound_distance(
            &reduced_first(&b.op, da, db, n, n - 1)?,
            &target_of(b.label),
        )
    })?;
    let g3_marginal = branch_distances(&g3, |b| {
        choi_bound_distance(&reduced_tail(&b.op, da, db, n)?, &target_of(b.label))
    })?;
    let g2_vs_target = branch_distances(&g2, |b| {
        channel_distance(&b.op, &tensor(&target_of(b.label), &m_ch, da, db, n)?, tol)
    })?;
    let g3_vs_target = branch_distances(&g3, |b| {
        channel_distance(&b.op, &tensor(&m_ch, &target_of(b.label), da, db, n)?, tol)
    })?;

    let reduced: Vec<QuantumOp> = (0..=n)
        .map(|i| reduced_first(&p, da, db, n, i))
        .collect::<Result<_>>()?;
    let m_pow: Vec<QuantumOp> = (0..=n).map(|i| power(&m_ch, i)).collect::<Result<_>>()?;
    let mut triangle = Vec::with_capacity(n);
    for k in 1..=n {
        let j = n - k;
        triangle.push(TriangleTerm {
            label: k,
            lhs: channel_distance(
                &reduced[j + 1],
                &tensor(&reduced[j], &m_ch, da, db, j + 1)?,
                tol,
            )?,
            upper_term: channel_distance(&reduced[j + 1], &m_pow[j + 1], tol)?,
            lower_term: channel_distance(&reduced[j], &m_pow[j], tol)?,
        });
    }
    let telescoping = (0..n)
        .map(|i| {
            choi_bound_distance(
                &reduced_first(&reduced[i + 1], da, db, i + 1, i)?,
                &reduced[i],
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let slot_one = g3
        .branches()
        .iter()
        .map(|b| Ok((b.weight, reduced_first(&b.op, da, db, n, 1)?)))
        .collect::<Result<Vec<_>>>()?;
    let slot_one = on_slots(&QuantumOp::mixture(slot_one)?, da, db, 1)?;
    let marginal_channel_distance = channel_distance(&slot_one, &m_ch, tol)?;

    let mut checks = vec![
        check("g2_marginal_equals_catalyst", g2_marginal.max, MARGINAL_TOL),
        check("g3_marginal_equals_catalyst", g3_marginal.max, MARGINAL_TOL),
        check("g3_within_eps", g3_vs_target.weighted, eps + SDP_SLACK),
        check(
            "permutation_invariance",
            (g3_vs_target.weighted - g2_vs_target.weighted).abs(),
            SDP_SLACK,
        ),
        check(
            "marginal_channel_within_eps",
            marginal_channel_distance,
            g3_vs_target.weighted + SDP_SLACK,
        ),
        check(
            "telescoping",
            telescoping.iter().copied().fold(0.0, f64::max),
            TELESCOPING_TOL,
        ),
    ];
    for (t, g) in triangle.iter().zip(&g2_vs_target.per_branch) {
        checks.push(check(
            &format!("branch_{}_reduction", t.label),
            *g,
            t.lhs + SDP_SLACK,
        ));
        checks.push(check(
            &format!("branch_{}_triangle", t.label),
            t.lhs,
            t.upper_term + t.lower_term + SDP_SLACK,
        ));
        checks.push(check(
            &format!("branch_{}_monotone", t.label),
            t.upper_term.max(t.lower_term),
            eps / 2.0 + SDP_SLACK,
        ));
    }

    let mutual_information = if with_mutual_info {
        let c_op = catalyst.to_op()?;
        let nc = QuantumOp::tensor(&n_one, &c_op);
        let mc = QuantumOp::tensor(&m_ch, &c_op);
        let i_nc = channel_mutual_information(&nc, tol)?.value;
        let i_mc = channel_mutual_information(&mc, tol)?.value;
        let d_ab = mc.din() * mc.dout();
        let slack = continuity_bound((2.0 * g3_vs_target.weighted).min(1.0), d_ab)?;
        let pass = i_mc <= i_nc + slack + 1e-6;
        checks.push(check("mutual_information_slack", i_mc - i_nc, slack + 1e-6));
        Some(MutualInfoSlack {
            i_source_with_catalyst: i_nc,
            i_target_with_catalyst: i_mc,
            slack,
            pass,
        })
    } else {
        None
    };

    let pass = checks.iter().all(|c| c.pass);
    Ok(ChannelReport {
        n,
        code: code.name.clone(),
        eps,
        g2_marginal,
        g3_marginal,
        g2_vs_target,
        g3_vs_target,
        triangle,
        telescoping,
        marginal_channel_distance,
        mutual_information,
        checks,
        pass,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct MutualInfoCriterion {
    pub i_source: f64,
    pub i_target: f64,
    pub transformable: bool,
}

/// Necessary condition I(N) ≥ I(M) for a catalytic transformation N → M.
pub fn mutual_info_criterion(
    n_ch: &QuantumOp,
    m_ch: &QuantumOp,
    tol: f64,
) -> Result<MutualInfoCriterion> {
    let i_source = channel_mutual_information(n_ch, tol)?.value;
    let i_target = channel_mutual_information(m_ch, tol)?.value;
    Ok(MutualInfoCriterion {
        i_source,
        i_target,
        transformable: i_source >= i_target - 1e-6,
    })
}
