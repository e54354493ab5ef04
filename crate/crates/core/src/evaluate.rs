//! Exact operating characteristics of a plan, plus independent oracles.
//!
//! The primary route is a forward probability pass: starting from unit mass
//! at the empty history, mass flows along continue states and is banked when
//! the plan stops, separately under every hypothesis and every sampling-cost
//! mixture component. That yields the acceptance matrix `alpha[i][j]`
//! (probability of accepting j when i is true, diagonal = correct
//! acceptance), gross errors `beta`, expected sample sizes, and the
//! Lagrangian `ASN + sum lambda_ij alpha_ij` of the plan.
//!
//! Two slower routes exist to check the fast one and the optimizer itself:
//!
//! - [`oracle_oc`] re-derives the same characteristics by enumerating every
//!   observation sequence one by one.
//! - [`exhaustive_minimum_value`] minimizes the Lagrangian over every
//!   deterministic stage-wise stopping rule on the full history tree, which
//!   the backward induction's value must match exactly.
//!
//! Mass that reaches the final stage on a continue instruction (possible
//! only in hand-crafted plans) is reported as a stop-mass deficit, never
//! silently dropped; expected sample sizes then cover the stopped mass only.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CountState, ProcessModel, State, StateKind};
use crate::risk::{check_compatible, stop_risk, LagrangeWeights};
use crate::solver::{Action, TestPlan};

/// Cap on full-history enumeration for the oracle and the brute-force
/// minimizer.
pub const ENUMERATION_CAP: u128 = 10_000_000;

/// Interior decision nodes the brute-force minimizer will enumerate rules
/// over; the rule count is 2 to this power.
pub const EXHAUSTIVE_NODE_CAP: u32 = 22;

/// Stage-risk integrals must fall to this fraction of the no-observation
/// risk for the truncatability verdict.
pub const TRUNCATABILITY_FACTOR: f64 = 1e-3;

/// How acceptance ties are resolved when reporting characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Accept the smallest index in the tie set (the plan's recorded label).
    Deterministic,
    /// Split the stopping mass equally over the tie set.
    UniformOverTies,
}

/// Exact characteristics of a plan under its model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    /// `alpha[i][j]`: probability of accepting hypothesis j when i is true.
    /// Row sums equal 1 minus the corresponding stop-mass deficit.
    pub alpha: Vec<Vec<f64>>,
    /// Gross error under each hypothesis: `beta[i] = sum_{j != i} alpha[i][j]`.
    pub beta: Vec<f64>,
    /// Expected sample size under each hypothesis (stopped mass only).
    pub asn_by_hypothesis: Vec<f64>,
    /// Expected sample size under each sampling-cost mixture component.
    pub asn_by_component: Vec<f64>,
    /// Weighted expected sample size: the ASN the design minimizes.
    pub asn_weighted: f64,
    /// Mass never stopped within the plan horizon, per hypothesis.
    pub deficit_by_hypothesis: Vec<f64>,
    /// Mass never stopped within the plan horizon, per mixture component.
    pub deficit_by_component: Vec<f64>,
    /// Weighted stop-mass deficit under the sampling-cost mixture.
    pub deficit_weighted: f64,
    /// `asn_weighted + sum_{i != j} lambda_ij alpha[i][j]`.
    pub lagrangian: f64,
}

struct Pass {
    accept_mass: Vec<f64>,
    asn: f64,
    deficit: f64,
}

enum Dist {
    Hypothesis(usize),
    Component(usize),
}

fn check_plan(model: &ProcessModel, plan: &TestPlan) -> Result<()> {
    if plan.state_kind != model.state_kind() {
        return Err(Error::StateMismatch(
            "plan was built for a different state family than the model".into(),
        ));
    }
    if let Some(limit) = model.horizon_limit() {
        if plan.horizon > limit {
            return Err(Error::BeyondHorizon {
                stage: plan.horizon,
                horizon: limit,
            });
        }
    }
    Ok(())
}

fn bank_decision(accept_mass: &mut [f64], entry_decision: &crate::risk::DecisionLabel, mass: f64, tie_break: TieBreak) {
    match tie_break {
        TieBreak::Deterministic => accept_mass[entry_decision.accept] += mass,
        TieBreak::UniformOverTies => {
            let share = mass / entry_decision.tie_set.len() as f64;
            for &j in &entry_decision.tie_set {
                accept_mass[j] += share;
            }
        }
    }
}

fn forward_pass(
    model: &ProcessModel,
    plan: &TestPlan,
    dist: Dist,
    tie_break: TieBreak,
) -> Result<Pass> {
    let k = model.k();
    let step_pmf = match (&dist, model) {
        (Dist::Hypothesis(i), ProcessModel::Iid(m)) => Some(m.pmfs()[*i].clone()),
        (Dist::Component(e), ProcessModel::Iid(m)) => Some(m.asn_mixture()[*e].pmf.clone()),
        _ => None,
    };
    let direct_mass = |state: &State| -> Result<f64> {
        match &dist {
            Dist::Hypothesis(i) => model.joint_density(*i, state),
            Dist::Component(e) => model.asn_component_density(*e, state),
        }
    };

    let mut accept_mass = vec![0.0; k];
    let mut asn = 0.0;
    let mut deficit = 0.0;
    let mut frontier: BTreeMap<State, f64> = BTreeMap::new();
    frontier.insert(model.root_state(), 1.0);

    for n in 1..=plan.horizon {
        let mut next: BTreeMap<State, f64> = BTreeMap::new();
        for (state, mass) in &frontier {
            match &step_pmf {
                Some(pmf) => {
                    // independent observations: mass splits by the step pmf
                    for (a, succ) in model.successors(state) {
                        let m = mass * pmf[a as usize];
                        if m > 0.0 {
                            *next.entry(succ).or_insert(0.0) += m;
                        }
                    }
                }
                None => {
                    // joint tables: an alive history carries exactly its
                    // joint mass, so children are direct lookups
                    for (_, succ) in model.successors(state) {
                        let m = direct_mass(&succ)?;
                        if m > 0.0 {
                            next.insert(succ, m);
                        }
                    }
                }
            }
        }
        frontier = BTreeMap::new();
        for (state, mass) in next {
            let entry = plan.entry(&state)?;
            match entry.action {
                Action::Stop => {
                    asn += n as f64 * mass;
                    let decision = entry.decision.as_ref().ok_or_else(|| {
                        Error::InvalidPlan(format!("stop entry at `{state}` has no decision"))
                    })?;
                    bank_decision(&mut accept_mass, decision, mass, tie_break);
                }
                Action::Continue => {
                    if n == plan.horizon {
                        deficit += mass;
                    } else {
                        frontier.insert(state, mass);
                    }
                }
            }
        }
    }

    Ok(Pass {
        accept_mass,
        asn,
        deficit,
    })
}

fn assemble(
    model: &ProcessModel,
    weights: &LagrangeWeights,
    hyp_passes: Vec<Pass>,
    comp_passes: Vec<Pass>,
) -> OperatingCharacteristics {
    let k = model.k();
    let alpha: Vec<Vec<f64>> = hyp_passes.iter().map(|p| p.accept_mass.clone()).collect();
    let beta: Vec<f64> = (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| j != i)
                .map(|j| alpha[i][j])
                .sum()
        })
        .collect();
    let asn_by_hypothesis: Vec<f64> = hyp_passes.iter().map(|p| p.asn).collect();
    let deficit_by_hypothesis: Vec<f64> = hyp_passes.iter().map(|p| p.deficit).collect();
    let asn_by_component: Vec<f64> = comp_passes.iter().map(|p| p.asn).collect();
    let deficit_by_component: Vec<f64> = comp_passes.iter().map(|p| p.deficit).collect();
    let cost_weights = model.asn_weights();
    let asn_weighted = cost_weights
        .iter()
        .zip(&asn_by_component)
        .map(|(w, a)| w * a)
        .sum();
    let deficit_weighted = cost_weights
        .iter()
        .zip(&deficit_by_component)
        .map(|(w, d)| w * d)
        .sum();
    let mut lagrangian = asn_weighted;
    for (i, j) in weights.error_pairs() {
        lagrangian += weights.get(i, j) * alpha[i][j];
    }
    OperatingCharacteristics {
        alpha,
        beta,
        asn_by_hypothesis,
        asn_by_component,
        asn_weighted,
        deficit_by_hypothesis,
        deficit_by_component,
        deficit_weighted,
        lagrangian,
    }
}

/// Computes the plan's exact operating characteristics by forward
/// probability passes on the model's state space.
pub fn exact_oc(
    model: &ProcessModel,
    weights: &LagrangeWeights,
    plan: &TestPlan,
    tie_break: TieBreak,
) -> Result<OperatingCharacteristics> {
    check_compatible(model, weights)?;
    check_plan(model, plan)?;
    let hyp_passes = (0..model.k())
        .map(|i| forward_pass(model, plan, Dist::Hypothesis(i), tie_break))
        .collect::<Result<Vec<_>>>()?;
    let comp_passes = (0..model.asn_weights().len())
        .map(|e| forward_pass(model, plan, Dist::Component(e), tie_break))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(model, weights, hyp_passes, comp_passes))
}

fn native_state(model: &ProcessModel, history: &[u8]) -> State {
    match model.state_kind() {
        StateKind::History => State::History(history.to_vec()),
        StateKind::Counts => {
            let mut counts = vec![0u32; model.alphabet().size()];
            for &s in history {
                counts[s as usize] += 1;
            }
            State::Counts(CountState::new(counts))
        }
    }
}

/// Re-derives the operating characteristics by walking every observation
/// sequence explicitly, with per-sequence probabilities built up one symbol
/// at a time. Slow by design; use it to check [`exact_oc`].
pub fn oracle_oc(
    model: &ProcessModel,
    weights: &LagrangeWeights,
    plan: &TestPlan,
    tie_break: TieBreak,
) -> Result<OperatingCharacteristics> {
    check_compatible(model, weights)?;
    check_plan(model, plan)?;
    let paths = (model.alphabet().size() as u128).saturating_pow(plan.horizon as u32);
    if paths > ENUMERATION_CAP {
        return Err(Error::EnumerationCapExceeded {
            histories: paths,
            cap: ENUMERATION_CAP,
        });
    }

    let k = model.k();
    let n_comp = model.asn_weights().len();
    let mut hyp_passes: Vec<Pass> = (0..k)
        .map(|_| Pass {
            accept_mass: vec![0.0; k],
            asn: 0.0,
            deficit: 0.0,
        })
        .collect();
    let mut comp_passes: Vec<Pass> = (0..n_comp)
        .map(|_| Pass {
            accept_mass: vec![0.0; k],
            asn: 0.0,
            deficit: 0.0,
        })
        .collect();

    // probs holds per-path probabilities: hypotheses first, then components
    let mut history: Vec<u8> = Vec::new();
    let root_probs = vec![1.0; k + n_comp];
    walk_paths(
        model,
        plan,
        tie_break,
        &mut history,
        &root_probs,
        &mut hyp_passes,
        &mut comp_passes,
    )?;
    Ok(assemble(model, weights, hyp_passes, comp_passes))
}

#[allow(clippy::too_many_arguments)]
fn walk_paths(
    model: &ProcessModel,
    plan: &TestPlan,
    tie_break: TieBreak,
    history: &mut Vec<u8>,
    probs: &[f64],
    hyp_passes: &mut [Pass],
    comp_passes: &mut [Pass],
) -> Result<()> {
    let k = model.k();
    let n = history.len();
    if n > 0 {
        let state = native_state(model, history);
        let entry = plan.entry(&state)?;
        match entry.action {
            Action::Stop => {
                let decision = entry.decision.as_ref().ok_or_else(|| {
                    Error::InvalidPlan(format!("stop entry at `{state}` has no decision"))
                })?;
                for (i, pass) in hyp_passes.iter_mut().enumerate() {
                    pass.asn += n as f64 * probs[i];
                    bank_decision(&mut pass.accept_mass, decision, probs[i], tie_break);
                }
                for (e, pass) in comp_passes.iter_mut().enumerate() {
                    pass.asn += n as f64 * probs[k + e];
                }
                return Ok(());
            }
            Action::Continue if n == plan.horizon => {
                for (i, pass) in hyp_passes.iter_mut().enumerate() {
                    pass.deficit += probs[i];
                }
                for (e, pass) in comp_passes.iter_mut().enumerate() {
                    pass.deficit += probs[k + e];
                }
                return Ok(());
            }
            Action::Continue => {}
        }
    }

    for a in model.alphabet().symbols() {
        history.push(a);
        let next_probs = match model {
            ProcessModel::Iid(m) => {
                let mut next = Vec::with_capacity(probs.len());
                for (i, p) in probs.iter().enumerate() {
                    let pmf = if i < k {
                        &m.pmfs()[i]
                    } else {
                        &m.asn_mixture()[i - k].pmf
                    };
                    next.push(p * pmf[a as usize]);
                }
                next
            }
            ProcessModel::Joint(_) => {
                let state = State::History(history.clone());
                let mut next = Vec::with_capacity(probs.len());
                for i in 0..k {
                    next.push(model.joint_density(i, &state)?);
                }
                for e in 0..probs.len() - k {
                    next.push(model.asn_component_density(e, &state)?);
                }
                next
            }
        };
        walk_paths(
            model,
            plan,
            tie_break,
            history,
            &next_probs,
            hyp_passes,
            comp_passes,
        )?;
        history.pop();
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Brute-force minimum over all stopping rules
// ---------------------------------------------------------------------------

struct TreeNode {
    stage: usize,
    stop_risk: f64,
    asn_density: f64,
    children: Vec<usize>,
    /// Position in the rule bitmask; `None` for the root and final stage.
    choice_bit: Option<u32>,
}

/// Minimizes the Lagrangian over every deterministic stage-wise stopping
/// rule on the full history tree (root always continues, final stage always
/// stops) by explicit enumeration of all 2^m rules, m = number of interior
/// nodes. The backward induction must reproduce this value exactly.
pub fn exhaustive_minimum_value(
    model: &ProcessModel,
    weights: &LagrangeWeights,
    horizon: usize,
) -> Result<f64> {
    check_compatible(model, weights)?;
    if horizon == 0 {
        return Err(Error::InvalidConfig(
            "brute-force horizon must be at least 1".into(),
        ));
    }
    let a = model.alphabet().size() as u128;
    let interior: u128 = (1..horizon).map(|n| a.saturating_pow(n as u32)).sum();
    if interior > EXHAUSTIVE_NODE_CAP as u128 {
        return Err(Error::EnumerationCapExceeded {
            histories: interior,
            cap: EXHAUSTIVE_NODE_CAP as u128,
        });
    }

    // build the full tree with per-node risks and cost densities
    let k = model.k();
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut bits = 0u32;
    build_tree(model, weights, horizon, &mut Vec::new(), &mut nodes, &mut bits, k)?;

    let rules: u64 = 1u64 << bits;
    let mut best = f64::INFINITY;
    for mask in 0..rules {
        let mut total = 0.0;
        // iterative preorder walk from the root at index 0
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &nodes[idx];
            let stops = match node.choice_bit {
                None => node.stage == horizon,
                Some(bit) => mask >> bit & 1 == 1,
            };
            if stops {
                total += node.stage as f64 * node.asn_density + node.stop_risk;
            } else {
                stack.extend(node.children.iter().copied());
            }
        }
        if total < best {
            best = total;
        }
    }
    Ok(best)
}

fn build_tree(
    model: &ProcessModel,
    weights: &LagrangeWeights,
    horizon: usize,
    history: &mut Vec<u8>,
    nodes: &mut Vec<TreeNode>,
    bits: &mut u32,
    k: usize,
) -> Result<usize> {
    let stage = history.len();
    let state = native_state(model, history);
    let densities = (0..k)
        .map(|i| model.joint_density(i, &state))
        .collect::<Result<Vec<_>>>()?;
    let risk = stop_risk(weights, &densities)?;
    let choice_bit = if stage >= 1 && stage < horizon {
        let bit = *bits;
        *bits += 1;
        Some(bit)
    } else {
        None
    };
    let idx = nodes.len();
    nodes.push(TreeNode {
        stage,
        stop_risk: risk.value,
        asn_density: model.asn_density(&state)?,
        children: Vec::new(),
        choice_bit,
    });
    if stage < horizon {
        let mut children = Vec::with_capacity(model.alphabet().size());
        for a in model.alphabet().symbols() {
            history.push(a);
            children.push(build_tree(model, weights, horizon, history, nodes, bits, k)?);
            history.pop();
        }
        nodes[idx].children = children;
    }
    Ok(idx)
}

// ---------------------------------------------------------------------------
// Truncatability diagnostic
// ---------------------------------------------------------------------------

/// One stage's integral of the stopping risk over all histories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageRisk {
    pub stage: usize,
    pub integral: f64,
}

/// Whether truncated designs can approach the unbounded-horizon optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatabilityDiagnostic {
    pub profile: Vec<StageRisk>,
    /// `TRUNCATABILITY_FACTOR` times the no-observation risk.
    pub threshold: f64,
    /// The sampling-cost mixture contains every hypothesis, which makes the
    /// decay automatic.
    pub bayesian_mixture: bool,
    pub truncatable: bool,
}

/// Tabulates the stage-risk integrals up to `horizon` and issues a verdict:
/// truncatable when the last integral falls below the threshold, or
/// automatically for hypothesis-spanning cost mixtures.
pub fn truncatability_diagnostic(
    model: &ProcessModel,
    weights: &LagrangeWeights,
    horizon: usize,
) -> Result<TruncatabilityDiagnostic> {
    check_compatible(model, weights)?;
    let mut profile = Vec::with_capacity(horizon + 1);
    for n in 0..=horizon {
        profile.push(StageRisk {
            stage: n,
            integral: crate::risk::stage_risk_integral(model, weights, n)?,
        });
    }
    let threshold = TRUNCATABILITY_FACTOR * profile[0].integral;
    let bayesian_mixture = model.is_bayesian_mixture();
    let truncatable =
        bayesian_mixture || profile.last().map(|s| s.integral <= threshold).unwrap_or(false);
    Ok(TruncatabilityDiagnostic {
        profile,
        threshold,
        bayesian_mixture,
        truncatable,
    })
}

// ---------------------------------------------------------------------------
// Fixed-sample comparator
// ---------------------------------------------------------------------------

/// Smallest fixed sample size n at which some deterministic likelihood-ratio
/// test of two hypotheses meets both error targets
/// (`alpha_12 <= targets.0`, `alpha_21 <= targets.1`), or `None` up to
/// `n_cap`. Likelihood-ratio prefix sets trace the deterministic frontier,
/// so sweeping them is an exact oracle.
pub fn minimal_fixed_sample_size(
    model: &ProcessModel,
    targets: (f64, f64),
    n_cap: usize,
) -> Result<Option<usize>> {
    if model.k() != 2 {
        return Err(Error::InvalidConfig(
            "fixed-sample comparison handles exactly 2 hypotheses".into(),
        ));
    }
    for n in 1..=n_cap {
        if fixed_sample_feasible(model, targets, n)? {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

fn fixed_sample_feasible(model: &ProcessModel, targets: (f64, f64), n: usize) -> Result<bool> {
    // per-state probabilities under both hypotheses, sorted by descending
    // likelihood ratio f_2/f_1 (cross-multiplied to dodge zero densities)
    let mut rows: Vec<(f64, f64, String)> = Vec::new();
    for state in model.states_at_stage(n)? {
        let mult = model.multiplicity(&state);
        let p1 = mult * model.joint_density(0, &state)?;
        let p2 = mult * model.joint_density(1, &state)?;
        rows.push((p1, p2, state.encode()));
    }
    rows.sort_by(|a, b| {
        (b.1 * a.0)
            .partial_cmp(&(a.1 * b.0))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.2.cmp(&b.2))
    });
    // prefix of length t accepts the second hypothesis
    let mut alpha_12 = 0.0; // mass under H1 inside the prefix
    let mut alpha_21: f64 = rows.iter().map(|r| r.1).sum(); // mass under H2 outside
    if alpha_12 <= targets.0 && alpha_21 <= targets.1 {
        return Ok(true);
    }
    for row in &rows {
        alpha_12 += row.0;
        alpha_21 -= row.1;
        if alpha_12 <= targets.0 && alpha_21 <= targets.1 {
            return Ok(true);
        }
    }
    Ok(false)
}
