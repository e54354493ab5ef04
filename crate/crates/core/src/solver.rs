//! Backward induction for optimal truncated designs, and the increasing-
//! horizon loop that approaches the untruncated optimum.
//!
//! For a horizon-N design the value function is built from the final stage
//! backwards:
//!
//! ```text
//! V_N = l_N
//! V_m = min(l_m, f_m + R_m),   R_m = sum over next symbols of V_{m+1}
//! ```
//!
//! where `l_m` is the stopping risk, `f_m` the sampling-cost density of the
//! observations so far, and the sum runs over the alphabet (integration over
//! one observation under counting measure). Among designs that take at least
//! one observation, the best achievable Lagrangian is `1 + R_0`, and an
//! optimal rule stops exactly where `l_m <= f_m + R_m`. On boundary states,
//! where the two sides tie, stopping and continuing are both optimal; the
//! plan records the tie so downstream consumers can randomize if they wish.
//!
//! Values are monotone in the horizon, so running horizons N, N+step, ...
//! and watching the value settle yields the unbounded-horizon design
//! whenever the per-stage integral of `l_n` dies out (the truncatability
//! condition checked up front).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ProcessModel, State, StateKind};
use crate::risk::{
    check_compatible, no_observation_risk, stage_risk_integral, stop_risk, DecisionLabel,
    LagrangeWeights,
};

/// `l` and `f + R` within this relative distance count as a boundary tie.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

/// Per-stage integrals of the stopping risk must fall below this multiple of
/// the no-observation risk before the horizon loop trusts truncation.
pub const TRUNCATABILITY_FACTOR: f64 = 1e-3;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Resource guards for a single backward-induction run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Cap on the total number of states across all stages.
    pub state_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            state_cap: 2_000_000,
        }
    }
}

/// Schedule for the increasing-horizon loop.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LimitConfig {
    pub n_start: usize,
    pub n_step: usize,
    pub n_max: usize,
    /// Successive values within this distance count as settled.
    pub tol: f64,
    /// Skips the truncatability precheck. The loop can still converge for
    /// problems the sufficient condition misses (it is not necessary).
    pub skip_truncatability_check: bool,
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self {
            n_start: 4,
            n_step: 4,
            n_max: 512,
            tol: 1e-8,
            skip_truncatability_check: false,
        }
    }
}

// ---------------------------------------------------------------------------
// Value tables
// ---------------------------------------------------------------------------

/// Backward-induction quantities at one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateValues {
    /// Stopping risk `l_m` at the state.
    pub stop_risk: f64,
    /// Sampling-cost density `f_m` of the observations so far.
    pub asn_density: f64,
    /// `R_m`, the integral of the next stage's value; `None` at the final
    /// stage, where continuing is not available.
    pub continuation: Option<f64>,
    /// `V_m = min(l_m, f_m + R_m)`, or `l_N` at the final stage.
    pub value: f64,
    /// The acceptance minimizing the stopping risk at this state.
    pub decision: DecisionLabel,
}

/// Full value tables of one truncated design: stage m holds every state
/// reachable after m observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    pub horizon: usize,
    pub stages: Vec<BTreeMap<State, StateValues>>,
}

impl ValueTables {
    /// `R_0`, the continuation value at the empty history.
    pub fn root_continuation(&self) -> f64 {
        self.stages[0]
            .values()
            .next()
            .and_then(|v| v.continuation)
            .expect("stage 0 holds the root state with a continuation value")
    }

    /// Best Lagrangian over designs taking at least one observation:
    /// `1 + R_0`.
    pub fn value(&self) -> f64 {
        1.0 + self.root_continuation()
    }
}

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanKind {
    /// Solved at a fixed horizon.
    Truncated,
    /// Produced by the increasing-horizon loop as its settled design.
    Limit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Stop,
    Continue,
}

/// The design's instruction at one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub action: Action,
    /// Set when stopping and continuing have equal cost at the state; the
    /// recorded action is then one of two optimal choices.
    pub boundary_tie: bool,
    /// Acceptance on stopping. Present on stop entries and on boundary-tied
    /// continue entries (where stopping is equally optimal); `None` on plain
    /// continue entries.
    pub decision: Option<DecisionLabel>,
}

/// A complete stage-wise stopping and decision rule. Stage 0 is empty: a
/// design always takes the first observation, and whether that beats
/// deciding blind is reported separately by [`TrivialityReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct TestPlan {
    pub kind: PlanKind,
    pub state_kind: StateKind,
    pub horizon: usize,
    pub stages: Vec<BTreeMap<State, PlanEntry>>,
}

impl TestPlan {
    /// The instruction at a state, looked up by its stage.
    pub fn entry(&self, state: &State) -> Result<&PlanEntry> {
        let stage = state.stage();
        if stage == 0 || stage > self.horizon {
            return Err(Error::BeyondHorizon {
                stage,
                horizon: self.horizon,
            });
        }
        self.stages[stage].get(state).ok_or_else(|| {
            Error::InvalidPlan(format!("no plan entry for state `{state}` at stage {stage}"))
        })
    }

    /// States with a given action at one stage, in key order.
    pub fn states_with_action(&self, stage: usize, action: Action) -> Vec<&State> {
        self.stages
            .get(stage)
            .map(|m| {
                m.iter()
                    .filter(|(_, e)| e.action == action)
                    .map(|(s, _)| s)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Count of boundary-tied states across all stages.
    pub fn boundary_tie_count(&self) -> usize {
        self.stages
            .iter()
            .flat_map(|m| m.values())
            .filter(|e| e.boundary_tie)
            .count()
    }
}

// ---------------------------------------------------------------------------
// Truncated designs
// ---------------------------------------------------------------------------

/// Output of one backward induction: the value tables and the plan they
/// induce.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedDesign {
    pub tables: ValueTables,
    pub plan: TestPlan,
}

impl TruncatedDesign {
    pub fn value(&self) -> f64 {
        self.tables.value()
    }
}

fn check_feasible(
    model: &ProcessModel,
    weights: &LagrangeWeights,
    horizon: usize,
    config: &SolverConfig,
) -> Result<()> {
    check_compatible(model, weights)?;
    if horizon == 0 {
        return Err(Error::InvalidConfig(
            "design horizon must be at least 1".into(),
        ));
    }
    if let Some(limit) = model.horizon_limit() {
        if horizon > limit {
            return Err(Error::BeyondHorizon {
                stage: horizon,
                horizon: limit,
            });
        }
    }
    model.check_underflow(horizon)?;
    let mut total: u128 = 0;
    for n in 0..=horizon {
        total = total.saturating_add(model.states_at_stage_count(n));
    }
    if total > config.state_cap as u128 {
        return Err(Error::StateCapExceeded {
            states: total,
            cap: config.state_cap,
        });
    }
    Ok(())
}

/// Solves the horizon-N problem exactly by backward induction and returns
/// the value tables plus the induced plan (stop where `l <= f + R`, ties
/// flagged).
pub fn solve_truncated(
    model: &ProcessModel,
    weights: &LagrangeWeights,
    horizon: usize,
    config: &SolverConfig,
) -> Result<TruncatedDesign> {
    let design = solve_tables(model, weights, horizon, config)?;
    Ok(design)
}

fn solve_tables(
    model: &ProcessModel,
    weights: &LagrangeWeights,
    horizon: usize,
    config: &SolverConfig,
) -> Result<TruncatedDesign> {
    check_feasible(model, weights, horizon, config)?;
    let k = model.k();
    let mut stages: Vec<BTreeMap<State, StateValues>> = vec![BTreeMap::new(); horizon + 1];

    for n in (0..=horizon).rev() {
        let mut table = BTreeMap::new();
        for state in model.states_at_stage(n)? {
            let densities = (0..k)
                .map(|i| model.joint_density(i, &state))
                .collect::<Result<Vec<_>>>()?;
            let risk = stop_risk(weights, &densities)?;
            let f = model.asn_density(&state)?;
            let (continuation, value) = if n == horizon {
                (None, risk.value)
            } else {
                let mut r = 0.0;
                for (_, succ) in model.successors(&state) {
                    r += stages[n + 1]
                        .get(&succ)
                        .expect("every successor was tabulated at the next stage")
                        .value;
                }
                (Some(r), risk.value.min(f + r))
            };
            table.insert(
                state,
                StateValues {
                    stop_risk: risk.value,
                    asn_density: f,
                    continuation,
                    value,
                    decision: risk.decision,
                },
            );
        }
        stages[n] = table;
    }

    let tables = ValueTables { horizon, stages };
    let plan = plan_from_tables(model, &tables);
    Ok(TruncatedDesign { tables, plan })
}

fn plan_from_tables(model: &ProcessModel, tables: &ValueTables) -> TestPlan {
    let horizon = tables.horizon;
    let mut stages: Vec<BTreeMap<State, PlanEntry>> = vec![BTreeMap::new(); horizon + 1];
    for n in 1..=horizon {
        for (state, values) in &tables.stages[n] {
            let entry = if n == horizon {
                PlanEntry {
                    action: Action::Stop,
                    boundary_tie: false,
                    decision: Some(values.decision.clone()),
                }
            } else {
                let continue_cost = values.asn_density
                    + values
                        .continuation
                        .expect("interior stages carry a continuation value");
                let l = values.stop_risk;
                let tie = (l - continue_cost).abs() <= BOUNDARY_TOLERANCE * l.max(continue_cost);
                if l <= continue_cost {
                    PlanEntry {
                        action: Action::Stop,
                        boundary_tie: tie,
                        decision: Some(values.decision.clone()),
                    }
                } else {
                    PlanEntry {
                        action: Action::Continue,
                        boundary_tie: tie,
                        decision: tie.then(|| values.decision.clone()),
                    }
                }
            };
            stages[n].insert(state.clone(), entry);
        }
    }
    TestPlan {
        kind: PlanKind::Truncated,
        state_kind: model.state_kind(),
        horizon,
        stages,
    }
}

// ---------------------------------------------------------------------------
// Triviality
// ---------------------------------------------------------------------------

/// Compares the design against deciding with no data at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrivialityReport {
    /// `min_j sum_{i != j} lambda_ij`: the cost of an immediate decision.
    pub no_observation_risk: f64,
    /// Best Lagrangian among designs taking at least one observation.
    pub design_value: f64,
    /// True when observing strictly beats deciding blind.
    pub take_observations: bool,
    /// What an immediate decision would accept.
    pub decision_without_observations: DecisionLabel,
}

/// Observation is worthwhile exactly when the no-observation risk exceeds
/// the design value.
pub fn triviality_check(weights: &LagrangeWeights, design_value: f64) -> TrivialityReport {
    let l0 = no_observation_risk(weights);
    TrivialityReport {
        no_observation_risk: l0.value,
        design_value,
        take_observations: l0.value > design_value,
        decision_without_observations: l0.decision,
    }
}

// ---------------------------------------------------------------------------
// Increasing-horizon loop
// ---------------------------------------------------------------------------

/// One probe of the horizon schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub horizon: usize,
    pub value: f64,
}

/// Result of the increasing-horizon loop. When `converged` is false the
/// design is the best (largest-horizon) probe, kept for inspection; callers
/// should treat the run as failed.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitDesign {
    pub design: TruncatedDesign,
    pub trace: Vec<TracePoint>,
    pub converged: bool,
    /// Present when `converged` is false.
    pub failure: Option<String>,
}

/// Largest horizon in the schedule that the model and state cap allow.
fn max_affordable_horizon(
    model: &ProcessModel,
    config: &SolverConfig,
    n_max: usize,
) -> usize {
    let cap = model.horizon_limit().unwrap_or(n_max).min(n_max);
    let mut total: u128 = 0;
    let mut best = 0;
    for n in 0..=cap {
        total = total.saturating_add(model.states_at_stage_count(n));
        if total > config.state_cap as u128 {
            break;
        }
        best = n;
    }
    best
}

/// Runs horizons `n_start, n_start + n_step, ...` until the value settles
/// (difference below `tol`) and the early stop regions (stages up to
/// `n_start`) agree between consecutive probes.
///
/// Unless the sampling-cost mixture already contains every hypothesis (which
/// guarantees truncatability), the per-stage risk integral must fall below
/// [`TRUNCATABILITY_FACTOR`] times the no-observation risk somewhere in the
/// schedule; otherwise the loop refuses to run. `skip_truncatability_check`
/// overrides the refusal for problems known to settle anyway.
pub fn solve_limit(
    model: &ProcessModel,
    weights: &LagrangeWeights,
    limit: &LimitConfig,
    config: &SolverConfig,
) -> Result<LimitDesign> {
    check_compatible(model, weights)?;
    if limit.n_start == 0 || limit.n_step == 0 {
        return Err(Error::InvalidConfig(
            "horizon schedule needs n_start >= 1 and n_step >= 1".into(),
        ));
    }
    if limit.n_max < limit.n_start {
        return Err(Error::InvalidConfig(format!(
            "n_max {} is below n_start {}",
            limit.n_max, limit.n_start
        )));
    }
    let top = max_affordable_horizon(model, config, limit.n_max);
    if top < limit.n_start {
        return Err(Error::StateCapExceeded {
            states: model.states_at_stage_count(limit.n_start),
            cap: config.state_cap,
        });
    }

    if !limit.skip_truncatability_check && !model.is_bayesian_mixture() {
        let l0 = no_observation_risk(weights).value;
        let threshold = TRUNCATABILITY_FACTOR * l0;
        let mut ok = false;
        let mut last = f64::INFINITY;
        let mut n = limit.n_start;
        while n <= top {
            last = stage_risk_integral(model, weights, n)?;
            if last <= threshold {
                ok = true;
                break;
            }
            n += limit.n_step;
        }
        if !ok {
            return Err(Error::NotTruncatable(format!(
                "stage-risk integral is {last:.6e} at horizon {top}, needs to reach \
                 {threshold:.6e}; pass the override to run anyway"
            )));
        }
    }

    let mut trace = Vec::new();
    let mut previous: Option<TruncatedDesign> = None;
    let mut n = limit.n_start;
    while n <= top {
        let design = solve_tables(model, weights, n, config)?;
        trace.push(TracePoint {
            horizon: n,
            value: design.value(),
        });
        if let Some(prev) = &previous {
            let settled = (prev.value() - design.value()).abs() < limit.tol;
            if settled && early_regions_agree(prev, &design, limit.n_start) {
                let mut plan = design.plan.clone();
                plan.kind = PlanKind::Limit;
                return Ok(LimitDesign {
                    design: TruncatedDesign {
                        tables: design.tables,
                        plan,
                    },
                    trace,
                    converged: true,
                    failure: None,
                });
            }
        }
        previous = Some(design);
        n += limit.n_step;
    }

    let best = previous.expect("schedule contains at least n_start");
    let mut plan = best.plan.clone();
    plan.kind = PlanKind::Limit;
    Ok(LimitDesign {
        design: TruncatedDesign {
            tables: best.tables,
            plan,
        },
        trace,
        converged: false,
        failure: Some(format!(
            "value did not settle within {:.1e} by horizon {top}",
            limit.tol
        )),
    })
}

/// Actions at stages `1..=early` must match state for state. Stage sets are
/// identical across horizons, so a straight map comparison suffices.
fn early_regions_agree(a: &TruncatedDesign, b: &TruncatedDesign, early: usize) -> bool {
    let early = early.min(a.plan.horizon.saturating_sub(1)).min(b.plan.horizon.saturating_sub(1));
    for stage in 1..=early {
        let sa = &a.plan.stages[stage];
        let sb = &b.plan.stages[stage];
        if sa.len() != sb.len() {
            return false;
        }
        for (state, entry) in sa {
            match sb.get(state) {
                Some(other) if other.action == entry.action => {}
                _ => return false,
            }
        }
    }
    true
}
