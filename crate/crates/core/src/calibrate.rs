//! Multiplier calibration: choosing Lagrange weights so the optimal design
//! meets prescribed error-probability targets.
//!
//! The solver minimizes `ASN + sum lambda_ij alpha_ij` for given weights;
//! turning a constraint `alpha_ij <= t_ij` (or `beta_i <= t_i` for gross
//! errors) into weights is a root-finding problem in the multipliers.
//! Because optimal plans are discrete objects, each achieved error is a
//! step function of the weights: it sits on plateaus and jumps where the
//! stop region changes, and a plateau straddling a target can stretch over
//! decades of multiplier. The fit therefore works in three moves, all
//! log-scale bisections inside a verified bracket:
//!
//! 1. **Shape.** One bisection per coordinate against the all-ones base
//!    fixes the relative size of the multipliers.
//! 2. **Scale.** A single common factor on the whole profile is bisected
//!    until every target holds at once. Dearer errors mean longer sampling,
//!    so this knob moves every error toward zero together and decides
//!    feasibility within the bracket in one pass.
//! 3. **Polish.** Coordinate sweeps against a common base, applied jointly
//!    so symmetric problems stay on symmetric paths, tighten the result.
//!    The tightest iterate meeting every target is kept, and the fit
//!    converges when an iterate lands in the slack band under its targets,
//!    when a sweep stops moving the multipliers, or when the sweep budget
//!    runs out with a satisfying iterate in hand; it fails only when no
//!    iterate ever met the targets.
//!
//! Targets loose enough to be met by a randomized decision without any
//! data are detected up front and reported as the trivial regime; no
//! multiplier search can beat an expected sample size of zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{exact_oc, OperatingCharacteristics, TieBreak};
use crate::model::ProcessModel;
use crate::risk::{LagrangeWeights, ProblemKind};
use crate::solver::{solve_limit, solve_truncated, LimitConfig, SolverConfig, TruncatedDesign};

/// Error-probability targets, one flavor per constraint family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CalibrationTarget {
    /// Per-pair targets `t_ij` on `alpha[i][j]`; diagonal entries must be 0.
    #[serde(rename = "alpha")]
    ErrorMatrix(Vec<Vec<f64>>),
    /// Per-hypothesis targets `t_i` on the gross error `beta[i]`.
    #[serde(rename = "beta")]
    GrossErrors(Vec<f64>),
}

impl CalibrationTarget {
    pub fn kind(&self) -> ProblemKind {
        match self {
            CalibrationTarget::ErrorMatrix(_) => ProblemKind::General,
            CalibrationTarget::GrossErrors(_) => ProblemKind::RowConstant,
        }
    }

    fn validate(&self, k: usize) -> Result<()> {
        let check = |t: f64, name: &str| -> Result<()> {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "target {name} is {t}, must lie strictly inside (0, 1)"
                )));
            }
            Ok(())
        };
        match self {
            CalibrationTarget::ErrorMatrix(m) => {
                if m.len() != k || m.iter().any(|row| row.len() != k) {
                    return Err(Error::InvalidConfig(format!(
                        "target matrix must be {k}x{k}"
                    )));
                }
                for (i, row) in m.iter().enumerate() {
                    for (j, &t) in row.iter().enumerate() {
                        if i == j {
                            if t != 0.0 {
                                return Err(Error::InvalidConfig(format!(
                                    "diagonal target ({i},{j}) must be 0"
                                )));
                            }
                        } else {
                            check(t, &format!("alpha[{i}][{j}]"))?;
                        }
                    }
                }
            }
            CalibrationTarget::GrossErrors(rows) => {
                if rows.len() != k {
                    return Err(Error::InvalidConfig(format!(
                        "need {k} gross-error targets, got {}",
                        rows.len()
                    )));
                }
                for (i, &t) in rows.iter().enumerate() {
                    check(t, &format!("beta[{i}]"))?;
                }
            }
        }
        Ok(())
    }
}

/// How each candidate weight matrix is turned into a design.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum DesignScheme {
    /// Fixed-horizon backward induction.
    Truncated { horizon: usize },
    /// Increasing-horizon loop; candidates that fail to settle abort the
    /// calibration.
    Limit(LimitConfig),
}

/// Search schedule for the multiplier fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Binding coordinates land in `[t (1 - slack), t]`.
    pub slack: f64,
    /// Multiplier bracket; endpoints are probed, never assumed.
    pub bracket: (f64, f64),
    /// Cap on coordinate sweeps.
    pub max_sweeps: usize,
    /// Cap on bisection steps per coordinate per sweep.
    pub bisection_steps: usize,
    pub scheme: DesignScheme,
    pub solver: SolverConfig,
    pub tie_break: TieBreak,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            slack: 0.02,
            bracket: (1e-2, 1e6),
            max_sweeps: 40,
            bisection_steps: 60,
            scheme: DesignScheme::Limit(LimitConfig::default()),
            solver: SolverConfig::default(),
            tie_break: TieBreak::Deterministic,
        }
    }
}

/// One calibrated coordinate: a multiplier and the error it controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateReport {
    /// `alpha[i][j]` or `beta[i]`.
    pub name: String,
    pub lambda: f64,
    pub target: f64,
    pub achieved: f64,
    /// `target - achieved`; nonnegative when the constraint holds.
    pub gap: f64,
    /// Achieved lies in the slack band just under the target.
    pub binding: bool,
    pub satisfied: bool,
}

/// Snapshot of one sweep: the common base the coordinates were bisected
/// against and what it achieved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub sweep: usize,
    pub lambdas: Vec<f64>,
    pub achieved: Vec<f64>,
}

/// Outcome of a multiplier fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub kind: ProblemKind,
    pub slack: f64,
    /// Targets are met by a randomized decision with no observations.
    pub trivial: bool,
    /// The acceptance distribution realizing the trivial regime.
    pub trivial_decision: Option<Vec<f64>>,
    pub weights: Option<LagrangeWeights>,
    pub coordinates: Vec<CoordinateReport>,
    pub design_value: Option<f64>,
    pub asn_weighted: Option<f64>,
    /// Boundary-tied states in the final plan; randomizing there moves the
    /// achieved errors inside their recorded values.
    pub boundary_tie_states: usize,
    pub converged: bool,
    pub failure_reason: Option<String>,
    pub sweeps_used: usize,
    pub trace: Vec<SweepPoint>,
}

// ---------------------------------------------------------------------------
// Coordinates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum Coord {
    Pair(usize, usize),
    Row(usize),
}

impl Coord {
    fn name(&self) -> String {
        match self {
            Coord::Pair(i, j) => format!("alpha[{i}][{j}]"),
            Coord::Row(i) => format!("beta[{i}]"),
        }
    }

    fn lambda(&self, weights: &LagrangeWeights) -> f64 {
        match self {
            Coord::Pair(i, j) => weights.get(*i, *j),
            Coord::Row(i) => weights.get(*i, (*i + 1) % weights.k()),
        }
    }

    fn apply(&self, weights: &LagrangeWeights, value: f64) -> Result<LagrangeWeights> {
        match self {
            Coord::Pair(i, j) => weights.with_entry(*i, *j, value),
            Coord::Row(i) => weights.with_row(*i, value),
        }
    }

    fn achieved(&self, oc: &OperatingCharacteristics) -> f64 {
        match self {
            Coord::Pair(i, j) => oc.alpha[*i][*j],
            Coord::Row(i) => oc.beta[*i],
        }
    }
}

fn coordinates_and_targets(target: &CalibrationTarget, k: usize) -> (Vec<Coord>, Vec<f64>) {
    match target {
        CalibrationTarget::ErrorMatrix(m) => {
            let mut coords = Vec::new();
            let mut targets = Vec::new();
            for i in 0..k {
                for j in 0..k {
                    if i != j {
                        coords.push(Coord::Pair(i, j));
                        targets.push(m[i][j]);
                    }
                }
            }
            (coords, targets)
        }
        CalibrationTarget::GrossErrors(rows) => (
            (0..k).map(Coord::Row).collect(),
            rows.clone(),
        ),
    }
}

// ---------------------------------------------------------------------------
// Trivial regime
// ---------------------------------------------------------------------------

/// A randomized no-data decision `phi` meets per-pair targets exactly when
/// `sum_j min_{i != j} t_ij >= 1`, and gross targets when
/// `sum_i (1 - t_i) <= 1`; the witnessing distribution is returned.
fn trivial_decision(target: &CalibrationTarget, k: usize) -> Option<Vec<f64>> {
    match target {
        CalibrationTarget::ErrorMatrix(m) => {
            let caps: Vec<f64> = (0..k)
                .map(|j| {
                    (0..k)
                        .filter(|&i| i != j)
                        .map(|i| m[i][j])
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let total: f64 = caps.iter().sum();
            if total >= 1.0 {
                Some(caps.iter().map(|c| c / total).collect())
            } else {
                None
            }
        }
        CalibrationTarget::GrossErrors(rows) => {
            let floors: Vec<f64> = rows.iter().map(|t| 1.0 - t).collect();
            let total: f64 = floors.iter().sum();
            if total <= 1.0 {
                let spare = (1.0 - total) / k as f64;
                Some(floors.iter().map(|f| f + spare).collect())
            } else {
                None
            }
        }
    }
}

// ---------------------------------------------------------------------------
// The fit
// ---------------------------------------------------------------------------

#[derive(Clone)]
struct Candidate {
    oc: OperatingCharacteristics,
    value: f64,
    tie_states: usize,
}

fn evaluate_candidate(
    model: &ProcessModel,
    weights: &LagrangeWeights,
    config: &CalibrationConfig,
) -> Result<Candidate> {
    let design: TruncatedDesign = match config.scheme {
        DesignScheme::Truncated { horizon } => {
            solve_truncated(model, weights, horizon, &config.solver)?
        }
        DesignScheme::Limit(limit) => {
            let out = solve_limit(model, weights, &limit, &config.solver)?;
            if !out.converged {
                return Err(Error::InvalidConfig(format!(
                    "candidate design did not settle: {}",
                    out.failure.unwrap_or_default()
                )));
            }
            out.design
        }
    };
    let oc = exact_oc(model, weights, &design.plan, config.tie_break)?;
    Ok(Candidate {
        oc,
        value: design.value(),
        tie_states: design.plan.boundary_tie_count(),
    })
}

/// Fits multipliers so the optimal design meets the targets: per-pair
/// targets with a general weight matrix, gross targets with row-constant
/// weights. Non-convergence is reported in the result, not as an error.
pub fn fit_multipliers(
    model: &ProcessModel,
    target: &CalibrationTarget,
    config: &CalibrationConfig,
) -> Result<CalibrationResult> {
    let k = model.k();
    target.validate(k)?;
    if !(config.bracket.0 > 0.0 && config.bracket.0 < config.bracket.1) {
        return Err(Error::InvalidConfig(format!(
            "multiplier bracket ({}, {}) must satisfy 0 < lo < hi",
            config.bracket.0, config.bracket.1
        )));
    }
    if !(config.slack > 0.0 && config.slack < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "slack {} must lie in (0, 1)",
            config.slack
        )));
    }

    if let Some(phi) = trivial_decision(target, k) {
        return Ok(CalibrationResult {
            kind: target.kind(),
            slack: config.slack,
            trivial: true,
            trivial_decision: Some(phi),
            weights: None,
            coordinates: Vec::new(),
            design_value: None,
            asn_weighted: Some(0.0),
            boundary_tie_states: 0,
            converged: true,
            failure_reason: None,
            sweeps_used: 0,
            trace: Vec::new(),
        });
    }

    let (coords, targets) = coordinates_and_targets(target, k);
    let mut weights = match target.kind() {
        ProblemKind::General => LagrangeWeights::general(
            (0..k)
                .map(|i| (0..k).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
                .collect(),
        )?,
        ProblemKind::RowConstant => LagrangeWeights::row_constant(vec![1.0; k])?,
    };

    let (lo, hi) = config.bracket;
    let band_lo = |t: f64| t * (1.0 - config.slack);
    let at_floor = |lambda: f64| lambda <= lo * (1.0 + 1e-9);

    let mut trace: Vec<SweepPoint> = Vec::new();

    let mut failure = format!(
        "no iterate met every target within {} sweeps over the bracket ({lo:e}, {hi:e})",
        config.max_sweeps
    );
    let mut sweeps_used = config.max_sweeps;
    // tightest iterate meeting every target: returned once polish stalls
    let mut best: Option<(LagrangeWeights, Candidate)> = None;

    // sweep 0: the all-ones base
    let candidate = evaluate_candidate(model, &weights, config)?;
    let achieved: Vec<f64> = coords.iter().map(|c| c.achieved(&candidate.oc)).collect();
    trace.push(SweepPoint {
        sweep: 0,
        lambdas: coords.iter().map(|c| c.lambda(&weights)).collect(),
        achieved: achieved.clone(),
    });
    let satisfied = targets.iter().zip(&achieved).all(|(&t, &a)| a <= t);
    let in_band = coords.iter().zip(&targets).zip(&achieved).all(
        |((coord, &t), &a)| a >= band_lo(t) || at_floor(coord.lambda(&weights)),
    );
    if satisfied && in_band {
        return Ok(finish(
            target, config, weights, coords, targets, candidate, true, None, 0, trace,
        ));
    }
    if satisfied {
        best = Some((weights.clone(), candidate.clone()));
    }
    let mut last = Some(candidate);

    // shape the relative profile: one bisection per coordinate, shared base
    let mut profile = weights.clone();
    for (coord, &t) in coords.iter().zip(&targets) {
        let new_lambda = bisect_coordinate(model, &weights, config, coord, t)?;
        profile = coord.apply(&profile, new_lambda)?;
    }
    // lift or lower the whole profile to the cheapest feasible scale; the
    // per-coordinate polish below cannot cross wide plateaus on its own.
    // An infeasible ceiling is still the best available rescale: adopt it
    // and let the sweeps reshape the profile.
    let (scaled, _, _) = scale_to_feasibility(model, config, &coords, &targets, &profile)?;
    weights = scaled;

    for sweep in 1..=config.max_sweeps {
        let candidate = evaluate_candidate(model, &weights, config)?;
        let achieved: Vec<f64> = coords.iter().map(|c| c.achieved(&candidate.oc)).collect();
        trace.push(SweepPoint {
            sweep,
            lambdas: coords.iter().map(|c| c.lambda(&weights)).collect(),
            achieved: achieved.clone(),
        });

        let satisfied = targets.iter().zip(&achieved).all(|(&t, &a)| a <= t);
        let in_band = coords.iter().zip(&targets).zip(&achieved).all(
            |((coord, &t), &a)| a >= band_lo(t) || at_floor(coord.lambda(&weights)),
        );
        if satisfied && in_band {
            return Ok(finish(
                target, config, weights, coords, targets, candidate, true, None, sweep, trace,
            ));
        }
        if satisfied {
            let improved = best
                .as_ref()
                .is_none_or(|(_, b)| candidate.oc.asn_weighted < b.oc.asn_weighted - 1e-12);
            if improved {
                best = Some((weights.clone(), candidate.clone()));
            } else {
                // the iterate circles a plateau without shaving any cost:
                // the tightest achievable design under the targets is in hand
                let (w, c) = best.expect("improved is false only when best is set");
                return Ok(finish(
                    target, config, w, coords, targets, c, true, None, sweep, trace,
                ));
            }
        }
        if sweep == config.max_sweeps {
            last = Some(candidate);
            break;
        }

        // bisect every coordinate against the same base, apply together,
        // then rescale so the iterate stays feasible whenever the new shape
        // admits feasibility at all
        let mut next = weights.clone();
        for (coord, &t) in coords.iter().zip(&targets) {
            let new_lambda = bisect_coordinate(model, &weights, config, coord, t)?;
            next = coord.apply(&next, new_lambda)?;
        }
        let (rescaled, _, _) = scale_to_feasibility(model, config, &coords, &targets, &next)?;
        next = rescaled;
        let moved = coords.iter().any(|coord| {
            let before = coord.lambda(&weights);
            let after = coord.lambda(&next);
            (after.ln() - before.ln()).abs() > 1e-9
        });
        if !moved {
            // every bisection reproduced its multiplier: no further sweep can
            // change the plan, so take what is in hand or report the dead end
            if satisfied {
                return Ok(finish(
                    target, config, weights, coords, targets, candidate, true, None, sweep, trace,
                ));
            }
            if let Some((w, c)) = best {
                return Ok(finish(
                    target, config, w, coords, targets, c, true, None, sweep, trace,
                ));
            }
            failure = format!(
                "multipliers pinned at the bracket edges ({lo:e}, {hi:e}) with a target still violated"
            );
            sweeps_used = sweep;
            last = Some(candidate);
            break;
        }
        weights = next;
    }

    if let Some((w, c)) = best {
        return Ok(finish(
            target,
            config,
            w,
            coords,
            targets,
            c,
            true,
            None,
            sweeps_used,
            trace,
        ));
    }
    let candidate = last.expect("loop evaluates at least once");
    Ok(finish(
        target,
        config,
        weights,
        coords,
        targets,
        candidate,
        false,
        Some(failure),
        sweeps_used,
        trace,
    ))
}

/// Scales every multiplier of `base` by one common factor and bisects for
/// the smallest factor putting each achieved error at or under its target.
/// Dearer errors mean longer sampling, so the joint scale is the one knob
/// that reliably moves every error toward zero at once; bisecting it settles
/// feasibility inside the bracket in a single pass. Returns the weights and
/// evaluation at the chosen scale plus whether every target was met.
fn scale_to_feasibility(
    model: &ProcessModel,
    config: &CalibrationConfig,
    coords: &[Coord],
    targets: &[f64],
    base: &LagrangeWeights,
) -> Result<(LagrangeWeights, Candidate, bool)> {
    let lambdas: Vec<f64> = coords.iter().map(|c| c.lambda(base)).collect();
    let lam_min = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let lam_max = lambdas.iter().copied().fold(0.0_f64, f64::max);
    let (blo, bhi) = config.bracket;
    let s_hi = bhi / lam_max;
    let s_lo = (blo / lam_min).min(s_hi);

    let probe = |s: f64| -> Result<(LagrangeWeights, Candidate, bool)> {
        let mut w = base.clone();
        for (coord, &l) in coords.iter().zip(&lambdas) {
            w = coord.apply(&w, (l * s).clamp(blo, bhi))?;
        }
        let candidate = evaluate_candidate(model, &w, config)?;
        let ok = coords
            .iter()
            .zip(targets)
            .all(|(c, &t)| c.achieved(&candidate.oc) <= t);
        Ok((w, candidate, ok))
    };

    let ceiling = probe(s_hi)?;
    if !ceiling.2 {
        return Ok(ceiling); // even the dearest errors miss a target
    }
    let floor = probe(s_lo)?;
    if floor.2 {
        return Ok(floor);
    }

    let (mut lo, mut hi) = (s_lo, s_hi);
    let mut hit = ceiling;
    for _ in 0..config.bisection_steps {
        if hi <= lo * (1.0 + 1e-12) {
            break;
        }
        let mid = ((lo.ln() + hi.ln()) / 2.0).exp();
        let out = probe(mid)?;
        if out.2 {
            hi = mid;
            hit = out;
        } else {
            lo = mid;
        }
    }
    Ok(hit)
}

fn bisect_coordinate(
    model: &ProcessModel,
    base: &LagrangeWeights,
    config: &CalibrationConfig,
    coord: &Coord,
    target: f64,
) -> Result<f64> {
    let (mut lo, mut hi) = config.bracket;
    let probe = |lambda: f64| -> Result<f64> {
        let weights = coord.apply(base, lambda)?;
        Ok(coord.achieved(&evaluate_candidate(model, &weights, config)?.oc))
    };

    // verify the bracket actually straddles the target
    let a_lo = probe(lo)?;
    if a_lo <= target {
        return Ok(lo); // slack even at the floor
    }
    let a_hi = probe(hi)?;
    if a_hi > target {
        return Ok(hi); // unreachable even at the ceiling; sweep check flags it
    }

    // pinch all the way onto the plateau edge: mirror-image coordinates
    // must land on bitwise-matching multipliers
    for _ in 0..config.bisection_steps {
        if hi <= lo * (1.0 + 1e-12) {
            break;
        }
        let mid = ((lo.ln() + hi.ln()) / 2.0).exp();
        if probe(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi) // conservative side: last probe there met the target
}

#[allow(clippy::too_many_arguments)]
fn finish(
    target: &CalibrationTarget,
    config: &CalibrationConfig,
    weights: LagrangeWeights,
    coords: Vec<Coord>,
    targets: Vec<f64>,
    candidate: Candidate,
    converged: bool,
    failure_reason: Option<String>,
    sweeps_used: usize,
    trace: Vec<SweepPoint>,
) -> CalibrationResult {
    let coordinates = coords
        .iter()
        .zip(&targets)
        .map(|(coord, &t)| {
            let achieved = coord.achieved(&candidate.oc);
            CoordinateReport {
                name: coord.name(),
                lambda: coord.lambda(&weights),
                target: t,
                achieved,
                gap: t - achieved,
                binding: achieved <= t && achieved >= t * (1.0 - config.slack),
                satisfied: achieved <= t,
            }
        })
        .collect();
    CalibrationResult {
        kind: target.kind(),
        slack: config.slack,
        trivial: false,
        trivial_decision: None,
        weights: Some(weights),
        coordinates,
        design_value: Some(candidate.value),
        asn_weighted: Some(candidate.oc.asn_weighted),
        boundary_tie_states: candidate.tie_states,
        converged,
        failure_reason,
        sweeps_used,
        trace,
    }
}
