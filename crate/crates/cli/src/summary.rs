//! Human-readable run summaries printed to stdout.
//!
//! Artifacts carry the full numbers; these summaries exist so a terminal
//! reader can see at a glance what a run decided: the design value, where
//! the plan stops, the achieved error rates, and whether anything failed.
//! Binary-alphabet count plans get their stop regions described as count
//! thresholds; everything else is summarized by state tallies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use seqopt_core::artifact::{
    CalibrationArtifact, DesignArtifact, EvaluationArtifact, PlanDoc, SimulationArtifact,
};
use seqopt_core::{Action, PlanEntry, ProcessModel, StateKind, TieBreak, TrueParameter};

fn tie_name(tie_break: TieBreak) -> &'static str {
    match tie_break {
        TieBreak::Deterministic => "deterministic",
        TieBreak::UniformOverTies => "uniform-over-ties",
    }
}

fn label(labels: &[String], index: usize) -> String {
    labels
        .get(index)
        .cloned()
        .unwrap_or_else(|| format!("H{}", index + 1))
}

// ---------------------------------------------------------------------------
// design
// ---------------------------------------------------------------------------

pub fn design(model: &ProcessModel, artifact: &DesignArtifact) -> String {
    let mut out = String::new();
    let s = &artifact.summary;
    let kind = match artifact.plan.plan_kind {
        seqopt_core::PlanKind::Truncated => "truncated",
        seqopt_core::PlanKind::Limit => "limit",
    };
    let _ = writeln!(
        out,
        "design value {:.9} (1 + continuation {:.9}), horizon {}, {kind}",
        s.design_value, s.root_continuation, s.horizon
    );
    if let Some(trace) = &artifact.trace {
        if trace.converged {
            let horizons: Vec<String> = trace.points.iter().map(|p| p.horizon.to_string()).collect();
            let _ = writeln!(
                out,
                "horizon loop settled after {} probes ({})",
                trace.points.len(),
                horizons.join(", ")
            );
        } else {
            let _ = writeln!(
                out,
                "horizon loop DID NOT settle: {}",
                trace.failure.as_deref().unwrap_or("no reason recorded")
            );
        }
    }
    let t = &artifact.triviality;
    if t.take_observations {
        let _ = writeln!(
            out,
            "take observations: yes (deciding blind costs {:.9})",
            t.no_observation_risk
        );
    } else {
        let _ = writeln!(
            out,
            "take observations: no; accept {} immediately (blind risk {:.9} <= design value)",
            label(
                model.hypotheses().labels(),
                t.decision_without_observations.accept
            ),
            t.no_observation_risk
        );
    }
    if s.boundary_tie_states > 0 {
        let _ = writeln!(
            out,
            "boundary ties at {} states (stop and continue equally optimal there)",
            s.boundary_tie_states
        );
    }
    out.push_str(&plan_overview(model, &artifact.plan));
    out
}

/// Per-stage stop regions. Stage 0 is omitted: the first observation is
/// always taken, and whether that is worthwhile is the triviality line.
fn plan_overview(model: &ProcessModel, plan: &PlanDoc) -> String {
    let mut out = String::new();
    let binary_counts = plan.state_kind == StateKind::Counts && model.alphabet().size() == 2;
    if binary_counts {
        let _ = writeln!(out, "stop regions (by count of symbol 1):");
    } else {
        let _ = writeln!(out, "stop regions:");
    }
    let labels = model.hypotheses().labels();
    for stage in 1..=plan.horizon {
        let table = &plan.stages[stage];
        let line = if binary_counts {
            binary_stage_line(stage, table, labels)
        } else {
            generic_stage_line(table)
        };
        let _ = writeln!(out, "  stage {stage:>3}: {line}");
        if table.values().all(|e| e.action == Action::Stop) {
            if stage == plan.horizon {
                let _ = writeln!(out, "the plan stops at stage {stage} everywhere (the horizon)");
            } else {
                let _ = writeln!(
                    out,
                    "the plan stops at stage {stage} everywhere; later stages are unreachable"
                );
            }
            break;
        }
    }
    out
}

fn generic_stage_line(table: &BTreeMap<String, PlanEntry>) -> String {
    let stops = table
        .values()
        .filter(|e| e.action == Action::Stop)
        .count();
    let total = table.len();
    if stops == 0 {
        "continue everywhere".into()
    } else if stops == total {
        "stop everywhere".into()
    } else {
        format!("stop at {stops} of {total} states")
    }
}

/// On a binary alphabet the count of symbol 1 orders the stage's states, so
/// a stop region reads as thresholds whenever it is a prefix, a suffix, or
/// both.
fn binary_stage_line(
    stage: usize,
    table: &BTreeMap<String, PlanEntry>,
    labels: &[String],
) -> String {
    let mut stops: BTreeMap<usize, Option<usize>> = BTreeMap::new();
    for (key, entry) in table {
        if entry.action != Action::Stop {
            continue;
        }
        let c1: usize = key
            .split(',')
            .nth(1)
            .and_then(|s| s.parse().ok())
            .unwrap_or(0);
        stops.insert(c1, entry.decision.as_ref().map(|d| d.accept));
    }
    let n = stage;
    let set: BTreeSet<usize> = stops.keys().copied().collect();
    if set.is_empty() {
        return "continue everywhere".into();
    }
    if set.len() == n + 1 {
        return "stop everywhere".into();
    }
    let lo = (0..=n).take_while(|c| set.contains(c)).last();
    let hi_start = (0..=n).rev().take_while(|c| set.contains(c)).last();
    let covered = lo.map_or(0, |a| a + 1) + hi_start.map_or(0, |b| n - b + 1);
    if covered != set.len() {
        let listed: Vec<String> = set.iter().map(|c| c.to_string()).collect();
        return format!("stop when count(1) is one of {{{}}}", listed.join(", "));
    }

    let side_accept = |counts: &mut dyn Iterator<Item = usize>| -> Option<usize> {
        let accepts: BTreeSet<Option<usize>> = counts.map(|c| stops[&c]).collect();
        if accepts.len() == 1 {
            accepts.into_iter().next().flatten()
        } else {
            None
        }
    };
    let describe = |bound: String, accept: Option<usize>| -> String {
        match accept {
            Some(i) => format!("{bound} (accept {})", label(labels, i)),
            None => bound,
        }
    };
    let low = lo.map(|a| describe(format!("<= {a}"), side_accept(&mut (0..=a))));
    let high = hi_start.map(|b| describe(format!(">= {b}"), side_accept(&mut (b..=n))));
    match (low, high) {
        (Some(l), Some(h)) => format!("stop when count(1) {l} or {h}"),
        (Some(l), None) => format!("stop when count(1) {l}"),
        (None, Some(h)) => format!("stop when count(1) {h}"),
        (None, None) => unreachable!("nonempty stop set has a prefix or a suffix"),
    }
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

pub fn evaluate(model: &ProcessModel, artifact: &EvaluationArtifact) -> String {
    let mut out = String::new();
    let oc = &artifact.characteristics;
    let labels = model.hypotheses().labels();
    let _ = writeln!(
        out,
        "operating characteristics ({} ties)",
        tie_name(artifact.tie_break)
    );
    let _ = writeln!(out, "accept probabilities (row = true hypothesis):");
    for (i, row) in oc.alpha.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|a| format!("{a:.6}")).collect();
        let _ = writeln!(out, "  {}: {}", label(labels, i), cells.join("  "));
    }
    let gross: Vec<String> = oc
        .beta
        .iter()
        .enumerate()
        .map(|(i, b)| format!("{} {b:.6}", label(labels, i)))
        .collect();
    let _ = writeln!(out, "gross error: {}", gross.join(", "));
    let asn: Vec<String> = oc
        .asn_by_hypothesis
        .iter()
        .enumerate()
        .map(|(i, a)| format!("{} {a:.4}", label(labels, i)))
        .collect();
    let _ = writeln!(
        out,
        "ASN: {}; weighted {:.4}",
        asn.join(", "),
        oc.asn_weighted
    );
    let _ = writeln!(out, "lagrangian {:.9}", oc.lagrangian);
    if oc.deficit_weighted > 0.0 {
        let _ = writeln!(
            out,
            "unstopped mass within the horizon: {:.3e} (weighted)",
            oc.deficit_weighted
        );
    }
    if let Some(d) = &artifact.truncatability {
        let last = d.profile.last().expect("profile covers stage 0");
        if d.bayesian_mixture {
            let _ = writeln!(
                out,
                "truncatable: yes (the cost mixture spans every hypothesis)"
            );
        } else if d.truncatable {
            let _ = writeln!(
                out,
                "truncatable: yes (stage-{} risk integral {:.3e} under threshold {:.3e})",
                last.stage, last.integral, d.threshold
            );
        } else {
            let _ = writeln!(
                out,
                "truncatable: not established up to stage {} (integral {:.3e}, threshold {:.3e})",
                last.stage, last.integral, d.threshold
            );
        }
    }
    out
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn simulate(model: &ProcessModel, artifact: &SimulationArtifact) -> String {
    let mut out = String::new();
    let r = &artifact.report;
    let labels = model.hypotheses().labels();
    let source = match r.true_parameter {
        TrueParameter::Hypothesis(i) => label(labels, i),
        TrueParameter::CostMixture => "the cost mixture".into(),
    };
    let ties = if r.randomize_ties {
        "randomized"
    } else {
        "deterministic"
    };
    let _ = writeln!(
        out,
        "simulated {} replications under {source} (seed {}, {ties} ties)",
        r.replications, r.seed
    );
    let accept: Vec<String> = r
        .accept_frequency
        .iter()
        .zip(&r.accept_se)
        .enumerate()
        .map(|(j, (f, se))| format!("{} {f:.5} (se {se:.5})", label(labels, j)))
        .collect();
    let _ = writeln!(out, "accept: {}", accept.join(", "));
    let _ = writeln!(out, "ASN {:.4} (se {:.4})", r.asn_estimate, r.asn_se);
    if r.censored > 0 {
        let _ = writeln!(
            out,
            "{} replications were still running at the plan horizon",
            r.censored
        );
    }
    if let Some(agreement) = &artifact.agreement {
        if agreement.all_within {
            let _ = writeln!(
                out,
                "agreement: all {} estimates within 3 standard errors of the exact values",
                agreement.entries.len()
            );
        } else {
            let outside = agreement.entries.iter().filter(|e| !e.within).count();
            let _ = writeln!(
                out,
                "agreement: {outside} of {} estimates OUTSIDE 3 standard errors",
                agreement.entries.len()
            );
            for e in agreement.entries.iter().filter(|e| !e.within) {
                let _ = writeln!(
                    out,
                    "  {}: estimate {:.6}, exact {:.6}, tolerance {:.6}",
                    e.name, e.estimate, e.reference, e.tolerance
                );
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

pub fn calibrate(artifact: &CalibrationArtifact) -> String {
    let mut out = String::new();
    let r = &artifact.result;
    if r.trivial {
        let phi: Vec<String> = r
            .trivial_decision
            .iter()
            .flatten()
            .map(|p| format!("{p:.6}"))
            .collect();
        let _ = writeln!(
            out,
            "targets are loose enough for a no-data decision: accept with probabilities ({}), \
             zero observations",
            phi.join(", ")
        );
        return out;
    }
    if r.converged {
        let _ = writeln!(out, "calibration converged after {} sweeps", r.sweeps_used);
    } else {
        let _ = writeln!(
            out,
            "calibration FAILED after {} sweeps: {}",
            r.sweeps_used,
            r.failure_reason.as_deref().unwrap_or("no reason recorded")
        );
    }
    for c in &r.coordinates {
        let flag = if !c.satisfied {
            ", VIOLATED"
        } else if c.binding {
            ", binding"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "  {}: lambda {:.6}, target {:.6}, achieved {:.6} (gap {:.2e}{flag})",
            c.name, c.lambda, c.target, c.achieved, c.gap
        );
    }
    if let (Some(value), Some(asn)) = (r.design_value, r.asn_weighted) {
        let _ = writeln!(out, "design value {value:.6}, weighted ASN {asn:.4}");
    }
    if r.boundary_tie_states > 0 {
        let _ = writeln!(
            out,
            "boundary ties at {} states; randomizing there can tighten the achieved errors",
            r.boundary_tie_states
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use seqopt_core::DecisionLabel;

    fn stop(accept: usize) -> PlanEntry {
        PlanEntry {
            action: Action::Stop,
            boundary_tie: false,
            decision: Some(DecisionLabel {
                accept,
                tie_set: vec![accept],
            }),
        }
    }

    fn cont() -> PlanEntry {
        PlanEntry {
            action: Action::Continue,
            boundary_tie: false,
            decision: None,
        }
    }

    fn labels() -> Vec<String> {
        vec!["H1".into(), "H2".into()]
    }

    fn table(entries: Vec<(&str, PlanEntry)>) -> BTreeMap<String, PlanEntry> {
        entries.into_iter().map(|(k, e)| (k.into(), e)).collect()
    }

    #[test]
    fn two_sided_threshold_reads_off_the_stop_set() {
        let table = table(vec![
            ("3,0", stop(0)),
            ("2,1", cont()),
            ("1,2", cont()),
            ("0,3", stop(1)),
        ]);
        assert_eq!(
            binary_stage_line(3, &table, &labels()),
            "stop when count(1) <= 0 (accept H1) or >= 3 (accept H2)"
        );
    }

    #[test]
    fn one_sided_and_degenerate_regions() {
        let low_only = table(vec![("2,0", stop(0)), ("1,1", cont()), ("0,2", cont())]);
        assert_eq!(
            binary_stage_line(2, &low_only, &labels()),
            "stop when count(1) <= 0 (accept H1)"
        );
        let all = table(vec![("1,0", stop(0)), ("0,1", stop(1))]);
        assert_eq!(binary_stage_line(1, &all, &labels()), "stop everywhere");
        let none = table(vec![("1,0", cont()), ("0,1", cont())]);
        assert_eq!(binary_stage_line(1, &none, &labels()), "continue everywhere");
    }

    #[test]
    fn scattered_stop_sets_are_listed() {
        let table = table(vec![
            ("3,0", cont()),
            ("2,1", stop(0)),
            ("1,2", cont()),
            ("0,3", stop(1)),
        ]);
        assert_eq!(
            binary_stage_line(3, &table, &labels()),
            "stop when count(1) is one of {1, 3}"
        );
    }

    #[test]
    fn mixed_side_decisions_drop_the_accept_note() {
        let table = table(vec![
            ("3,0", stop(0)),
            ("2,1", stop(1)),
            ("1,2", cont()),
            ("0,3", cont()),
        ]);
        assert_eq!(
            binary_stage_line(3, &table, &labels()),
            "stop when count(1) <= 1"
        );
    }
}
