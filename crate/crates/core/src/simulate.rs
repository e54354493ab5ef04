//! Monte Carlo replication of a plan, for validating exact characteristics
//! against sampled runs.
//!
//! Every replication owns an independent counter-based random stream: one
//! base seed, with the replication index selecting the stream. Results are
//! therefore byte-identical across runs, thread counts, and platforms, and
//! the first R replications of a longer run reproduce a shorter one.
//!
//! Boundary-tied states, where stopping and continuing cost the same, are
//! taken at their recorded action by default. With tie randomization on,
//! the walk flips a fair coin there instead, and acceptance ties are drawn
//! uniformly over the tie set; both behaviors are optimal, so estimates
//! must still match the exact characteristics computed under the matching
//! convention.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::OperatingCharacteristics;
use crate::model::{ProcessModel, State};
use crate::solver::{Action, TestPlan};

/// Which distribution generates the observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrueParameter {
    /// Sample from one hypothesis distribution.
    Hypothesis(usize),
    /// Sample a cost-mixture component per replication, then from it.
    CostMixture,
}

/// Replication schedule and tie handling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub replications: u64,
    pub seed: u64,
    /// Randomize at boundary ties (fair coin for stop/continue, uniform
    /// draw over acceptance ties).
    pub randomize_ties: bool,
}

/// Aggregated outcome of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub true_parameter: TrueParameter,
    pub replications: u64,
    pub seed: u64,
    pub randomize_ties: bool,
    /// Fraction of replications accepting each hypothesis; together with
    /// the censored fraction these sum to 1.
    pub accept_frequency: Vec<f64>,
    /// Binomial standard errors of the acceptance frequencies.
    pub accept_se: Vec<f64>,
    /// Estimate of `sum n P(stop at n)`: censored replications contribute 0.
    pub asn_estimate: f64,
    /// Standard error of the estimate.
    pub asn_se: f64,
    /// Replications still running when the plan horizon ran out.
    pub censored: u64,
    /// Stopped replications by stopping stage.
    pub stage_histogram: BTreeMap<usize, u64>,
}

enum RepOutcome {
    Stopped { stage: u32, accept: u32 },
    Censored,
}

fn sample_index<R: Rng>(rng: &mut R, pmf: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (idx, &p) in pmf.iter().enumerate() {
        if p > 0.0 {
            last_positive = idx;
            cum += p;
            if u < cum {
                return idx;
            }
        }
    }
    last_positive
}

fn simulate_one(
    model: &ProcessModel,
    plan: &TestPlan,
    true_parameter: TrueParameter,
    config: &MonteCarloConfig,
    rep: u64,
) -> Result<RepOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(rep);

    let component = match true_parameter {
        TrueParameter::Hypothesis(_) => None,
        TrueParameter::CostMixture => Some(sample_index(&mut rng, &model.asn_weights())),
    };
    let step_pmf = |state: &State| -> Result<Vec<f64>> {
        match (true_parameter, component) {
            (TrueParameter::Hypothesis(i), _) => model.conditional_pmf(i, state),
            (TrueParameter::CostMixture, Some(e)) => model.conditional_asn_pmf(e, state),
            (TrueParameter::CostMixture, None) => unreachable!(),
        }
    };

    let mut state = model.root_state();
    for n in 1..=plan.horizon {
        let pmf = step_pmf(&state)?;
        let symbol = sample_index(&mut rng, &pmf) as u8;
        state = model
            .successors(&state)
            .into_iter()
            .find(|(a, _)| *a == symbol)
            .map(|(_, s)| s)
            .expect("sampled symbol is in the alphabet");

        let entry = plan.entry(&state)?;
        let stop = match entry.action {
            Action::Stop if config.randomize_ties && entry.boundary_tie => rng.gen::<bool>(),
            Action::Stop => true,
            Action::Continue if config.randomize_ties && entry.boundary_tie => rng.gen::<bool>(),
            Action::Continue => false,
        };
        if stop {
            let decision = entry.decision.as_ref().ok_or_else(|| {
                Error::InvalidPlan(format!("no decision recorded at stopping state `{state}`"))
            })?;
            let accept = if config.randomize_ties && decision.tie_set.len() > 1 {
                decision.tie_set[rng.gen_range(0..decision.tie_set.len())]
            } else {
                decision.accept
            };
            return Ok(RepOutcome::Stopped {
                stage: n as u32,
                accept: accept as u32,
            });
        }
    }
    Ok(RepOutcome::Censored)
}

/// Runs the plan against sampled observation sequences and aggregates
/// acceptance frequencies, stopping stages, and their standard errors.
/// Replications run in parallel but aggregate in index order, so the report
/// depends only on the seed and configuration.
pub fn run_monte_carlo(
    model: &ProcessModel,
    plan: &TestPlan,
    true_parameter: TrueParameter,
    config: &MonteCarloConfig,
) -> Result<SimulationReport> {
    if config.replications == 0 {
        return Err(Error::InvalidConfig(
            "need at least one replication".into(),
        ));
    }
    if let TrueParameter::Hypothesis(i) = true_parameter {
        if i >= model.k() {
            return Err(Error::UnknownHypothesis {
                index: i,
                k: model.k(),
            });
        }
    }
    if plan.state_kind != model.state_kind() {
        return Err(Error::StateMismatch(
            "plan was built for a different state family than the model".into(),
        ));
    }

    let outcomes: Vec<RepOutcome> = (0..config.replications)
        .into_par_iter()
        .map(|rep| simulate_one(model, plan, true_parameter, config, rep))
        .collect::<Result<Vec<_>>>()?;

    let k = model.k();
    let r = config.replications as f64;
    let mut accept_counts = vec![0u64; k];
    let mut stage_histogram: BTreeMap<usize, u64> = BTreeMap::new();
    let mut censored = 0u64;
    let mut stage_sum: u64 = 0;
    let mut stage_sq_sum: u64 = 0;
    for outcome in &outcomes {
        match outcome {
            RepOutcome::Stopped { stage, accept } => {
                accept_counts[*accept as usize] += 1;
                *stage_histogram.entry(*stage as usize).or_insert(0) += 1;
                stage_sum += u64::from(*stage);
                stage_sq_sum += u64::from(*stage) * u64::from(*stage);
            }
            RepOutcome::Censored => censored += 1,
        }
    }

    let accept_frequency: Vec<f64> = accept_counts.iter().map(|&c| c as f64 / r).collect();
    let accept_se: Vec<f64> = accept_frequency
        .iter()
        .map(|&p| (p * (1.0 - p) / r).sqrt())
        .collect();
    let asn_estimate = stage_sum as f64 / r;
    let variance = (stage_sq_sum as f64 / r - asn_estimate * asn_estimate).max(0.0);
    let asn_se = (variance / r).sqrt();

    Ok(SimulationReport {
        true_parameter,
        replications: config.replications,
        seed: config.seed,
        randomize_ties: config.randomize_ties,
        accept_frequency,
        accept_se,
        asn_estimate,
        asn_se,
        censored,
        stage_histogram,
    })
}

// ---------------------------------------------------------------------------
// Agreement with exact characteristics
// ---------------------------------------------------------------------------

/// One estimate compared against its exact reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub name: String,
    pub estimate: f64,
    pub reference: f64,
    /// Three standard errors: binomial at the reference value for
    /// acceptance frequencies, the sampled standard error for the ASN.
    pub tolerance: f64,
    pub within: bool,
}

/// Result of checking a simulation against exact characteristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub entries: Vec<Agreement>,
    pub all_within: bool,
}

/// Compares the report's estimates to the exact characteristics under the
/// same true parameter: acceptance frequencies against the corresponding
/// `alpha` row (3 binomial standard errors at the exact value) and the ASN
/// estimate against the exact one (3 sampled standard errors). Under the
/// cost mixture only the ASN is compared.
pub fn check_against(
    report: &SimulationReport,
    oc: &OperatingCharacteristics,
) -> Result<AgreementReport> {
    let r = report.replications as f64;
    let mut entries = Vec::new();
    match report.true_parameter {
        TrueParameter::Hypothesis(i) => {
            let row = oc.alpha.get(i).ok_or(Error::UnknownHypothesis {
                index: i,
                k: oc.alpha.len(),
            })?;
            for (j, &reference) in row.iter().enumerate() {
                let estimate = report.accept_frequency[j];
                let tolerance = 3.0 * (reference * (1.0 - reference) / r).sqrt();
                entries.push(Agreement {
                    name: format!("accept[{j}]"),
                    estimate,
                    reference,
                    tolerance,
                    within: (estimate - reference).abs() <= tolerance,
                });
            }
            let reference = oc.asn_by_hypothesis[i];
            let tolerance = 3.0 * report.asn_se;
            entries.push(Agreement {
                name: "asn".into(),
                estimate: report.asn_estimate,
                reference,
                tolerance,
                within: (report.asn_estimate - reference).abs() <= tolerance,
            });
        }
        TrueParameter::CostMixture => {
            let reference = oc.asn_weighted;
            let tolerance = 3.0 * report.asn_se;
            entries.push(Agreement {
                name: "asn".into(),
                estimate: report.asn_estimate,
                reference,
                tolerance,
                within: (report.asn_estimate - reference).abs() <= tolerance,
            });
        }
    }
    let all_within = entries.iter().all(|e| e.within);
    Ok(AgreementReport {
        entries,
        all_within,
    })
}
