//! Stopping risk and terminal decisions.
//!
//! A design is scored by the Lagrangian `N + sum_{i != j} lambda_ij alpha_ij`,
//! where `alpha_ij` is the probability of accepting hypothesis j when i is
//! true and N is the expected sample size under the sampling-cost
//! distribution. Conditional on stopping with joint densities f_1^n..f_k^n,
//! the cheapest terminal decision costs
//!
//! ```text
//! l_n = min_j sum_{i != j} lambda_ij * f_i^n
//! ```
//!
//! and any j attaining the minimum is an optimal acceptance. This module
//! owns the weight matrix, the minimization, and the per-stage integral of
//! `l_n` used by the truncatability diagnostic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProcessModel;

/// Two sums within this relative distance of the minimum count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Which constraint family the weights encode.
///
/// `General` carries one multiplier per ordered error pair (i, j). In
/// `RowConstant`, every error under hypothesis i shares the multiplier
/// `lambda_i`, which prices the gross error probability
/// `beta_i = sum_{j != i} alpha_ij` instead of each entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    General,
    RowConstant,
}

/// Nonnegative error multipliers `lambda_ij`, zero on the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangeWeights {
    lambda: Vec<Vec<f64>>,
    kind: ProblemKind,
}

impl LagrangeWeights {
    pub fn general(lambda: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(lambda, ProblemKind::General)
    }

    /// Row-constant weights: `lambda_ij = rows[i]` for all `j != i`.
    pub fn row_constant(rows: Vec<f64>) -> Result<Self> {
        let k = rows.len();
        let lambda = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| if i == j { 0.0 } else { rows[i] })
                    .collect()
            })
            .collect();
        Self::build(lambda, ProblemKind::RowConstant)
    }

    /// Uniform off-diagonal weight, the common symmetric starting point.
    pub fn uniform(k: usize, value: f64) -> Result<Self> {
        Self::row_constant(vec![value; k])
    }

    fn build(lambda: Vec<Vec<f64>>, kind: ProblemKind) -> Result<Self> {
        let k = lambda.len();
        if k < 2 {
            return Err(Error::InvalidWeights(format!(
                "need at least a 2x2 weight matrix, got {k} rows"
            )));
        }
        for (i, row) in lambda.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidWeights(format!(
                    "row {i} has {} entries in a {k}-hypothesis problem",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if i == j {
                    if v != 0.0 {
                        return Err(Error::InvalidWeights(format!(
                            "diagonal entry ({i},{j}) must be 0, got {v}"
                        )));
                    }
                } else if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidWeights(format!(
                        "entry ({i},{j}) is {v}, must be nonnegative and finite"
                    )));
                }
            }
        }
        Ok(Self { lambda, kind })
    }

    pub fn k(&self) -> usize {
        self.lambda.len()
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn lambda(&self) -> &[Vec<f64>] {
        &self.lambda
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lambda[i][j]
    }

    /// Copy with one off-diagonal entry replaced; used by the calibrator's
    /// coordinate search.
    pub fn with_entry(&self, i: usize, j: usize, value: f64) -> Result<Self> {
        let mut lambda = self.lambda.clone();
        lambda[i][j] = value;
        Self::build(lambda, self.kind)
    }

    /// Copy with row i set to a constant off-diagonal value. Only meaningful
    /// for row-constant weights.
    pub fn with_row(&self, i: usize, value: f64) -> Result<Self> {
        let mut lambda = self.lambda.clone();
        for j in 0..self.k() {
            if j != i {
                lambda[i][j] = value;
            }
        }
        Self::build(lambda, self.kind)
    }

    /// The ordered off-diagonal index pairs, row-major. Fixes summation
    /// order so repeated runs add the same numbers in the same sequence.
    pub fn error_pairs(&self) -> Vec<(usize, usize)> {
        let k = self.k();
        let mut pairs = Vec::with_capacity(k * (k - 1));
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }

    /// Parses `{"lambda": [[...], ...]}` or `{"lambda_rows": [...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            #[serde(default)]
            lambda: Option<Vec<Vec<f64>>>,
            #[serde(default)]
            lambda_rows: Option<Vec<f64>>,
        }
        let doc: Doc = serde_json::from_str(text)
            .map_err(|e| Error::InvalidWeights(format!("weights JSON: {e}")))?;
        match (doc.lambda, doc.lambda_rows) {
            (Some(matrix), None) => Self::general(matrix),
            (None, Some(rows)) => Self::row_constant(rows),
            (Some(_), Some(_)) => Err(Error::InvalidWeights(
                "give either `lambda` or `lambda_rows`, not both".into(),
            )),
            (None, None) => Err(Error::InvalidWeights(
                "weights need `lambda` or `lambda_rows`".into(),
            )),
        }
    }
}

/// Outcome of the terminal minimization at one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionLabel {
    /// Index of the accepted hypothesis: the smallest index attaining the
    /// minimum.
    pub accept: usize,
    /// Every index whose sum is within [`TIE_TOLERANCE`] (relative) of the
    /// minimum; singleton when the minimizer is unique.
    pub tie_set: Vec<usize>,
}

/// Stopping risk together with the decision that attains it.
#[derive(Debug, Clone, PartialEq)]
pub struct StopRisk {
    pub value: f64,
    pub decision: DecisionLabel,
}

/// Evaluates `l = min_j sum_{i != j} lambda_ij f_i` over the given joint
/// densities, with the accepted hypothesis and its tie set.
pub fn stop_risk(weights: &LagrangeWeights, densities: &[f64]) -> Result<StopRisk> {
    let k = weights.k();
    if densities.len() != k {
        return Err(Error::InvalidWeights(format!(
            "got {} densities for a {k}-hypothesis weight matrix",
            densities.len()
        )));
    }
    let mut sums = vec![0.0; k];
    for j in 0..k {
        let mut s = 0.0;
        for (i, &f) in densities.iter().enumerate() {
            if i != j {
                s += weights.lambda[i][j] * f;
            }
        }
        sums[j] = s;
    }
    let min = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let cutoff = min * (1.0 + TIE_TOLERANCE);
    let tie_set: Vec<usize> = (0..k).filter(|&j| sums[j] <= cutoff).collect();
    let accept = tie_set[0];
    Ok(StopRisk {
        value: min,
        decision: DecisionLabel { accept, tie_set },
    })
}

/// Risk of deciding immediately, before any observation: all densities are 1,
/// so this is `min_j sum_{i != j} lambda_ij`.
pub fn no_observation_risk(weights: &LagrangeWeights) -> StopRisk {
    stop_risk(weights, &vec![1.0; weights.k()]).expect("density count matches k by construction")
}

/// Integral of the stopping risk over all stage-n observation sequences:
/// `sum over histories of l_n`, computed on the model's state space with
/// each state weighted by the number of histories it stands for. Decays to
/// zero in n exactly when designs may be truncated without loss.
pub fn stage_risk_integral(
    model: &ProcessModel,
    weights: &LagrangeWeights,
    n: usize,
) -> Result<f64> {
    check_compatible(model, weights)?;
    let mut total = 0.0;
    for state in model.states_at_stage(n)? {
        let densities = (0..model.k())
            .map(|i| model.joint_density(i, &state))
            .collect::<Result<Vec<_>>>()?;
        let risk = stop_risk(weights, &densities)?;
        total += model.multiplicity(&state) * risk.value;
    }
    Ok(total)
}

/// Shared guard: the weight matrix must match the model's hypothesis count.
pub fn check_compatible(model: &ProcessModel, weights: &LagrangeWeights) -> Result<()> {
    if weights.k() != model.k() {
        return Err(Error::InvalidWeights(format!(
            "weight matrix is {}x{} but the model has {} hypotheses",
            weights.k(),
            weights.k(),
            model.k()
        )));
    }
    Ok(())
}

/// Per-stage stopping-risk integrals for stages `0..=horizon`, keyed by
/// stage. Stage 0 is the no-observation risk.
pub fn stage_risk_profile(
    model: &ProcessModel,
    weights: &LagrangeWeights,
    horizon: usize,
) -> Result<BTreeMap<usize, f64>> {
    let mut profile = BTreeMap::new();
    for n in 0..=horizon {
        profile.insert(n, stage_risk_integral(model, weights, n)?);
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::IidModel;

    #[test]
    fn minimizes_over_acceptances() {
        // accepting j costs the weighted mass of the other hypotheses:
        // (0.5+0.3, 0.2+0.3, 0.2+0.5) = (0.8, 0.5, 0.7), so accept index 1
        let weights = LagrangeWeights::uniform(3, 1.0).unwrap();
        let risk = stop_risk(&weights, &[0.2, 0.5, 0.3]).unwrap();
        assert!((risk.value - 0.5).abs() < 1e-15);
        assert_eq!(risk.decision.accept, 1);
        assert_eq!(risk.decision.tie_set, vec![1]);
    }

    #[test]
    fn asymmetric_weights_shift_the_decision() {
        let weights = LagrangeWeights::general(vec![vec![0.0, 0.4], vec![0.2, 0.0]]).unwrap();
        let risk = no_observation_risk(&weights);
        // accepting index 0 costs lambda_10 = 0.2, accepting index 1 costs 0.4
        assert!((risk.value - 0.2).abs() < 1e-15);
        assert_eq!(risk.decision.accept, 0);
    }

    #[test]
    fn ties_list_every_minimizer_and_accept_the_smallest() {
        let weights = LagrangeWeights::uniform(2, 1.0).unwrap();
        let risk = stop_risk(&weights, &[0.5, 0.5]).unwrap();
        assert_eq!(risk.decision.tie_set, vec![0, 1]);
        assert_eq!(risk.decision.accept, 0);
    }

    #[test]
    fn tie_tolerance_is_relative() {
        let weights = LagrangeWeights::uniform(2, 1.0).unwrap();
        // within 1e-9 relative: tied
        let risk = stop_risk(&weights, &[0.5, 0.5 * (1.0 + 5e-10)]).unwrap();
        assert_eq!(risk.decision.tie_set, vec![0, 1]);
        // outside: unique
        let risk = stop_risk(&weights, &[0.5, 0.5 * (1.0 + 5e-9)]).unwrap();
        assert_eq!(risk.decision.tie_set, vec![1]);
    }

    #[test]
    fn scaling_weights_scales_the_risk() {
        let weights = LagrangeWeights::uniform(3, 1.0).unwrap();
        let doubled = LagrangeWeights::uniform(3, 2.0).unwrap();
        let densities = [0.1, 0.6, 0.3];
        let a = stop_risk(&weights, &densities).unwrap();
        let b = stop_risk(&doubled, &densities).unwrap();
        assert!((b.value - 2.0 * a.value).abs() < 1e-15);
        assert_eq!(a.decision, b.decision);
    }

    #[test]
    fn row_constant_expands_to_a_full_matrix() {
        let weights = LagrangeWeights::row_constant(vec![3.0, 5.0]).unwrap();
        assert_eq!(weights.get(0, 1), 3.0);
        assert_eq!(weights.get(1, 0), 5.0);
        assert_eq!(weights.get(0, 0), 0.0);
        assert_eq!(weights.kind(), ProblemKind::RowConstant);
    }

    #[test]
    fn rejects_negative_and_diagonal_entries() {
        assert!(LagrangeWeights::general(vec![vec![0.0, -1.0], vec![1.0, 0.0]]).is_err());
        assert!(LagrangeWeights::general(vec![vec![0.5, 1.0], vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn stage_risk_integral_sums_over_histories() {
        // Bernoulli pair (0.7,0.3)/(0.3,0.7), unit weights. At n=1 both
        // one-symbol histories have l = 0.3, so the integral is 0.6.
        let model = ProcessModel::Iid(
            IidModel::simple(vec![vec![0.7, 0.3], vec![0.3, 0.7]], vec![0.5, 0.5]).unwrap(),
        );
        let weights = LagrangeWeights::uniform(2, 1.0).unwrap();
        let integral = stage_risk_integral(&model, &weights, 1).unwrap();
        assert!((integral - 0.6).abs() < 1e-15);

        let l0 = no_observation_risk(&weights).value;
        assert!((stage_risk_integral(&model, &weights, 0).unwrap() - l0).abs() < 1e-15);
    }

    #[test]
    fn stage_risk_decays_for_separated_hypotheses() {
        let model = ProcessModel::Iid(
            IidModel::simple(vec![vec![0.9, 0.1], vec![0.1, 0.9]], vec![0.5, 0.5]).unwrap(),
        );
        let weights = LagrangeWeights::uniform(2, 10.0).unwrap();
        let profile = stage_risk_profile(&model, &weights, 8).unwrap();
        for n in 1..=8 {
            assert!(
                profile[&n] <= profile[&(n - 1)] + 1e-12,
                "integral should not rise from stage {} to {}",
                n - 1,
                n
            );
        }
        // plateaus are possible, but over eight stages the decay must bite
        assert!(profile[&8] < 0.05 * profile[&1]);
    }

    #[test]
    fn weights_json_both_forms() {
        let general = LagrangeWeights::from_json(r#"{"lambda": [[0, 2.0], [3.0, 0]]}"#).unwrap();
        assert_eq!(general.get(0, 1), 2.0);
        assert_eq!(general.kind(), ProblemKind::General);

        let rows = LagrangeWeights::from_json(r#"{"lambda_rows": [2.0, 3.0]}"#).unwrap();
        assert_eq!(rows.get(0, 1), 2.0);
        assert_eq!(rows.get(1, 0), 3.0);
        assert_eq!(rows.kind(), ProblemKind::RowConstant);

        assert!(LagrangeWeights::from_json(r#"{}"#).is_err());
    }
}
