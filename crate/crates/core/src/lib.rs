//! Exactly optimal sequential tests for multiple simple hypotheses on
//! finite alphabets.
//!
//! Given k candidate distributions for a stream of observations, a
//! sequential test decides after each observation whether to keep sampling
//! or to stop and accept one hypothesis. This crate finds rules that
//! minimize the expected sample size subject to error-probability costs, by
//! minimizing the Lagrangian
//!
//! ```text
//! ASN + sum over i != j of lambda_ij * alpha_ij
//! ```
//!
//! where `alpha_ij` is the probability of accepting hypothesis j when i is
//! true and the expected sample size is taken under a configurable mixture
//! of distributions. Over a finite alphabet every quantity is a finite sum,
//! so designs, their values, and their operating characteristics are all
//! exact to double precision; no approximation enters anywhere.
//!
//! The pieces:
//!
//! - [`model`]: observation processes (i.i.d. pmfs with a count-state
//!   reduction, or explicit joint tables for dependent data).
//! - [`risk`]: Lagrange weights and the stopping risk
//!   `l_n = min_j sum_{i != j} lambda_ij f_i^n`.
//! - [`solver`]: backward induction for fixed horizons, the increasing-
//!   horizon loop, and the triviality check against deciding with no data.
//! - [`evaluate`]: exact operating characteristics by forward probability
//!   passes, with brute-force and path-enumeration oracles.
//! - [`simulate`]: seeded, reproducible Monte Carlo replication of a plan.
//! - [`calibrate`]: multiplier search meeting error-probability targets.
//! - [`artifact`]: stable JSON document forms for all of the above.

pub mod artifact;
pub mod calibrate;
pub mod error;
pub mod evaluate;
pub mod model;
pub mod risk;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
pub use model::{
    Alphabet, AsnComponent, CountState, HypothesisSet, IidModel, JointTableModel, ProcessModel,
    State, StateKind,
};
pub use risk::{DecisionLabel, LagrangeWeights, ProblemKind, StopRisk};
pub use solver::{
    solve_limit, solve_truncated, triviality_check, Action, LimitConfig, LimitDesign, PlanEntry,
    PlanKind, SolverConfig, TestPlan, TracePoint, TrivialityReport, TruncatedDesign, ValueTables,
};
pub use evaluate::{
    exact_oc, exhaustive_minimum_value, minimal_fixed_sample_size, oracle_oc,
    truncatability_diagnostic, OperatingCharacteristics, TieBreak, TruncatabilityDiagnostic,
};
pub use simulate::{
    check_against, run_monte_carlo, AgreementReport, MonteCarloConfig, SimulationReport,
    TrueParameter,
};
pub use calibrate::{
    fit_multipliers, CalibrationConfig, CalibrationResult, CalibrationTarget, DesignScheme,
};
