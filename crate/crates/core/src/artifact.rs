//! JSON artifact schemas shared by the command-line tools.
//!
//! Plans and value tables key their stages by [`State`], which JSON cannot
//! use as a map key directly; artifacts store states under their compact
//! text keys (`"2,0"` for counts, `"010"` for histories) and remember which
//! family to decode them into. All maps are ordered, so serializing the
//! same artifact twice yields byte-identical documents.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calibrate::CalibrationResult;
use crate::error::{Error, Result};
use crate::evaluate::{OperatingCharacteristics, TieBreak, TruncatabilityDiagnostic};
use crate::model::{State, StateKind};
use crate::simulate::{AgreementReport, SimulationReport};
use crate::solver::{
    PlanEntry, PlanKind, StateValues, TestPlan, TracePoint, TrivialityReport, TruncatedDesign,
};

/// Artifact schema version stamped into every document.
pub const SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Plan documents
// ---------------------------------------------------------------------------

/// A [`TestPlan`] with text state keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDoc {
    pub plan_kind: PlanKind,
    pub state_kind: StateKind,
    pub horizon: usize,
    pub stages: Vec<BTreeMap<String, PlanEntry>>,
}

impl PlanDoc {
    pub fn from_plan(plan: &TestPlan) -> Self {
        Self {
            plan_kind: plan.kind,
            state_kind: plan.state_kind,
            horizon: plan.horizon,
            stages: plan
                .stages
                .iter()
                .map(|stage| {
                    stage
                        .iter()
                        .map(|(state, entry)| (state.encode(), entry.clone()))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn to_plan(&self) -> Result<TestPlan> {
        if self.stages.len() != self.horizon + 1 {
            return Err(Error::InvalidPlan(format!(
                "plan document has {} stages for horizon {}",
                self.stages.len(),
                self.horizon
            )));
        }
        let mut stages = Vec::with_capacity(self.stages.len());
        for (n, stage) in self.stages.iter().enumerate() {
            let mut map = BTreeMap::new();
            for (key, entry) in stage {
                let state = State::decode(key, self.state_kind)?;
                if state.stage() != n {
                    return Err(Error::InvalidPlan(format!(
                        "state `{key}` filed under stage {n}"
                    )));
                }
                map.insert(state, entry.clone());
            }
            stages.push(map);
        }
        Ok(TestPlan {
            kind: self.plan_kind,
            state_kind: self.state_kind,
            horizon: self.horizon,
            stages,
        })
    }
}

/// Value tables with text state keys; optional in design artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablesDoc {
    pub stages: Vec<BTreeMap<String, StateValues>>,
}

impl TablesDoc {
    pub fn from_tables(tables: &crate::solver::ValueTables) -> Self {
        Self {
            stages: tables
                .stages
                .iter()
                .map(|stage| {
                    stage
                        .iter()
                        .map(|(state, values)| (state.encode(), values.clone()))
                        .collect()
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Artifacts per command
// ---------------------------------------------------------------------------

/// Headline numbers of a design run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSummary {
    pub design_value: f64,
    pub root_continuation: f64,
    pub horizon: usize,
    pub boundary_tie_states: usize,
}

/// Horizon-loop history attached to limit-mode designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDoc {
    pub points: Vec<TracePoint>,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Output of `design`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignArtifact {
    pub schema: u32,
    pub kind: String,
    pub summary: ValueSummary,
    pub triviality: TrivialityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceDoc>,
    pub plan: PlanDoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tables: Option<TablesDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
}

impl DesignArtifact {
    pub fn new(
        design: &TruncatedDesign,
        triviality: TrivialityReport,
        trace: Option<TraceDoc>,
        include_tables: bool,
    ) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            kind: "design".into(),
            summary: ValueSummary {
                design_value: design.value(),
                root_continuation: design.tables.root_continuation(),
                horizon: design.plan.horizon,
                boundary_tie_states: design.plan.boundary_tie_count(),
            },
            triviality,
            trace,
            plan: PlanDoc::from_plan(&design.plan),
            tables: include_tables.then(|| TablesDoc::from_tables(&design.tables)),
            manifest_hash: None,
        }
    }
}

/// Output of `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationArtifact {
    pub schema: u32,
    pub kind: String,
    pub tie_break: TieBreak,
    pub characteristics: OperatingCharacteristics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncatability: Option<TruncatabilityDiagnostic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
}

impl EvaluationArtifact {
    pub fn new(
        tie_break: TieBreak,
        characteristics: OperatingCharacteristics,
        truncatability: Option<TruncatabilityDiagnostic>,
    ) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            kind: "oc-report".into(),
            tie_break,
            characteristics,
            truncatability,
            manifest_hash: None,
        }
    }
}

/// Output of `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationArtifact {
    pub schema: u32,
    pub kind: String,
    pub report: SimulationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement: Option<AgreementReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
}

impl SimulationArtifact {
    pub fn new(report: SimulationReport, agreement: Option<AgreementReport>) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            kind: "simulation".into(),
            report,
            agreement,
            manifest_hash: None,
        }
    }
}

/// Output of `calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub schema: u32,
    pub kind: String,
    pub result: CalibrationResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
}

impl CalibrationArtifact {
    pub fn new(result: CalibrationResult) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            kind: "calibration".into(),
            result,
            manifest_hash: None,
        }
    }
}

/// Canonical serialization for artifacts: pretty-printed with ordered keys
/// and a trailing newline. Two calls on equal values produce identical
/// bytes.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidConfig(format!("serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IidModel, ProcessModel};
    use crate::risk::LagrangeWeights;
    use crate::solver::{solve_truncated, triviality_check, SolverConfig};

    fn sample_design() -> (ProcessModel, LagrangeWeights, TruncatedDesign) {
        let model = ProcessModel::Iid(
            IidModel::simple(vec![vec![0.7, 0.3], vec![0.3, 0.7]], vec![0.5, 0.5]).unwrap(),
        );
        let weights = LagrangeWeights::uniform(2, 100.0).unwrap();
        let design = solve_truncated(&model, &weights, 3, &SolverConfig::default()).unwrap();
        (model, weights, design)
    }

    #[test]
    fn plans_round_trip_through_documents() {
        let (_, _, design) = sample_design();
        let doc = PlanDoc::from_plan(&design.plan);
        let text = to_canonical_json(&doc).unwrap();
        let parsed: PlanDoc = serde_json::from_str(&text).unwrap();
        let plan = parsed.to_plan().unwrap();
        assert_eq!(plan, design.plan);
    }

    #[test]
    fn design_artifacts_round_trip() {
        let (_, weights, design) = sample_design();
        let triviality = triviality_check(&weights, design.value());
        let artifact = DesignArtifact::new(&design, triviality, None, true);
        let text = to_canonical_json(&artifact).unwrap();
        let parsed: DesignArtifact = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, artifact);
        assert_eq!(parsed.schema, SCHEMA_VERSION);
        assert!((parsed.summary.design_value - 45.7).abs() < 1e-12);
    }

    #[test]
    fn serialization_is_byte_stable() {
        let (_, weights, design) = sample_design();
        let triviality = triviality_check(&weights, design.value());
        let artifact = DesignArtifact::new(&design, triviality, None, false);
        let a = to_canonical_json(&artifact).unwrap();
        let b = to_canonical_json(&artifact).unwrap();
        assert_eq!(a, b);
        assert!(a.ends_with('\n'));
    }

    #[test]
    fn misfiled_states_are_rejected() {
        let (_, _, design) = sample_design();
        let mut doc = PlanDoc::from_plan(&design.plan);
        let entry = doc.stages[1].values().next().cloned().unwrap();
        doc.stages[1].insert("2,1".into(), entry);
        assert!(matches!(doc.to_plan(), Err(Error::InvalidPlan(_))));
    }
}
