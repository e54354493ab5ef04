//! Configuration documents for the four commands.
//!
//! Each config is one JSON object. Models and weights sit inline under
//! `model` / `weights` or behind `model_path` / `weights_path`, resolved
//! against the config file's directory; plans always come from a
//! `plan_path` pointing at a design artifact (or a bare plan document).
//! Command-line flags override their config fields, and the fully resolved
//! parameters are what the run manifest records and hashes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use seqopt_core::artifact::{DesignArtifact, PlanDoc, SCHEMA_VERSION};
use seqopt_core::{
    CalibrationConfig, CalibrationTarget, DesignScheme, LagrangeWeights, LimitConfig,
    MonteCarloConfig, ProcessModel, SolverConfig, TestPlan, TieBreak, TrueParameter,
};

use crate::Failure;

/// Schema stamp configs may carry; any other value is rejected.
pub const CONFIG_SCHEMA: u32 = 1;

/// How the design command turns weights into a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Backward induction at one fixed horizon.
    Truncated,
    /// Increasing-horizon loop that stops when the value settles.
    Limit,
}

pub fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("cannot read `{}`: {e}", path.display())))
}

fn parse<T: DeserializeOwned>(text: &str, what: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::Validation(format!("{what}: {e}")))
}

fn check_schema(schema: Option<u32>, what: &str) -> Result<(), Failure> {
    match schema {
        None | Some(CONFIG_SCHEMA) => Ok(()),
        Some(v) => Err(Failure::Validation(format!(
            "{what}: unsupported schema {v}"
        ))),
    }
}

/// Fetches a document given inline or behind a path, returning its raw JSON
/// text (for the typed parsers) and its value form (for the manifest).
/// Referenced files are appended to `paths`.
fn resolve_source(
    inline: Option<Value>,
    path: Option<PathBuf>,
    base: &Path,
    what: &str,
    paths: &mut Vec<PathBuf>,
) -> Result<(String, Value), Failure> {
    match (inline, path) {
        (Some(value), None) => Ok((value.to_string(), value)),
        (None, Some(rel)) => {
            let full = base.join(rel);
            let text = read(&full)?;
            let value = parse(&text, &format!("`{}`", full.display()))?;
            paths.push(full);
            Ok((text, value))
        }
        (Some(_), Some(_)) => Err(Failure::Validation(format!(
            "give either `{what}` or `{what}_path`, not both"
        ))),
        (None, None) => Err(Failure::Validation(format!(
            "missing `{what}` (inline) or `{what}_path`"
        ))),
    }
}

fn resolve_optional_source(
    inline: Option<Value>,
    path: Option<PathBuf>,
    base: &Path,
    what: &str,
    paths: &mut Vec<PathBuf>,
) -> Result<Option<(String, Value)>, Failure> {
    match (inline, path) {
        (None, None) => Ok(None),
        (inline, path) => resolve_source(inline, path, base, what, paths).map(Some),
    }
}

/// Reads a plan from a design artifact or from a bare plan document. The
/// artifact is kept so `evaluate --csv` can reach its value tables.
fn load_plan(path: &Path) -> Result<(TestPlan, Option<DesignArtifact>), Failure> {
    let text = read(path)?;
    let what = format!("`{}`", path.display());
    let value: Value = parse(&text, &what)?;
    if value.get("plan").is_some() {
        let artifact: DesignArtifact = parse(&text, &what)?;
        if artifact.schema != SCHEMA_VERSION {
            return Err(Failure::Validation(format!(
                "{what}: unsupported artifact schema {}",
                artifact.schema
            )));
        }
        let plan = artifact.plan.to_plan()?;
        Ok((plan, Some(artifact)))
    } else {
        let doc: PlanDoc = parse(&text, &what)?;
        Ok((doc.to_plan()?, None))
    }
}

/// Partial overrides of the increasing-horizon schedule.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitOverrides {
    #[serde(default)]
    pub n_start: Option<usize>,
    #[serde(default)]
    pub n_step: Option<usize>,
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub skip_truncatability_check: Option<bool>,
}

impl LimitOverrides {
    fn apply(self, mut base: LimitConfig) -> LimitConfig {
        if let Some(v) = self.n_start {
            base.n_start = v;
        }
        if let Some(v) = self.n_step {
            base.n_step = v;
        }
        if let Some(v) = self.n_max {
            base.n_max = v;
        }
        if let Some(v) = self.tol {
            base.tol = v;
        }
        if let Some(v) = self.skip_truncatability_check {
            base.skip_truncatability_check = v;
        }
        base
    }
}

// ---------------------------------------------------------------------------
// design
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(default)]
    pub schema: Option<u32>,
    #[serde(default)]
    pub model: Option<Value>,
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    #[serde(default)]
    pub weights: Option<Value>,
    #[serde(default)]
    pub weights_path: Option<PathBuf>,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub limit: Option<LimitOverrides>,
    #[serde(default)]
    pub state_cap: Option<usize>,
    #[serde(default)]
    pub include_tables: Option<bool>,
}

/// Effective design parameters after flag overrides, recorded verbatim in
/// the run manifest.
#[derive(Debug, Serialize)]
pub struct ResolvedDesign {
    pub schema: u32,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<LimitConfig>,
    pub state_cap: usize,
    pub include_tables: bool,
    pub model: Value,
    pub weights: Value,
}

pub struct DesignInputs {
    pub model: ProcessModel,
    pub weights: LagrangeWeights,
    pub solver: SolverConfig,
    pub resolved: ResolvedDesign,
    pub config_paths: Vec<PathBuf>,
}

pub fn design_inputs(
    config_path: &Path,
    mode_flag: Option<Mode>,
    n_flag: Option<usize>,
) -> Result<DesignInputs, Failure> {
    let text = read(config_path)?;
    let doc: DesignConfig = parse(&text, &format!("`{}`", config_path.display()))?;
    check_schema(doc.schema, "design config")?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    let mut config_paths = vec![config_path.to_path_buf()];

    let (model_text, model_value) =
        resolve_source(doc.model, doc.model_path, base, "model", &mut config_paths)?;
    let (weights_text, weights_value) = resolve_source(
        doc.weights,
        doc.weights_path,
        base,
        "weights",
        &mut config_paths,
    )?;
    let model = ProcessModel::from_json(&model_text)?;
    let weights = LagrangeWeights::from_json(&weights_text)?;

    let mode = mode_flag
        .or(doc.mode)
        .unwrap_or(if n_flag.is_some() { Mode::Truncated } else { Mode::Limit });
    let (horizon, limit) = match mode {
        Mode::Truncated => {
            let h = n_flag.or(doc.horizon).ok_or_else(|| {
                Failure::Validation(
                    "truncated mode needs a horizon (`--N` or config `horizon`)".into(),
                )
            })?;
            (Some(h), None)
        }
        Mode::Limit => {
            if n_flag.is_some() {
                return Err(Failure::Validation(
                    "`--N` sets a truncation horizon; use `--mode truncated`".into(),
                ));
            }
            let schedule = doc.limit.unwrap_or_default().apply(LimitConfig::default());
            (None, Some(schedule))
        }
    };
    let state_cap = doc.state_cap.unwrap_or(SolverConfig::default().state_cap);
    let include_tables = doc.include_tables.unwrap_or(true);

    Ok(DesignInputs {
        model,
        weights,
        solver: SolverConfig { state_cap },
        resolved: ResolvedDesign {
            schema: CONFIG_SCHEMA,
            mode,
            horizon,
            limit,
            state_cap,
            include_tables,
            model: model_value,
            weights: weights_value,
        },
        config_paths,
    })
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    #[serde(default)]
    pub schema: Option<u32>,
    #[serde(default)]
    pub model: Option<Value>,
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    #[serde(default)]
    pub weights: Option<Value>,
    #[serde(default)]
    pub weights_path: Option<PathBuf>,
    pub plan_path: PathBuf,
    #[serde(default)]
    pub tie_break: Option<TieBreak>,
    /// When set, the report carries a truncatability diagnostic with
    /// stage-risk integrals up to this stage.
    #[serde(default)]
    pub truncatability_horizon: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct ResolvedEvaluate {
    pub schema: u32,
    pub plan_path: String,
    pub tie_break: TieBreak,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncatability_horizon: Option<usize>,
    pub model: Value,
    pub weights: Value,
}

pub struct EvaluateInputs {
    pub model: ProcessModel,
    pub weights: LagrangeWeights,
    pub plan: TestPlan,
    pub design: Option<DesignArtifact>,
    pub tie_break: TieBreak,
    pub truncatability_horizon: Option<usize>,
    pub resolved: ResolvedEvaluate,
    pub config_paths: Vec<PathBuf>,
}

pub fn evaluate_inputs(config_path: &Path) -> Result<EvaluateInputs, Failure> {
    let text = read(config_path)?;
    let doc: EvaluateConfig = parse(&text, &format!("`{}`", config_path.display()))?;
    check_schema(doc.schema, "evaluate config")?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    let mut config_paths = vec![config_path.to_path_buf()];

    let (model_text, model_value) =
        resolve_source(doc.model, doc.model_path, base, "model", &mut config_paths)?;
    let (weights_text, weights_value) = resolve_source(
        doc.weights,
        doc.weights_path,
        base,
        "weights",
        &mut config_paths,
    )?;
    let model = ProcessModel::from_json(&model_text)?;
    let weights = LagrangeWeights::from_json(&weights_text)?;

    let plan_path = base.join(&doc.plan_path);
    let (plan, design) = load_plan(&plan_path)?;
    config_paths.push(plan_path.clone());

    let tie_break = doc.tie_break.unwrap_or(TieBreak::Deterministic);
    Ok(EvaluateInputs {
        model,
        weights,
        plan,
        design,
        tie_break,
        truncatability_horizon: doc.truncatability_horizon,
        resolved: ResolvedEvaluate {
            schema: CONFIG_SCHEMA,
            plan_path: plan_path.display().to_string(),
            tie_break,
            truncatability_horizon: doc.truncatability_horizon,
            model: model_value,
            weights: weights_value,
        },
        config_paths,
    })
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub schema: Option<u32>,
    #[serde(default)]
    pub model: Option<Value>,
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    pub plan_path: PathBuf,
    /// Optional: with weights present the report carries an agreement check
    /// against the exact characteristics.
    #[serde(default)]
    pub weights: Option<Value>,
    #[serde(default)]
    pub weights_path: Option<PathBuf>,
    #[serde(default)]
    pub replications: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub true_parameter: Option<TrueParameter>,
    #[serde(default)]
    pub randomize_ties: Option<bool>,
    /// Tie handling for the exact reference; defaults to uniform ties when
    /// the simulation randomizes ties, deterministic otherwise.
    #[serde(default)]
    pub tie_break: Option<TieBreak>,
}

#[derive(Debug, Serialize)]
pub struct ResolvedSimulate {
    pub schema: u32,
    pub plan_path: String,
    pub replications: u64,
    pub seed: u64,
    pub true_parameter: TrueParameter,
    pub randomize_ties: bool,
    pub tie_break: TieBreak,
    pub model: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Value>,
}

pub struct SimulateInputs {
    pub model: ProcessModel,
    pub plan: TestPlan,
    pub weights: Option<LagrangeWeights>,
    pub mc: MonteCarloConfig,
    pub true_parameter: TrueParameter,
    pub tie_break: TieBreak,
    pub resolved: ResolvedSimulate,
    pub config_paths: Vec<PathBuf>,
}

fn parse_true_flag(text: &str) -> Result<TrueParameter, Failure> {
    if text.eq_ignore_ascii_case("mixture") || text.eq_ignore_ascii_case("cost-mixture") {
        return Ok(TrueParameter::CostMixture);
    }
    text.parse::<usize>()
        .map(TrueParameter::Hypothesis)
        .map_err(|_| {
            Failure::Validation(format!(
                "`--true {text}`: expected a hypothesis index (0-based) or `mixture`"
            ))
        })
}

pub fn simulate_inputs(
    config_path: &Path,
    reps_flag: Option<u64>,
    seed_flag: Option<u64>,
    true_flag: Option<&str>,
    randomize_flag: bool,
) -> Result<SimulateInputs, Failure> {
    let text = read(config_path)?;
    let doc: SimulateConfig = parse(&text, &format!("`{}`", config_path.display()))?;
    check_schema(doc.schema, "simulate config")?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    let mut config_paths = vec![config_path.to_path_buf()];

    let (model_text, model_value) =
        resolve_source(doc.model, doc.model_path, base, "model", &mut config_paths)?;
    let model = ProcessModel::from_json(&model_text)?;

    let weights_pair = resolve_optional_source(
        doc.weights,
        doc.weights_path,
        base,
        "weights",
        &mut config_paths,
    )?;
    let (weights, weights_value) = match weights_pair {
        Some((text, value)) => (Some(LagrangeWeights::from_json(&text)?), Some(value)),
        None => (None, None),
    };

    let plan_path = base.join(&doc.plan_path);
    let (plan, _) = load_plan(&plan_path)?;
    config_paths.push(plan_path.clone());

    let true_parameter = match true_flag {
        Some(text) => parse_true_flag(text)?,
        None => doc.true_parameter.ok_or_else(|| {
            Failure::Validation(
                "choose a generating distribution: `--true <index|mixture>` or config \
                 `true_parameter`"
                    .into(),
            )
        })?,
    };
    let replications = reps_flag.or(doc.replications).unwrap_or(10_000);
    let seed = seed_flag.or(doc.seed).unwrap_or(0);
    let randomize_ties = randomize_flag || doc.randomize_ties.unwrap_or(false);
    let tie_break = doc.tie_break.unwrap_or(if randomize_ties {
        TieBreak::UniformOverTies
    } else {
        TieBreak::Deterministic
    });

    Ok(SimulateInputs {
        model,
        plan,
        weights,
        mc: MonteCarloConfig {
            replications,
            seed,
            randomize_ties,
        },
        true_parameter,
        tie_break,
        resolved: ResolvedSimulate {
            schema: CONFIG_SCHEMA,
            plan_path: plan_path.display().to_string(),
            replications,
            seed,
            true_parameter,
            randomize_ties,
            tie_break,
            model: model_value,
            weights: weights_value,
        },
        config_paths,
    })
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    #[serde(default)]
    pub schema: Option<u32>,
    #[serde(default)]
    pub model: Option<Value>,
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    /// `{"alpha": [[..]]}` for per-pair targets, `{"beta": [..]}` for gross
    /// ones.
    pub targets: CalibrationTarget,
    #[serde(default)]
    pub slack: Option<f64>,
    #[serde(default)]
    pub bracket: Option<(f64, f64)>,
    #[serde(default)]
    pub max_sweeps: Option<usize>,
    #[serde(default)]
    pub bisection_steps: Option<usize>,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub limit: Option<LimitOverrides>,
    #[serde(default)]
    pub state_cap: Option<usize>,
    #[serde(default)]
    pub tie_break: Option<TieBreak>,
}

#[derive(Debug, Serialize)]
pub struct ResolvedCalibrate {
    pub schema: u32,
    pub targets: CalibrationTarget,
    pub slack: f64,
    pub bracket: (f64, f64),
    pub max_sweeps: usize,
    pub bisection_steps: usize,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<LimitConfig>,
    pub state_cap: usize,
    pub tie_break: TieBreak,
    pub model: Value,
}

pub struct CalibrateInputs {
    pub model: ProcessModel,
    pub target: CalibrationTarget,
    pub config: CalibrationConfig,
    pub resolved: ResolvedCalibrate,
    pub config_paths: Vec<PathBuf>,
}

pub fn calibrate_inputs(config_path: &Path) -> Result<CalibrateInputs, Failure> {
    let text = read(config_path)?;
    let doc: CalibrateConfig = parse(&text, &format!("`{}`", config_path.display()))?;
    check_schema(doc.schema, "calibrate config")?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    let mut config_paths = vec![config_path.to_path_buf()];

    let (model_text, model_value) =
        resolve_source(doc.model, doc.model_path, base, "model", &mut config_paths)?;
    let model = ProcessModel::from_json(&model_text)?;

    let defaults = CalibrationConfig::default();
    let mode = doc.mode.unwrap_or(Mode::Limit);
    let (horizon, limit, scheme) = match mode {
        Mode::Truncated => {
            let h = doc.horizon.ok_or_else(|| {
                Failure::Validation("truncated mode needs a config `horizon`".into())
            })?;
            (Some(h), None, DesignScheme::Truncated { horizon: h })
        }
        Mode::Limit => {
            let schedule = doc.limit.unwrap_or_default().apply(LimitConfig::default());
            (None, Some(schedule), DesignScheme::Limit(schedule))
        }
    };
    let state_cap = doc.state_cap.unwrap_or(SolverConfig::default().state_cap);
    let config = CalibrationConfig {
        slack: doc.slack.unwrap_or(defaults.slack),
        bracket: doc.bracket.unwrap_or(defaults.bracket),
        max_sweeps: doc.max_sweeps.unwrap_or(defaults.max_sweeps),
        bisection_steps: doc.bisection_steps.unwrap_or(defaults.bisection_steps),
        scheme,
        solver: SolverConfig { state_cap },
        tie_break: doc.tie_break.unwrap_or(defaults.tie_break),
    };

    Ok(CalibrateInputs {
        model,
        target: doc.targets.clone(),
        config,
        resolved: ResolvedCalibrate {
            schema: CONFIG_SCHEMA,
            targets: doc.targets,
            slack: config.slack,
            bracket: config.bracket,
            max_sweeps: config.max_sweeps,
            bisection_steps: config.bisection_steps,
            mode,
            horizon,
            limit,
            state_cap,
            tie_break: config.tie_break,
            model: model_value,
        },
        config_paths,
    })
}
