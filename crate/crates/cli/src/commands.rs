//! The four subcommands: resolve inputs, run the core routines, write
//! canonical artifacts plus a run manifest, and print a summary.
//!
//! Artifacts are always written, converged or not; a search that failed to
//! settle leaves its trace on disk for inspection and then exits with the
//! non-convergence status.

use std::fs;
use std::path::Path;
use std::time::Instant;

use seqopt_core::artifact::{
    to_canonical_json, CalibrationArtifact, DesignArtifact, EvaluationArtifact,
    SimulationArtifact, TablesDoc, TraceDoc,
};
use seqopt_core::{
    check_against, exact_oc, fit_multipliers, run_monte_carlo, solve_limit, solve_truncated,
    triviality_check, truncatability_diagnostic,
};

use crate::config::{self, Mode};
use crate::manifest::{self, RunManifest};
use crate::summary;
use crate::{Common, Failure};

pub fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .map_err(|e| Failure::Validation(format!("cannot write `{}`: {e}", path.display())))
}

/// Prints to stdout, ignoring a closed pipe: artifacts are already on disk
/// when summaries go out, and `seqopt ... | head` must not panic.
fn emit(text: &str) {
    use std::io::Write as _;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Validation(format!("cannot create `{}`: {e}", dir.display())))
}

pub fn design(common: &Common, mode: Option<Mode>, n: Option<usize>) -> Result<(), Failure> {
    let started = Instant::now();
    let inputs = config::design_inputs(&common.config, mode, n)?;

    let (design, trace) = match inputs.resolved.mode {
        Mode::Truncated => {
            let horizon = inputs
                .resolved
                .horizon
                .expect("truncated mode resolved a horizon");
            let design = solve_truncated(&inputs.model, &inputs.weights, horizon, &inputs.solver)?;
            (design, None)
        }
        Mode::Limit => {
            let limit = inputs
                .resolved
                .limit
                .expect("limit mode resolved a schedule");
            let out = solve_limit(&inputs.model, &inputs.weights, &limit, &inputs.solver)?;
            let trace = TraceDoc {
                points: out.trace,
                converged: out.converged,
                failure: out.failure,
            };
            (out.design, Some(trace))
        }
    };
    let triviality = triviality_check(&inputs.weights, design.value());
    let mut artifact =
        DesignArtifact::new(&design, triviality, trace, inputs.resolved.include_tables);

    let manifest = RunManifest::new(
        "design",
        &inputs.config_paths,
        &inputs.resolved,
        vec![],
        vec!["design.json".into()],
    )?;
    let hash = manifest.hash()?;
    artifact.manifest_hash = Some(hash.clone());

    prepare_out(&common.out)?;
    let artifact_path = common.out.join("design.json");
    write_file(&artifact_path, &to_canonical_json(&artifact)?)?;
    let manifest_path = manifest::write(
        &common.out,
        &manifest,
        &hash,
        started.elapsed().as_millis(),
    )?;

    emit(&summary::design(&inputs.model, &artifact));
    emit(&format!(
        "wrote {} and {}\n",
        artifact_path.display(),
        manifest_path.display()
    ));

    if let Some(trace) = &artifact.trace {
        if !trace.converged {
            return Err(Failure::NonConvergence(
                trace
                    .failure
                    .clone()
                    .unwrap_or_else(|| "horizon loop did not settle".into()),
            ));
        }
    }
    Ok(())
}

fn tables_csv(tables: &TablesDoc) -> String {
    let mut out = String::from("stage,state,stop_risk,asn_density,continuation,value,accept\n");
    for (stage, table) in tables.stages.iter().enumerate() {
        for (state, v) in table {
            let continuation = v.continuation.map(|c| c.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{stage},\"{state}\",{},{},{continuation},{},{}\n",
                v.stop_risk, v.asn_density, v.value, v.decision.accept
            ));
        }
    }
    out
}

fn trace_csv(trace: &TraceDoc) -> String {
    let mut out = String::from("horizon,value\n");
    for point in &trace.points {
        out.push_str(&format!("{},{}\n", point.horizon, point.value));
    }
    out
}

pub fn evaluate(common: &Common, csv: bool) -> Result<(), Failure> {
    let started = Instant::now();
    let inputs = config::evaluate_inputs(&common.config)?;

    let oc = exact_oc(&inputs.model, &inputs.weights, &inputs.plan, inputs.tie_break)?;
    let diagnostic = match inputs.truncatability_horizon {
        Some(h) => Some(truncatability_diagnostic(&inputs.model, &inputs.weights, h)?),
        None => None,
    };
    let mut artifact = EvaluationArtifact::new(inputs.tie_break, oc, diagnostic);

    let mut outputs = vec!["oc_report.json".to_string()];
    let mut extra_files: Vec<(String, String)> = Vec::new();
    if csv {
        let design = inputs.design.as_ref().ok_or_else(|| {
            Failure::Validation(
                "`--csv` exports the design's value tables, but the plan file is not a \
                 design artifact"
                    .into(),
            )
        })?;
        let tables = design.tables.as_ref().ok_or_else(|| {
            Failure::Validation(
                "`--csv` needs value tables; rerun design with `include_tables: true`".into(),
            )
        })?;
        extra_files.push(("tables.csv".into(), tables_csv(tables)));
        if let Some(trace) = &design.trace {
            extra_files.push(("trace.csv".into(), trace_csv(trace)));
        }
        outputs.extend(extra_files.iter().map(|(name, _)| name.clone()));
    }

    let manifest = RunManifest::new(
        "evaluate",
        &inputs.config_paths,
        &inputs.resolved,
        vec![],
        outputs,
    )?;
    let hash = manifest.hash()?;
    artifact.manifest_hash = Some(hash.clone());

    prepare_out(&common.out)?;
    let artifact_path = common.out.join("oc_report.json");
    write_file(&artifact_path, &to_canonical_json(&artifact)?)?;
    for (name, text) in &extra_files {
        write_file(&common.out.join(name), text)?;
    }
    let manifest_path = manifest::write(
        &common.out,
        &manifest,
        &hash,
        started.elapsed().as_millis(),
    )?;

    emit(&summary::evaluate(&inputs.model, &artifact));
    emit(&format!(
        "wrote {} and {}\n",
        artifact_path.display(),
        manifest_path.display()
    ));
    Ok(())
}

pub fn simulate(
    common: &Common,
    reps: Option<u64>,
    seed: Option<u64>,
    true_flag: Option<&str>,
    randomize_ties: bool,
) -> Result<(), Failure> {
    let started = Instant::now();
    let inputs = config::simulate_inputs(&common.config, reps, seed, true_flag, randomize_ties)?;

    let report = run_monte_carlo(&inputs.model, &inputs.plan, inputs.true_parameter, &inputs.mc)?;
    let agreement = match &inputs.weights {
        Some(weights) => {
            let oc = exact_oc(&inputs.model, weights, &inputs.plan, inputs.tie_break)?;
            Some(check_against(&report, &oc)?)
        }
        None => None,
    };
    let mut artifact = SimulationArtifact::new(report, agreement);

    let manifest = RunManifest::new(
        "simulate",
        &inputs.config_paths,
        &inputs.resolved,
        vec![inputs.mc.seed],
        vec!["simulation.json".into()],
    )?;
    let hash = manifest.hash()?;
    artifact.manifest_hash = Some(hash.clone());

    prepare_out(&common.out)?;
    let artifact_path = common.out.join("simulation.json");
    write_file(&artifact_path, &to_canonical_json(&artifact)?)?;
    let manifest_path = manifest::write(
        &common.out,
        &manifest,
        &hash,
        started.elapsed().as_millis(),
    )?;

    emit(&summary::simulate(&inputs.model, &artifact));
    emit(&format!(
        "wrote {} and {}\n",
        artifact_path.display(),
        manifest_path.display()
    ));
    Ok(())
}

pub fn calibrate(common: &Common) -> Result<(), Failure> {
    let started = Instant::now();
    let inputs = config::calibrate_inputs(&common.config)?;

    let result = fit_multipliers(&inputs.model, &inputs.target, &inputs.config)?;
    let mut artifact = CalibrationArtifact::new(result);

    let manifest = RunManifest::new(
        "calibrate",
        &inputs.config_paths,
        &inputs.resolved,
        vec![],
        vec!["calibration.json".into()],
    )?;
    let hash = manifest.hash()?;
    artifact.manifest_hash = Some(hash.clone());

    prepare_out(&common.out)?;
    let artifact_path = common.out.join("calibration.json");
    write_file(&artifact_path, &to_canonical_json(&artifact)?)?;
    let manifest_path = manifest::write(
        &common.out,
        &manifest,
        &hash,
        started.elapsed().as_millis(),
    )?;

    emit(&summary::calibrate(&artifact));
    emit(&format!(
        "wrote {} and {}\n",
        artifact_path.display(),
        manifest_path.display()
    ));

    if !artifact.result.converged {
        return Err(Failure::NonConvergence(
            artifact
                .result
                .failure_reason
                .clone()
                .unwrap_or_else(|| "multiplier search did not converge".into()),
        ));
    }
    Ok(())
}
