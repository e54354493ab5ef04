//! Run manifests tie every artifact back to the inputs that produced it.
//!
//! The hash is a SHA-256 over the manifest's canonical JSON before timing
//! is attached: command, configuration paths, fully resolved parameters,
//! tool version, seeds, and output names. Artifacts embed that hash, so a
//! rerun with the same inputs reproduces them byte for byte; wall-clock
//! time varies between runs and therefore lives next to the hash in the
//! manifest file, never under it.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use seqopt_core::artifact::{to_canonical_json, SCHEMA_VERSION};

use crate::Failure;

/// The deterministic record of one command invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema: u32,
    pub command: String,
    /// The config file plus every file it referenced.
    pub config_paths: Vec<String>,
    /// Fully resolved parameters, flag overrides applied, referenced models
    /// and weights inlined.
    pub parameters: Value,
    pub tool_version: String,
    /// RNG seeds consumed by the run; empty for deterministic commands.
    pub seeds: Vec<u64>,
    /// Artifact file names written next to this manifest.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new<P: Serialize>(
        command: &str,
        config_paths: &[PathBuf],
        parameters: &P,
        seeds: Vec<u64>,
        outputs: Vec<String>,
    ) -> Result<Self, Failure> {
        let parameters = serde_json::to_value(parameters)
            .map_err(|e| Failure::Validation(format!("manifest parameters: {e}")))?;
        Ok(Self {
            schema: SCHEMA_VERSION,
            command: command.into(),
            config_paths: config_paths
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            parameters,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seeds,
            outputs,
        })
    }

    /// Hex SHA-256 of the canonical JSON of the deterministic fields.
    pub fn hash(&self) -> Result<String, Failure> {
        let text = to_canonical_json(self)?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// The manifest as written: the hashed fields, the hash itself, then the
/// per-run timing.
#[derive(Serialize)]
struct ManifestFile<'a> {
    #[serde(flatten)]
    manifest: &'a RunManifest,
    hash: &'a str,
    wall_clock_ms: u128,
}

pub fn write(
    dir: &Path,
    manifest: &RunManifest,
    hash: &str,
    wall_clock_ms: u128,
) -> Result<PathBuf, Failure> {
    let path = dir.join(format!("{}_manifest.json", manifest.command));
    let text = to_canonical_json(&ManifestFile {
        manifest,
        hash,
        wall_clock_ms,
    })?;
    crate::commands::write_file(&path, &text)?;
    Ok(path)
}
