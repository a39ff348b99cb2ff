//! On-disk artifacts: schema-versioned JSON envelopes written atomically
//! (temp file + rename), so a crash never leaves a half-written artifact
//! behind.

use netslice_core::agent::AgentCheckpoint;
use netslice_core::baseline::GridPolicyTable;
use netslice_core::coordination::ModifierNet;
use netslice_core::domain::Episode;
use netslice_core::safety::CostValueEstimator;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed artifact {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("artifact {path} has schema_version {found}, expected {expected}")]
    SchemaMismatch {
        path: String,
        found: u32,
        expected: u32,
    },
    #[error("artifact {path} has kind '{found}', expected '{expected}'")]
    KindMismatch {
        path: String,
        found: String,
        expected: String,
    },
}

/// Every artifact is wrapped in this envelope so files identify themselves.
#[derive(Debug, Serialize, Deserialize)]
struct Envelope<T> {
    schema_version: u32,
    kind: String,
    payload: T,
}

fn io_err(path: &Path, source: std::io::Error) -> ArtifactError {
    ArtifactError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes bytes atomically: a sibling temp file is fully written and synced,
/// then renamed over the destination.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn save_json<T: Serialize>(path: &Path, kind: &str, payload: &T) -> Result<(), ArtifactError> {
    let doc = Envelope {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        kind: kind.to_string(),
        payload,
    };
    let mut bytes = serde_json::to_vec_pretty(&doc).map_err(|e| ArtifactError::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn load_json<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T, ArtifactError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let doc: Envelope<T> =
        serde_json::from_slice(&bytes).map_err(|e| ArtifactError::Json {
            path: path.display().to_string(),
            source: e,
        })?;
    if doc.schema_version != ARTIFACT_SCHEMA_VERSION {
        return Err(ArtifactError::SchemaMismatch {
            path: path.display().to_string(),
            found: doc.schema_version,
            expected: ARTIFACT_SCHEMA_VERSION,
        });
    }
    if doc.kind != kind {
        return Err(ArtifactError::KindMismatch {
            path: path.display().to_string(),
            found: doc.kind,
            expected: kind.to_string(),
        });
    }
    Ok(doc.payload)
}

// Typed wrappers: one artifact kind per pipeline product.

pub fn save_tables(dir: &Path, tables: &[GridPolicyTable]) -> Result<(), ArtifactError> {
    save_json(&dir.join("baseline_tables.json"), "baseline-tables", &tables)
}

pub fn load_tables(dir: &Path) -> Result<Vec<GridPolicyTable>, ArtifactError> {
    load_json(&dir.join("baseline_tables.json"), "baseline-tables")
}

/// Baseline rollout log: `log[episode][slice]`.
pub fn save_baseline_log(dir: &Path, log: &[Vec<Episode>]) -> Result<(), ArtifactError> {
    save_json(&dir.join("baseline_log.json"), "baseline-log", &log)
}

pub fn load_baseline_log(dir: &Path) -> Result<Vec<Vec<Episode>>, ArtifactError> {
    load_json(&dir.join("baseline_log.json"), "baseline-log")
}

pub fn save_agents(dir: &Path, agents: &[AgentCheckpoint]) -> Result<(), ArtifactError> {
    save_json(&dir.join("agents.json"), "agent-checkpoints", &agents)
}

pub fn load_agents(dir: &Path) -> Result<Vec<AgentCheckpoint>, ArtifactError> {
    load_json(&dir.join("agents.json"), "agent-checkpoints")
}

pub fn save_estimators(dir: &Path, est: &[CostValueEstimator]) -> Result<(), ArtifactError> {
    save_json(&dir.join("estimators.json"), "cost-estimators", &est)
}

pub fn load_estimators(dir: &Path) -> Result<Vec<CostValueEstimator>, ArtifactError> {
    load_json(&dir.join("estimators.json"), "cost-estimators")
}

pub fn save_modifiers(dir: &Path, nets: &[ModifierNet]) -> Result<(), ArtifactError> {
    save_json(&dir.join("modifiers.json"), "action-modifiers", &nets)
}

pub fn load_modifiers(dir: &Path) -> Result<Vec<ModifierNet>, ArtifactError> {
    load_json(&dir.join("modifiers.json"), "action-modifiers")
}
