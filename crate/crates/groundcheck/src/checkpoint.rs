//! Checkpoint directory format shared by both trainers: a metadata file
//! (config snapshot, seed, data fingerprint), the model config, and the
//! raw parameter slab. Plus the JSONL metrics appenders.

use std::io::Write;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gateway::tiny::{TinyLm, TinyLmConfig};
use crate::gateway::{LanguageModel, TrainableLm};

pub const METADATA_FILE: &str = "metadata.json";
pub const MODEL_CONFIG_FILE: &str = "model.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    /// Which stage produced this checkpoint ("sft" or "rl").
    pub stage: String,
    /// Snapshot of the training configuration that produced it.
    pub config_snapshot: serde_json::Value,
    pub seed: u64,
    /// SHA-256 over the training data, hex-encoded.
    pub data_fingerprint: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// SHA-256 fingerprint over an ordered list of byte chunks.
pub fn fingerprint<'a>(chunks: impl IntoIterator<Item = &'a [u8]>) -> String {
    let mut hasher = Sha256::new();
    for chunk in chunks {
        hasher.update((chunk.len() as u64).to_le_bytes());
        hasher.update(chunk);
    }
    hex_encode(&hasher.finalize())
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    kind: String,
    id: String,
    config: TinyLmConfig,
}

pub fn save_tiny_lm(
    dir: impl AsRef<Path>,
    model: &TinyLm,
    metadata: &CheckpointMetadata,
) -> Result<(), CheckpointError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let model_file = ModelFile {
        kind: "tiny-lm".to_string(),
        id: model.model_id().to_string(),
        config: model.config().clone(),
    };
    std::fs::write(
        dir.join(MODEL_CONFIG_FILE),
        serde_json::to_string_pretty(&model_file).map_err(std::io::Error::from)?,
    )?;
    std::fs::write(
        dir.join(METADATA_FILE),
        serde_json::to_string_pretty(metadata).map_err(std::io::Error::from)?,
    )?;
    let mut raw = Vec::with_capacity(model.params().len() * 8);
    for value in model.params() {
        raw.extend_from_slice(&value.to_le_bytes());
    }
    std::fs::write(dir.join(PARAMS_FILE), raw)?;
    Ok(())
}

pub fn load_tiny_lm(dir: impl AsRef<Path>) -> Result<TinyLm, CheckpointError> {
    let dir = dir.as_ref();
    let model_file: ModelFile =
        serde_json::from_str(&std::fs::read_to_string(dir.join(MODEL_CONFIG_FILE))?)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    if model_file.kind != "tiny-lm" {
        return Err(CheckpointError::Malformed(format!(
            "unsupported model kind {}",
            model_file.kind
        )));
    }
    let raw = std::fs::read(dir.join(PARAMS_FILE))?;
    if raw.len() % 8 != 0 {
        return Err(CheckpointError::Malformed(
            "parameter file length is not a multiple of 8".to_string(),
        ));
    }
    let params: Vec<f64> = raw
        .chunks_exact(8)
        .map(|chunk| f64::from_le_bytes(chunk.try_into().expect("chunk of 8")))
        .collect();
    TinyLm::from_params(model_file.config, params, model_file.id)
        .map_err(|e| CheckpointError::Malformed(e.to_string()))
}

pub fn load_metadata(dir: impl AsRef<Path>) -> Result<CheckpointMetadata, CheckpointError> {
    serde_json::from_str(&std::fs::read_to_string(
        dir.as_ref().join(METADATA_FILE),
    )?)
    .map_err(|e| CheckpointError::Malformed(e.to_string()))
}

/// Appends one JSON line per row to `path`, creating it if needed.
pub fn append_jsonl<T: Serialize>(
    path: impl AsRef<Path>,
    rows: &[T],
) -> Result<(), std::io::Error> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    for row in rows {
        serde_json::to_writer(&mut file, row)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, std::io::Error> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|line| !line.trim().is_empty())
        .map(|line| serde_json::from_str(line).map_err(std::io::Error::from))
        .collect()
}
