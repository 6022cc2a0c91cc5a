//! Self-describing checkpoint files: a versioned JSON wrapper whose payload
//! is hashed, so silent corruption and version skew fail loudly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::vocab::LyricVocab;
use super::ModelError;
use crate::attributes::QuantizerModel;
use crate::nn::{AdamState, ParamStore};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume training or to generate: config, vocab, the
/// fitted quantizer, parameters, and (optionally) optimizer state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: LyricVocab,
    pub quantizer: Option<QuantizerModel>,
    pub step: u64,
    pub params: ParamStore,
    pub adam: Option<AdamState>,
}

#[derive(Serialize, Deserialize)]
struct Wrapper<'a> {
    version: u32,
    sha256: String,
    #[serde(borrow)]
    payload: &'a RawValue,
}

fn digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Failure while reading or writing a versioned wrapper; callers map this
/// into their own error type.
#[derive(Debug)]
pub(crate) enum WrapError {
    Io(std::io::Error),
    Json(serde_json::Error),
    Format(String),
}

impl From<WrapError> for ModelError {
    fn from(e: WrapError) -> ModelError {
        match e {
            WrapError::Io(e) => ModelError::Io(e),
            WrapError::Json(e) => ModelError::Json(e),
            WrapError::Format(msg) => ModelError::Checkpoint(msg),
        }
    }
}

/// Serializes `value`, hashes the payload, and writes the versioned wrapper.
/// Returns the payload hash for provenance logs.
pub(crate) fn save_versioned<T: Serialize>(
    value: &T,
    version: u32,
    path: &Path,
) -> Result<String, WrapError> {
    let payload = serde_json::to_string(value).map_err(WrapError::Json)?;
    let sha256 = digest(payload.as_bytes());
    let raw = RawValue::from_string(payload).map_err(WrapError::Json)?;
    let wrapper = Wrapper { version, sha256: sha256.clone(), payload: &raw };
    std::fs::write(path, serde_json::to_string(&wrapper).map_err(WrapError::Json)?).map_err(WrapError::Io)?;
    Ok(sha256)
}

/// Reads a versioned wrapper, checks the version and the payload hash, and
/// deserializes the payload. Returns the value with its payload hash.
pub(crate) fn load_versioned<T: serde::de::DeserializeOwned>(
    path: &Path,
    version: u32,
) -> Result<(T, String), WrapError> {
    let text = std::fs::read_to_string(path).map_err(WrapError::Io)?;
    let wrapper: Wrapper<'_> = serde_json::from_str(&text).map_err(WrapError::Json)?;
    if wrapper.version != version {
        return Err(WrapError::Format(format!(
            "version {} unsupported (expected {version})",
            wrapper.version
        )));
    }
    let actual = digest(wrapper.payload.get().as_bytes());
    if actual != wrapper.sha256 {
        return Err(WrapError::Format(format!(
            "payload hash mismatch: file says {}, content is {actual}",
            wrapper.sha256
        )));
    }
    let value: T = serde_json::from_str(wrapper.payload.get()).map_err(WrapError::Json)?;
    Ok((value, actual))
}

impl Checkpoint {
    /// Writes the checkpoint; returns the payload hash for provenance logs.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<String, ModelError> {
        Ok(save_versioned(self, CHECKPOINT_VERSION, path.as_ref())?)
    }

    /// Reads and verifies a checkpoint; returns it with its payload hash.
    pub fn load(path: impl AsRef<Path>) -> Result<(Checkpoint, String), ModelError> {
        let (checkpoint, hash): (Checkpoint, String) =
            load_versioned(path.as_ref(), CHECKPOINT_VERSION)?;
        checkpoint.config.validate().map_err(ModelError::Checkpoint)?;
        Ok((checkpoint, hash))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::train::init_params;

    fn tiny_checkpoint() -> Checkpoint {
        let mut cfg = ModelConfig::toy();
        cfg.layers = 1;
        cfg.d_model = 8;
        cfg.d_ff = 16;
        cfg.d_lyric = 4;
        cfg.d_attr = 2;
        let vocab = LyricVocab::from(vec!["<seq>".into(), "<unk>".into(), "la".into()]);
        let params = init_params(&cfg, vocab.len(), 3);
        Checkpoint { config: cfg, vocab, quantizer: None, step: 42, params, adam: None }
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = tiny_checkpoint();
        let saved_hash = ckpt.save(&path).unwrap();
        let (back, loaded_hash) = Checkpoint::load(&path).unwrap();
        assert_eq!(saved_hash, loaded_hash);
        assert_eq!(back.step, 42);
        assert_eq!(back.config, ckpt.config);
        assert_eq!(back.params, ckpt.params);
    }

    #[test]
    fn corrupted_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        tiny_checkpoint().save(&path).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        // flip one digit inside the payload (the step number)
        text = text.replace("\"step\":42", "\"step\":43");
        std::fs::write(&path, text).unwrap();
        match Checkpoint::load(&path) {
            Err(ModelError::Checkpoint(msg)) => assert!(msg.contains("hash mismatch"), "{msg}"),
            other => panic!("expected hash mismatch, got {other:?}"),
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        tiny_checkpoint().save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replacen("\"version\":1", "\"version\":9", 1);
        std::fs::write(&path, text).unwrap();
        match Checkpoint::load(&path) {
            Err(ModelError::Checkpoint(msg)) => assert!(msg.contains("version 9"), "{msg}"),
            other => panic!("expected version error, got {other:?}"),
        }
    }
}
