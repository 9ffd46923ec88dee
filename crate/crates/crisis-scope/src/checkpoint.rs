//! JSON model checkpoints tied to the encoder backend they were trained with.

use std::path::Path;

use crisis_scope_core::models::{ModelConfig, TrainedClassifier, TrainedRanker};
use crisis_scope_core::EncoderBackend;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::io::{read_json, write_json, IoError};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    WrongKind {
        expected: &'static str,
        found: String,
    },
    #[error("unsupported checkpoint format {0}")]
    Format(u32),
    #[error("checkpoint was trained with backend `{expected}`, current backend is `{found}`")]
    BackendMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<M> {
    pub format: u32,
    pub kind: String,
    pub model_config: ModelConfig,
    pub backend_identity: String,
    pub seed: u64,
    pub model: M,
}

trait Kind {
    const KIND: &'static str;
    fn identity(&self) -> &str;
    fn seed(&self) -> u64;
}

impl Kind for TrainedClassifier {
    const KIND: &'static str = "classifier";
    fn identity(&self) -> &str {
        &self.backend_identity
    }
    fn seed(&self) -> u64 {
        self.seed
    }
}

impl Kind for TrainedRanker {
    const KIND: &'static str = "ranker";
    fn identity(&self) -> &str {
        &self.backend_identity
    }
    fn seed(&self) -> u64 {
        self.seed
    }
}

fn save<M: Kind + Serialize>(path: &Path, model: &M, config: &ModelConfig) -> Result<(), CheckpointError> {
    let ckpt = Checkpoint {
        format: FORMAT_VERSION,
        kind: M::KIND.to_string(),
        model_config: config.clone(),
        backend_identity: model.identity().to_string(),
        seed: model.seed(),
        model,
    };
    Ok(write_json(path, &ckpt)?)
}

fn load<M: Kind + DeserializeOwned>(
    path: &Path,
    encoder: &dyn EncoderBackend,
) -> Result<Checkpoint<M>, CheckpointError> {
    let raw: Checkpoint<serde_json::Value> = read_json(path)?;
    if raw.format != FORMAT_VERSION {
        return Err(CheckpointError::Format(raw.format));
    }
    if raw.kind != M::KIND {
        return Err(CheckpointError::WrongKind {
            expected: M::KIND,
            found: raw.kind,
        });
    }
    let model: M = serde_json::from_value(raw.model).map_err(|e| IoError::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let ckpt = Checkpoint {
        format: raw.format,
        kind: raw.kind,
        model_config: raw.model_config,
        backend_identity: raw.backend_identity,
        seed: raw.seed,
        model,
    };
    let found = encoder.identity();
    if ckpt.backend_identity != found || ckpt.model.identity() != found {
        return Err(CheckpointError::BackendMismatch {
            expected: ckpt.backend_identity,
            found,
        });
    }
    Ok(ckpt)
}

pub fn save_classifier(
    path: &Path,
    model: &TrainedClassifier,
    config: &ModelConfig,
) -> Result<(), CheckpointError> {
    save(path, model, config)
}

pub fn save_ranker(path: &Path, model: &TrainedRanker, config: &ModelConfig) -> Result<(), CheckpointError> {
    save(path, model, config)
}

/// Refuses checkpoints written under a different encoder identity.
pub fn load_classifier(
    path: &Path,
    encoder: &dyn EncoderBackend,
) -> Result<Checkpoint<TrainedClassifier>, CheckpointError> {
    load(path, encoder)
}

pub fn load_ranker(
    path: &Path,
    encoder: &dyn EncoderBackend,
) -> Result<Checkpoint<TrainedRanker>, CheckpointError> {
    load(path, encoder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crisis_scope_core::linguistic::{AnnotatorRegistry, LexiconAnnotator};
    use crisis_scope_core::models::{fit_classifier, Featurizer};
    use crisis_scope_core::{Message, MockEncoder};
    use std::sync::Arc;

    fn small() -> ModelConfig {
        ModelConfig {
            embedding_dim: 8,
            lstm_units: 4,
            embedding_layers: vec![8, 4],
            text_layers: vec![4],
            similarity_layers: vec![4],
            epochs: 2,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn round_trip_and_backend_guard() {
        let reg = AnnotatorRegistry::new().with("en", Arc::new(LexiconAnnotator::english()));
        let enc = MockEncoder::new(8, 1);
        let f = Featurizer::new(&reg, &enc);
        let msgs = vec![
            Message::new("1", "Bridge collapsed in the storm", "en", "e").with_informative(true),
            Message::new("2", "good morning everyone", "en", "e").with_informative(false),
        ];
        let model = fit_classifier(&msgs, &f, &small(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("clf.json");
        save_classifier(&p, &model, &small()).unwrap();
        let back = load_classifier(&p, &enc).unwrap();
        assert_eq!(back.model, model);
        assert_eq!(back.seed, 3);
        assert_eq!(back.model_config, small());

        let other = MockEncoder::new(8, 2);
        assert!(matches!(
            load_classifier(&p, &other),
            Err(CheckpointError::BackendMismatch { .. })
        ));
        assert!(matches!(
            load_ranker(&p, &enc),
            Err(CheckpointError::WrongKind { .. })
        ));
    }
}
