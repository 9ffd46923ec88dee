use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::train::{train_network, History, LabeledSample};
use super::{FusionNetwork, ModelConfig, ModelError, ModelInput, NEGATIVE, POSITIVE};
use crate::corpus::{normalize, Message};
use crate::encoder::{sentence_sequence, Embedding, EncoderBackend, EncoderError};
use crate::linguistic::{extract_features, AnnotatorRegistry, FeatureScaler, RawFeatures};
use crate::queries::SIMILARITY_COUNT;

/// Bundles the annotators and the sentence encoder used to turn messages
/// into model inputs.
#[derive(Clone, Copy)]
pub struct Featurizer<'a> {
    pub annotators: &'a AnnotatorRegistry,
    pub encoder: &'a dyn EncoderBackend,
}

/// Everything derived from one message that does not depend on a scaler or
/// a query.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedMessage {
    pub id: String,
    pub normalized: String,
    pub raw: RawFeatures,
    pub sentences: Vec<Embedding>,
    /// Embedding of the whole normalized message.
    pub embedding: Embedding,
}

impl PreparedMessage {
    pub fn input(
        &self,
        scaler: &FeatureScaler,
        similarity: Option<[f64; SIMILARITY_COUNT]>,
    ) -> ModelInput {
        ModelInput {
            sentences: self.sentences.clone(),
            features: scaler.apply(&self.raw),
            similarity,
        }
    }
}

impl<'a> Featurizer<'a> {
    pub fn new(annotators: &'a AnnotatorRegistry, encoder: &'a dyn EncoderBackend) -> Self {
        Featurizer {
            annotators,
            encoder,
        }
    }

    pub fn prepare(&self, message: &Message) -> Result<PreparedMessage, ModelError> {
        if !self.encoder.supports(&message.lang) {
            return Err(EncoderError::Backend {
                index: 0,
                reason: format!("language `{}` not supported by encoder", message.lang),
            }
            .into());
        }
        let annotation = self.annotators.annotate(message)?;
        let raw = extract_features(&annotation, &message.text);
        let normalized = normalize(&message.text);
        let sentences = sentence_sequence(&normalized, self.encoder)?;
        let embedding = self
            .encoder
            .encode(&[normalized.as_str()])?
            .pop()
            .ok_or(EncoderError::EmptyText { index: 0 })?;
        Ok(PreparedMessage {
            id: message.id.clone(),
            normalized,
            raw,
            sentences,
            embedding,
        })
    }

    pub fn prepare_all(&self, messages: &[Message]) -> Result<Vec<PreparedMessage>, ModelError> {
        messages.iter().map(|m| self.prepare(m)).collect()
    }
}

/// Informative-message classifier with the scaler and backend identity it
/// was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub network: FusionNetwork,
    pub scaler: FeatureScaler,
    pub backend_identity: String,
    pub seed: u64,
    pub history: History,
}

pub(crate) fn check_backend(expected: &str, encoder: &dyn EncoderBackend) -> Result<(), ModelError> {
    let found = encoder.identity();
    if found != expected {
        return Err(ModelError::BackendMismatch {
            expected: expected.into(),
            found,
        });
    }
    Ok(())
}

impl TrainedClassifier {
    /// Probability that the message is crisis relevant.
    pub fn predict(&self, message: &Message, featurizer: &Featurizer<'_>) -> Result<f64, ModelError> {
        check_backend(&self.backend_identity, featurizer.encoder)?;
        let prepared = featurizer.prepare(message)?;
        self.predict_prepared(&prepared)
    }

    pub fn predict_prepared(&self, prepared: &PreparedMessage) -> Result<f64, ModelError> {
        let p = self.network.predict(&prepared.input(&self.scaler, None))?;
        Ok(p[POSITIVE])
    }
}

pub fn predict_informative(
    classifier: &TrainedClassifier,
    message: &Message,
    featurizer: &Featurizer<'_>,
) -> Result<f64, ModelError> {
    classifier.predict(message, featurizer)
}

/// Trains `model` on the messages that carry an `informative` label.
pub fn train_classifier(
    mut model: FusionNetwork,
    train: &[Message],
    scaler: &FeatureScaler,
    featurizer: &Featurizer<'_>,
    config: &ModelConfig,
    seed: u64,
) -> Result<TrainedClassifier, ModelError> {
    if model.has_similarity_branch() {
        return Err(ModelError::Config(
            "the classifier takes no similarity branch".into(),
        ));
    }
    let labelled: Vec<&Message> = train.iter().filter(|m| m.informative.is_some()).collect();
    let mut samples = Vec::with_capacity(labelled.len());
    for m in labelled {
        let prepared = featurizer.prepare(m)?;
        samples.push(LabeledSample {
            input: prepared.input(scaler, None),
            label: if m.informative == Some(true) { POSITIVE } else { NEGATIVE },
        });
    }
    let history = train_network(&mut model, &samples, config, seed)?;
    Ok(TrainedClassifier {
        network: model,
        scaler: scaler.clone(),
        backend_identity: featurizer.encoder.identity(),
        seed,
        history,
    })
}

/// Builds the network, fits the feature scaler on the labelled training
/// messages and trains.
pub fn fit_classifier(
    train: &[Message],
    featurizer: &Featurizer<'_>,
    config: &ModelConfig,
    seed: u64,
) -> Result<TrainedClassifier, ModelError> {
    let model = FusionNetwork::build(config, false, seed)?;
    let labelled: Vec<Message> = train
        .iter()
        .filter(|m| m.informative.is_some())
        .cloned()
        .collect();
    if labelled.is_empty() {
        return Err(ModelError::NoTrainingData);
    }
    let prepared = featurizer.prepare_all(&labelled)?;
    let raws: Vec<RawFeatures> = prepared.iter().map(|p| p.raw).collect();
    let scaler = FeatureScaler::fit(&raws)?;
    let samples: Vec<LabeledSample> = prepared
        .iter()
        .zip(&labelled)
        .map(|(p, m)| LabeledSample {
            input: p.input(&scaler, None),
            label: if m.informative == Some(true) { POSITIVE } else { NEGATIVE },
        })
        .collect();
    let mut model = model;
    let history = train_network(&mut model, &samples, config, seed)?;
    Ok(TrainedClassifier {
        network: model,
        scaler,
        backend_identity: featurizer.encoder.identity(),
        seed,
        history,
    })
}
