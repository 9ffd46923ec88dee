//! The feature-fusion network shared by the informative-message classifier
//! and the per-category relevance ranker.
//!
//! Branches:
//! * sentence embeddings → LSTM → MLP 1024;256;128 (sigmoid, dropout 0.5)
//! * 15 scaled message features → MLP 128;24 (relu)
//! * 6 query-similarity features → MLP 128;24 (relu), ranker only
//!
//! Branch outputs are concatenated and mapped to a 2-way softmax
//! (index 0 = not relevant, index 1 = relevant).

mod classifier;
mod ranker;
mod train;

pub use classifier::{
    fit_classifier, predict_informative, train_classifier, Featurizer, PreparedMessage,
    TrainedClassifier,
};
pub use ranker::{fit_ranker, rank, train_ranker, RankOptions, RankedCandidate, TrainedRanker};
pub use train::{train_network, EpochRecord, History, LabeledSample};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::encoder::{Embedding, EncoderError};
use crate::linguistic::{LinguisticError, FEATURE_COUNT};
use crate::nn::{cross_entropy, softmax, Activation, Dense, Lstm, LstmTrace, Mlp, MlpTrace};
use crate::queries::{QueryError, SIMILARITY_COUNT};
use crate::rng::seeded;

pub const POSITIVE: usize = 1;
pub const NEGATIVE: usize = 0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("invalid model input: {0}")]
    Input(String),
    #[error("training data needs both classes; found only {0}")]
    SingleClass(&'static str),
    #[error("no labelled training examples")]
    NoTrainingData,
    #[error("model was trained with backend `{expected}`, got `{found}`")]
    BackendMismatch { expected: String, found: String },
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Linguistic(#[from] LinguisticError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// Architecture and training hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Dimension of the incoming sentence embeddings.
    pub embedding_dim: usize,
    pub lstm_layers: usize,
    pub lstm_units: usize,
    pub embedding_layers: Vec<usize>,
    pub embedding_activation: Activation,
    pub embedding_dropout: f64,
    pub text_layers: Vec<usize>,
    pub text_activation: Activation,
    pub similarity_layers: Vec<usize>,
    pub similarity_activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embedding_dim: crate::encoder::DEFAULT_DIMENSION,
            lstm_layers: 1,
            lstm_units: 128,
            embedding_layers: vec![1024, 256, 128],
            embedding_activation: Activation::Sigmoid,
            embedding_dropout: 0.5,
            text_layers: vec![128, 24],
            text_activation: Activation::Relu,
            similarity_layers: vec![128, 24],
            similarity_activation: Activation::Relu,
            learning_rate: 0.001,
            batch_size: 100,
            epochs: 10,
            patience: 3,
            validation_fraction: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn with_embedding_dim(mut self, dim: usize) -> Self {
        self.embedding_dim = dim;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: &str| Err(ModelError::Config(m.into()));
        if self.embedding_dim == 0 {
            return fail("embedding_dim must be positive");
        }
        if self.lstm_layers != 1 {
            return fail("exactly one LSTM layer is supported");
        }
        if self.lstm_units == 0 {
            return fail("lstm_units must be positive");
        }
        for (name, layers) in [
            ("embedding_layers", &self.embedding_layers),
            ("text_layers", &self.text_layers),
            ("similarity_layers", &self.similarity_layers),
        ] {
            if layers.is_empty() || layers.contains(&0) {
                return Err(ModelError::Config(format!(
                    "{name} must list at least one positive width"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.embedding_dropout) {
            return fail("embedding_dropout must be in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return fail("batch_size and epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return fail("validation_fraction must be in [0, 1)");
        }
        Ok(())
    }
}

/// One example as the network sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInput {
    pub sentences: Vec<Embedding>,
    pub features: [f64; FEATURE_COUNT],
    pub similarity: Option<[f64; SIMILARITY_COUNT]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionNetwork {
    pub lstm: Lstm,
    pub embedding_branch: Mlp,
    pub text_branch: Mlp,
    pub similarity_branch: Option<Mlp>,
    pub output: Dense,
}

pub(crate) struct ForwardTrace {
    lstm: LstmTrace,
    embedding: MlpTrace,
    text: MlpTrace,
    similarity: Option<MlpTrace>,
    fused: Vec<f64>,
    pub(crate) logits: Vec<f64>,
}

impl FusionNetwork {
    /// Builds an untrained network; weights are Glorot-uniform from `seed`.
    pub fn build(
        config: &ModelConfig,
        with_similarity_branch: bool,
        seed: u64,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = seeded(seed);
        let lstm = Lstm::new(config.embedding_dim, config.lstm_units, &mut rng);
        let embedding_branch = Mlp::new(
            config.lstm_units,
            &config.embedding_layers,
            config.embedding_activation,
            config.embedding_dropout,
            &mut rng,
        );
        let text_branch = Mlp::new(
            FEATURE_COUNT,
            &config.text_layers,
            config.text_activation,
            0.0,
            &mut rng,
        );
        let similarity_branch = with_similarity_branch.then(|| {
            Mlp::new(
                SIMILARITY_COUNT,
                &config.similarity_layers,
                config.similarity_activation,
                0.0,
                &mut rng,
            )
        });
        let fused = embedding_branch.output_width()
            + text_branch.output_width()
            + similarity_branch.as_ref().map_or(0, Mlp::output_width);
        let output = Dense::new(fused, 2, &mut rng);
        Ok(FusionNetwork {
            lstm,
            embedding_branch,
            text_branch,
            similarity_branch,
            output,
        })
    }

    pub fn has_similarity_branch(&self) -> bool {
        self.similarity_branch.is_some()
    }

    pub fn embedding_dim(&self) -> usize {
        self.lstm.inputs
    }

    /// Hidden widths of (embedding, text, similarity) branches.
    pub fn branch_widths(&self) -> (Vec<usize>, Vec<usize>, Option<Vec<usize>>) {
        (
            self.embedding_branch.widths(),
            self.text_branch.widths(),
            self.similarity_branch.as_ref().map(Mlp::widths),
        )
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub(crate) fn zeros_like(&self) -> Self {
        FusionNetwork {
            lstm: self.lstm.zeros_like(),
            embedding_branch: self.embedding_branch.zeros_like(),
            text_branch: self.text_branch.zeros_like(),
            similarity_branch: self.similarity_branch.as_ref().map(Mlp::zeros_like),
            output: Dense::zeros(self.output.inputs, self.output.outputs),
        }
    }

    pub(crate) fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut t = vec![
            &self.lstm.input_weights,
            &self.lstm.recurrent_weights,
            &self.lstm.bias,
        ];
        let branches = [Some(&self.embedding_branch), Some(&self.text_branch)]
            .into_iter()
            .chain(core::iter::once(self.similarity_branch.as_ref()))
            .flatten();
        for mlp in branches {
            for l in &mlp.layers {
                t.push(&l.weights);
                t.push(&l.bias);
            }
        }
        t.push(&self.output.weights);
        t.push(&self.output.bias);
        t
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut t = vec![
            &mut self.lstm.input_weights,
            &mut self.lstm.recurrent_weights,
            &mut self.lstm.bias,
        ];
        let branches = [Some(&mut self.embedding_branch), Some(&mut self.text_branch)]
            .into_iter()
            .chain(core::iter::once(self.similarity_branch.as_mut()))
            .flatten();
        for mlp in branches {
            for l in &mut mlp.layers {
                t.push(&mut l.weights);
                t.push(&mut l.bias);
            }
        }
        t.push(&mut self.output.weights);
        t.push(&mut self.output.bias);
        t
    }

    pub fn check_input(&self, input: &ModelInput) -> Result<(), ModelError> {
        if input.sentences.is_empty() {
            return Err(ModelError::Input("empty sentence sequence".into()));
        }
        if let Some(e) = input.sentences.iter().find(|e| e.dim() != self.lstm.inputs) {
            return Err(ModelError::Input(format!(
                "sentence embedding has dimension {}, expected {}",
                e.dim(),
                self.lstm.inputs
            )));
        }
        match (&input.similarity, &self.similarity_branch) {
            (Some(_), None) => Err(ModelError::Input(
                "similarity features given to a model without a similarity branch".into(),
            )),
            (None, Some(_)) => Err(ModelError::Input(
                "model expects 6 similarity features".into(),
            )),
            _ => Ok(()),
        }
    }

    pub(crate) fn forward_trace(
        &self,
        input: &ModelInput,
        rng: Option<&mut rand_chacha::ChaCha8Rng>,
    ) -> ForwardTrace {
        let seq: Vec<&[f64]> = input.sentences.iter().map(|e| &e[..]).collect();
        let lstm = self.lstm.forward(&seq);
        let embedding = self.embedding_branch.forward(lstm.output(), rng);
        let text = self
            .text_branch
            .forward::<rand_chacha::ChaCha8Rng>(&input.features, None);
        let similarity = match (&self.similarity_branch, &input.similarity) {
            (Some(b), Some(s)) => Some(b.forward::<rand_chacha::ChaCha8Rng>(s, None)),
            _ => None,
        };
        let mut fused = Vec::with_capacity(self.output.inputs);
        fused.extend_from_slice(embedding.output());
        fused.extend_from_slice(text.output());
        if let Some(s) = &similarity {
            fused.extend_from_slice(s.output());
        }
        let logits = self.output.forward(&fused);
        ForwardTrace {
            lstm,
            embedding,
            text,
            similarity,
            fused,
            logits,
        }
    }

    pub(crate) fn backward(&self, trace: &ForwardTrace, d_logits: &[f64], grad: &mut FusionNetwork) {
        let d_fused = self.output.backward(&trace.fused, d_logits, &mut grad.output);
        let ew = self.embedding_branch.output_width();
        let tw = self.text_branch.output_width();
        let d_emb = self
            .embedding_branch
            .backward(&trace.embedding, &d_fused[..ew], &mut grad.embedding_branch);
        self.text_branch
            .backward(&trace.text, &d_fused[ew..ew + tw], &mut grad.text_branch);
        if let (Some(branch), Some(t), Some(g)) = (
            &self.similarity_branch,
            &trace.similarity,
            grad.similarity_branch.as_mut(),
        ) {
            branch.backward(t, &d_fused[ew + tw..], g);
        }
        self.lstm.backward(&trace.lstm, &d_emb, &mut grad.lstm);
    }

    /// Raw output scores before the softmax.
    pub fn logits(&self, input: &ModelInput) -> Result<Vec<f64>, ModelError> {
        self.check_input(input)?;
        Ok(self.forward_trace(input, None).logits)
    }

    /// Class probabilities `[p_not_relevant, p_relevant]`.
    pub fn predict(&self, input: &ModelInput) -> Result<[f64; 2], ModelError> {
        let p = softmax(&self.logits(input)?);
        Ok([p[0], p[1]])
    }

    pub fn loss(&self, input: &ModelInput, label: usize) -> Result<f64, ModelError> {
        Ok(cross_entropy(&self.logits(input)?, label))
    }

    /// Same network minus the similarity branch (and its output columns).
    pub fn without_similarity_branch(&self) -> FusionNetwork {
        let Some(sim) = &self.similarity_branch else {
            return self.clone();
        };
        let keep = self.output.inputs - sim.output_width();
        let mut output = Dense::zeros(keep, self.output.outputs);
        for o in 0..self.output.outputs {
            let src = &self.output.weights[o * self.output.inputs..o * self.output.inputs + keep];
            output.weights[o * keep..(o + 1) * keep].copy_from_slice(src);
        }
        output.bias.copy_from_slice(&self.output.bias);
        FusionNetwork {
            lstm: self.lstm.clone(),
            embedding_branch: self.embedding_branch.clone(),
            text_branch: self.text_branch.clone(),
            similarity_branch: None,
            output,
        }
    }

    /// Zeroes the output weights fed by the similarity branch.
    pub fn zero_similarity_branch(&mut self) {
        let Some(sim) = &self.similarity_branch else {
            return;
        };
        let start = self.output.inputs - sim.output_width();
        for o in 0..self.output.outputs {
            let row = &mut self.output.weights[o * self.output.inputs..(o + 1) * self.output.inputs];
            row[start..].fill(0.0);
        }
    }
}

/// Predicted class: argmax over the two probabilities (positive wins only
/// if strictly above 0.5).
pub fn label_of(probabilities: &[f64; 2]) -> usize {
    if probabilities[POSITIVE] > 0.5 {
        POSITIVE
    } else {
        NEGATIVE
    }
}
