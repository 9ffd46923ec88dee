use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{label_of, FusionNetwork, ModelConfig, ModelError, ModelInput, NEGATIVE, POSITIVE};
use crate::nn::{cross_entropy, softmax, Adam};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub input: ModelInput,
    /// 1 = relevant, 0 = not relevant.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches (dropout active).
    pub train_loss: f64,
    /// Accuracy on the training portion after the epoch, dropout off.
    pub train_accuracy: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

fn mean_loss(net: &FusionNetwork, samples: &[&LabeledSample]) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|s| cross_entropy(&net.forward_trace(&s.input, None).logits, s.label))
        .sum();
    total / samples.len() as f64
}

fn accuracy(net: &FusionNetwork, samples: &[&LabeledSample]) -> f64 {
    let correct = samples
        .iter()
        .filter(|s| {
            let p = softmax(&net.forward_trace(&s.input, None).logits);
            label_of(&[p[0], p[1]]) == s.label
        })
        .count();
    correct as f64 / samples.len() as f64
}

/// Mini-batch Adam on the binary cross-entropy of the softmax output.
///
/// A shuffled `validation_fraction` slice is held out (when it yields at
/// least one example); training stops once validation loss has not improved
/// for `patience` epochs and the best weights are restored. Everything is
/// driven by `seed`, so two runs produce identical histories.
pub fn train_network(
    net: &mut FusionNetwork,
    samples: &[LabeledSample],
    config: &ModelConfig,
    seed: u64,
) -> Result<History, ModelError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(ModelError::NoTrainingData);
    }
    for s in samples {
        net.check_input(&s.input)?;
        if s.label > POSITIVE {
            return Err(ModelError::Input("label must be 0 or 1".into()));
        }
    }
    if samples.iter().all(|s| s.label == POSITIVE) {
        return Err(ModelError::SingleClass("positive"));
    }
    if samples.iter().all(|s| s.label == NEGATIVE) {
        return Err(ModelError::SingleClass("negative"));
    }

    let mut rng = seeded(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = libm::floor(samples.len() as f64 * config.validation_fraction) as usize;
    let n_val = if samples.len() - n_val < 1 { 0 } else { n_val };
    let validation: Vec<&LabeledSample> = order[..n_val].iter().map(|&i| &samples[i]).collect();
    let mut train_idx: Vec<usize> = order[n_val..].to_vec();
    let train_view: Vec<&LabeledSample> = train_idx.iter().map(|&i| &samples[i]).collect();

    let mut adam = Adam::new(config.learning_rate);
    let mut history = History::default();
    let mut best: Option<(f64, FusionNetwork)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for batch in train_idx.chunks(config.batch_size) {
            let mut grad = net.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let s = &samples[i];
                let trace = net.forward_trace(&s.input, Some(&mut rng));
                let p = softmax(&trace.logits);
                batch_loss += cross_entropy(&trace.logits, s.label);
                let d: Vec<f64> = (0..2)
                    .map(|k| scale * (p[k] - if k == s.label { 1.0 } else { 0.0 }))
                    .collect();
                net.backward(&trace, &d, &mut grad);
            }
            adam.step(net.tensors_mut(), grad.tensors());
            loss_sum += batch_loss * scale;
            batches += 1;
        }
        let validation_loss = (!validation.is_empty()).then(|| mean_loss(net, &validation));
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            train_accuracy: accuracy(net, &train_view),
            validation_loss,
        });

        let monitored = validation_loss.unwrap_or(loss_sum / batches as f64);
        match &best {
            Some((b, _)) if monitored >= *b => {
                since_best += 1;
                // patience 0 disables early stopping
                if config.patience > 0 && since_best >= config.patience {
                    history.stopped_early = epoch < config.epochs;
                    break;
                }
            }
            _ => {
                best = Some((monitored, net.clone()));
                history.best_epoch = epoch;
                since_best = 0;
            }
        }
    }
    if let Some((_, weights)) = best {
        *net = weights;
    }
    Ok(history)
}
