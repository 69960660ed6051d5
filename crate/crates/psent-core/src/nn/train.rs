//! Seeded training loop with best-validation checkpointing.

use alloc::vec::Vec;

use super::adam::{AdamConfig, AdamState};
use super::loss::{focal_loss, FocalLossParams};
use super::model::{ArchConfig, SEResNet18};
use super::tensor::Tensor4;
use super::{NnError, Scalar};
use crate::rng::SeedRng;

/// A classification dataset: stacked inputs plus one label per sample.
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    inputs: Tensor4<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> Dataset<T> {
    /// Wrap samples, checking label count and range.
    pub fn new(inputs: Tensor4<T>, labels: Vec<usize>) -> Result<Self, NnError> {
        if inputs.n != labels.len() {
            return Err(NnError::LengthMismatch {
                left: inputs.n,
                right: labels.len(),
            });
        }
        for (i, &label) in labels.iter().enumerate() {
            if label > 1 {
                return Err(NnError::LabelOutOfRange { index: i, label });
            }
        }
        if !inputs.is_finite() {
            return Err(NnError::NonFinite { at: "dataset" });
        }
        Ok(Self { inputs, labels })
    }

    /// Sample count.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// True when the dataset holds no samples.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The stacked input tensor.
    pub fn inputs(&self) -> &Tensor4<T> {
        &self.inputs
    }

    /// Labels, one per sample.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0usize; 2];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    fn gather(&self, indices: &[usize]) -> (Tensor4<T>, Vec<usize>) {
        let mut batch = Tensor4::zeros(indices.len(), self.inputs.c, self.inputs.h, self.inputs.w);
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            batch.sample_mut(row).copy_from_slice(self.inputs.sample(i));
            labels.push(self.labels[i]);
        }
        (batch, labels)
    }
}

/// Training-run settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    /// Full passes over the training split.
    pub epochs: usize,
    /// Samples per optimizer step.
    pub batch_size: usize,
    /// Optimizer settings.
    pub adam: AdamConfig,
    /// Focal-loss focusing exponent.
    pub gamma: f64,
    /// Class weights; `None` derives them from inverse training-class
    /// frequency.
    pub alpha: Option<[f64; 2]>,
    /// Master seed: initialization and every epoch's shuffle derive from it.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            adam: AdamConfig::default(),
            gamma: 2.0,
            alpha: None,
            seed: 0,
        }
    }
}

/// Per-epoch record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    /// Epoch index, 0-based.
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub train_loss: f64,
    /// Validation loss.
    pub val_loss: f64,
    /// Validation recall per class; `None` when the class is absent.
    pub val_recall: [Option<f64>; 2],
}

/// Metrics from one evaluation pass.
#[derive(Clone, Debug)]
pub struct EvalMetrics {
    /// Mean loss.
    pub loss: f64,
    /// Recall per class; `None` when the class is absent.
    pub recall: [Option<f64>; 2],
    /// Argmax predictions, one per sample.
    pub predictions: Vec<usize>,
}

/// A finished training run.
pub struct TrainOutcome<T> {
    /// The best-validation checkpoint (the initial model when `epochs` was
    /// zero).
    pub model: SEResNet18<T>,
    /// One record per epoch.
    pub history: Vec<EpochStats>,
    /// Which epoch produced `model`; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

/// Predicted class of one logit row (ties resolve to class 0).
pub fn predict_row<T: Scalar>(z0: T, z1: T) -> usize {
    usize::from(z1 > z0)
}

/// Run the model over a dataset in inference mode.
pub fn evaluate<T: Scalar>(
    model: &SEResNet18<T>,
    set: &Dataset<T>,
    batch_size: usize,
    fl: &FocalLossParams,
) -> Result<EvalMetrics, NnError> {
    if set.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(NnError::InvalidParam("batch size must be positive"));
    }
    let indices: Vec<usize> = (0..set.len()).collect();
    let mut total_loss = 0.0;
    let mut predictions = Vec::with_capacity(set.len());
    for chunk in indices.chunks(batch_size) {
        let (xb, yb) = set.gather(chunk);
        let logits = model.forward_eval(&xb)?;
        let (loss, _) = focal_loss(&logits, &yb, fl)?;
        total_loss += loss.to_f64().unwrap() * chunk.len() as f64;
        for row in logits.chunks(2) {
            predictions.push(predict_row(row[0], row[1]));
        }
    }
    let mut correct = [0usize; 2];
    let counts = set.class_counts();
    for (&pred, &truth) in predictions.iter().zip(set.labels()) {
        if pred == truth {
            correct[truth] += 1;
        }
    }
    let recall = [0, 1].map(|c| (counts[c] > 0).then(|| correct[c] as f64 / counts[c] as f64));
    Ok(EvalMetrics {
        loss: total_loss / set.len() as f64,
        recall,
        predictions,
    })
}

fn better(
    cand: (Option<f64>, f64),
    best: (Option<f64>, f64),
) -> bool {
    match (cand.0, best.0) {
        (Some(a), Some(b)) => a > b || (a == b && cand.1 < best.1),
        (Some(_), None) => true,
        (None, None) => cand.1 < best.1,
        (None, Some(_)) => false,
    }
}

/// Train a fresh model. Deterministic: the outcome is a pure function of
/// the architecture, the configuration (seed included), and the datasets.
pub fn train<T: Scalar>(
    arch: &ArchConfig,
    cfg: &TrainConfig,
    train_set: &Dataset<T>,
    val_set: &Dataset<T>,
) -> Result<TrainOutcome<T>, NnError> {
    arch.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(NnError::InvalidParam("batch size must be positive"));
    }
    if train_set.inputs().c != arch.in_channels {
        return Err(NnError::ChannelMismatch {
            expected: arch.in_channels,
            got: train_set.inputs().c,
        });
    }

    let alpha = match cfg.alpha {
        Some(a) => a,
        None => {
            let [n0, n1] = train_set.class_counts();
            FocalLossParams::alpha_from_counts(n0, n1)?
        }
    };
    let fl = FocalLossParams {
        gamma: cfg.gamma,
        alpha,
    };
    fl.validate()?;

    let mut model = SEResNet18::<T>::new(arch, cfg.seed)?;
    let mut adam = AdamState::new(cfg.adam)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(Option<f64>, f64, usize, SEResNet18<T>)> = None;

    let n = train_set.len();
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        SeedRng::with_stream(cfg.seed, 1 + epoch as u64).shuffle(&mut order);

        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (xb, yb) = train_set.gather(chunk);
            model.zero_grad();
            let (logits, cache) = match model.forward_train(&xb) {
                Ok(v) => v,
                Err(NnError::NonFinite { .. }) => return Err(NnError::Diverged { epoch }),
                Err(e) => return Err(e),
            };
            let (loss, dlogits) = match focal_loss(&logits, &yb, &fl) {
                Ok(v) => v,
                Err(NnError::NonFinite { .. }) => return Err(NnError::Diverged { epoch }),
                Err(e) => return Err(e),
            };
            epoch_loss += loss.to_f64().unwrap() * chunk.len() as f64;
            model.backward(&cache, &dlogits)?;
            adam.step(&mut model.tensors_mut())?;
        }

        let metrics = evaluate(&model, val_set, cfg.batch_size, &fl)?;
        history.push(EpochStats {
            epoch,
            train_loss: epoch_loss / n as f64,
            val_loss: metrics.loss,
            val_recall: metrics.recall,
        });

        let key = (metrics.recall[1], metrics.loss);
        let improved = match &best {
            Some((r, l, _, _)) => better(key, (*r, *l)),
            None => true,
        };
        if improved {
            best = Some((key.0, key.1, epoch, model.clone()));
        }
    }

    match best {
        Some((_, _, epoch, snapshot)) => Ok(TrainOutcome {
            model: snapshot,
            history,
            best_epoch: Some(epoch),
        }),
        None => Ok(TrainOutcome {
            model,
            history,
            best_epoch: None,
        }),
    }
}
