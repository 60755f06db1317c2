//! End-to-end training: one SVD per graph, then Adam epochs with periodic
//! evaluation and validation-based model selection.

mod history;
mod report;

use std::sync::Arc;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState, ParamSet, Tape};
use crate::error::{Error, Result};
use crate::graph::Dataset;
use crate::model::{compute_basis, predict, Model, ModelConfig, ModelShape, PropagationBasis, SpectralConfig};
use crate::numerics::Matrix;

pub use history::{History, HistoryRecord};
pub use report::{format_mean_std, multi_seed_run, sample_std, AggregateReport, SeedResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub spectral: SpectralConfig,
    pub optimizer: AdamConfig,
    pub max_epochs: usize,
    pub eval_every: usize,
    /// Epochs without a validation improvement before stopping, counted in
    /// whole evaluations (`ceil(patience / eval_every)`).
    pub patience: usize,
    /// Seeds weight initialization and dropout.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            spectral: SpectralConfig::default(),
            optimizer: AdamConfig::default(),
            max_epochs: 500,
            eval_every: 10,
            patience: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.spectral.validate()?;
        self.optimizer.validate()?;
        if self.max_epochs == 0 || self.eval_every == 0 || self.patience == 0 {
            return Err(Error::Config(
                "max_epochs, eval_every and patience must all be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn patience_evaluations(&self) -> usize {
        self.patience.div_ceil(self.eval_every)
    }
}

/// Accuracy and loss of a model on one node set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `correct / total`; NaN for an empty set.
    pub accuracy: f64,
    /// Mean cross-entropy; NaN for an empty set.
    pub loss: f64,
    pub correct: usize,
    pub total: usize,
    /// Accuracy per class, `None` for classes absent from the set.
    pub per_class_accuracy: Vec<Option<f64>>,
}

impl Metrics {
    pub fn from_logits(logits: &Matrix, labels: &[usize], ids: &[usize], num_classes: usize) -> Result<Metrics> {
        let pred = predict(logits);
        let mut hits = vec![0usize; num_classes];
        let mut counts = vec![0usize; num_classes];
        for &i in ids {
            counts[labels[i]] += 1;
            if pred.labels[i] == labels[i] {
                hits[labels[i]] += 1;
            }
        }
        let correct: usize = hits.iter().sum();
        let total = ids.len();
        let (accuracy, loss) = if total == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (correct as f64 / total as f64, loss(logits, labels, ids)?)
        };
        Ok(Metrics {
            accuracy,
            loss,
            correct,
            total,
            per_class_accuracy: hits
                .iter()
                .zip(&counts)
                .map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64))
                .collect(),
        })
    }
}

/// Mean cross-entropy of `logits` over the rows in `mask`.
pub fn loss(logits: &Matrix, labels: &[usize], mask: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let z = tape.constant(logits.clone())?;
    let l = tape.masked_cross_entropy(z, labels, mask)?;
    Ok(tape.scalar(l))
}

/// Dropout generator for one epoch of one run.
fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(epoch as u64).to_le_bytes());
    key[16..24].copy_from_slice(b"dropout\0");
    ChaCha8Rng::from_seed(key)
}

/// The selected model plus its training trajectory.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: History,
    pub basis: Arc<PropagationBasis>,
}

/// Normalizes and factors the graph once, then trains.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let basis = compute_basis(&dataset.graph, &config.spectral)?;
    info!(
        "spectral basis: {} nodes, rank {}, sigma_max {:.4}",
        dataset.num_nodes(),
        basis.rank(),
        basis.sigma.first().copied().unwrap_or(0.0)
    );
    train_with_basis(dataset, Arc::new(PropagationBasis::new(&basis)), config)
}

/// Training against a precomputed basis.
pub fn train_with_basis(
    dataset: &Dataset,
    basis: Arc<PropagationBasis>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let shape = ModelShape {
        input_dim: dataset.feature_dim(),
        num_classes: dataset.num_classes,
    };
    let mut model = Model::new(config.model.clone(), shape, config.seed)?;
    let mut adam = AdamState::new(config.optimizer, &model.params);
    let features = Arc::new(dataset.features.clone());
    let split = &dataset.split;
    let patience = config.patience_evaluations();

    let mut history = History::default();
    let mut best: Option<(f64, usize, ParamSet)> = None;
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        let mut rng = epoch_rng(config.seed, epoch);
        let mut tape = Tape::new();
        let numerical = |e: Error| match e {
            Error::NonFinite(what) => Error::Numerical {
                epoch,
                detail: format!("non-finite {what}"),
            },
            other => other,
        };
        let vars = model.params.register(&mut tape)?;
        let x = tape.constant_shared(Arc::clone(&features))?;
        let out = model
            .forward(&mut tape, &vars, x, &basis, true, &mut rng)
            .map_err(numerical)?;
        let loss_var = tape
            .masked_cross_entropy(out.logits, &dataset.labels, &split.train)
            .map_err(numerical)?;
        let train_loss = tape.scalar(loss_var);
        let grads = tape.backward(loss_var)?;
        let grads = model.params.collect_grads(&vars, &grads);
        if !train_loss.is_finite() || !grads.iter().all(|(_, g)| g.is_finite()) {
            let norms: Vec<String> = grads
                .iter()
                .map(|(n, g)| format!("{n}={:.3e}", g.frobenius_norm()))
                .collect();
            return Err(Error::Numerical {
                epoch,
                detail: format!("loss {train_loss}; gradient norms {}", norms.join(", ")),
            });
        }
        drop(tape);
        adam.step(&mut model.params, &grads)?;

        if epoch % config.eval_every == 0 || epoch == config.max_epochs {
            let logits = model.logits(&features, &basis).map_err(numerical)?;
            let c = dataset.num_classes;
            let tr = Metrics::from_logits(&logits, &dataset.labels, &split.train, c)?;
            let va = Metrics::from_logits(&logits, &dataset.labels, &split.val, c)?;
            let te = Metrics::from_logits(&logits, &dataset.labels, &split.test, c)?;
            // Without a validation set, selection falls back to training accuracy.
            let score = if va.total > 0 { va.accuracy } else { tr.accuracy };
            history.records.push(HistoryRecord {
                epoch,
                train_acc: tr.accuracy,
                val_acc: va.accuracy,
                test_acc: te.accuracy,
                train_loss: tr.loss,
                val_loss: va.loss,
            });
            debug!(
                "epoch {epoch}: loss {train_loss:.4} train {:.3} val {:.3} test {:.3}",
                tr.accuracy, va.accuracy, te.accuracy
            );
            if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                best = Some((score, epoch, model.params.clone()));
                stale = 0;
            } else {
                stale += 1;
            }
            if stale >= patience {
                history.stopped_early = true;
                history.final_epoch = epoch;
                break;
            }
        }
        history.final_epoch = epoch;
    }

    let (_, best_epoch, params) = best.expect("the last epoch is always evaluated");
    history.best_val_epoch = best_epoch;
    info!(
        "training finished at epoch {}; selected epoch {best_epoch}",
        history.final_epoch
    );
    Ok(TrainOutcome {
        model: model.with_params(params)?,
        history,
        basis,
    })
}

/// Eval-mode metrics of `model` on a named split (`train`, `val` or `test`).
pub fn evaluate(model: &Model, dataset: &Dataset, basis: &PropagationBasis, split: &str) -> Result<Metrics> {
    let ids = dataset
        .split
        .by_name(split)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown split {split:?}")))?;
    let logits = model.logits(&Arc::new(dataset.features.clone()), basis)?;
    Metrics::from_logits(&logits, &dataset.labels, ids, dataset.num_classes)
}
