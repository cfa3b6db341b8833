//! Mini-batch training with validation-MCC model selection.
//!
//! A run is fully determined by its seed: parameter initialization, the
//! per-epoch shuffle and the dropout masks each draw from seeded generators.

mod adam;
mod search;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Tensor};
use crate::eval::{metrics, ConfusionMatrix, EvalError, EvalReport, Prediction};
use crate::ingest::{SignRecord, TrackerKind};
use crate::models::{
    batch_input, init_params, majority_index, Architecture, InputShape, Mode, ModelConfig, ModelError,
    Network, Params, Provenance, TrainedModel,
};
use crate::phonology::{PropertyKind, Taxonomy};
use crate::rng::SplitMix64;
use crate::splits::{Partition, SplitManifest, SplitMode};

pub use adam::Adam;
pub use search::{
    search, seed_study, ArchitectureSpace, SearchOutcome, SearchSpace, SeedRun, SeedStudy, TrialRecord, TrialStatus,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("the {0} split is empty")]
    EmptySplit(Partition),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss { epoch: usize, batch: usize, detail: String },
    #[error("manifest references unknown video {0:?}")]
    UnknownRecord(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("every search trial failed")]
    NoSuccessfulTrial,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassWeighting {
    #[default]
    None,
    /// Class `c` weighs `N / (K · n_c)` over the training split.
    InverseFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Epochs between learning-rate decays.
    pub scheduler_step_size: usize,
    pub gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Linear ramp over the first epochs; 0 disables it.
    pub warmup_epochs: usize,
    pub class_weighting: ClassWeighting,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            scheduler_step_size: 10,
            gamma: 0.5,
            epochs: 30,
            batch_size: 32,
            warmup_epochs: 0,
            class_weighting: ClassWeighting::None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if self.batch_size == 0 || self.scheduler_step_size == 0 {
            return bad("batch_size and scheduler_step_size must be positive".into());
        }
        Ok(())
    }

    /// `lr₀ · gamma^⌊epoch / step⌋`, scaled by `(epoch + 1) / warmup` during warmup.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let decays = (epoch / self.scheduler_step_size) as i32;
        let lr = self.learning_rate * self.gamma.powi(decays);
        if epoch < self.warmup_epochs {
            lr * (epoch + 1) as f64 / self.warmup_epochs as f64
        } else {
            lr
        }
    }
}

/// One labelled sample of a task.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub record: &'a SignRecord,
    /// Index into [`Task::classes`]; `None` for a class unseen in training.
    pub target: Option<usize>,
}

/// One property's classification problem over a split.
#[derive(Debug, Clone)]
pub struct Task<'a> {
    pub property: PropertyKind,
    pub mode: SplitMode,
    pub tracker: Option<TrackerKind>,
    pub split_hash: String,
    /// Values with support in the training split, in taxonomy order.
    pub classes: Vec<String>,
    pub train: Vec<Sample<'a>>,
    pub val: Vec<Sample<'a>>,
    pub test: Vec<Sample<'a>>,
}

impl<'a> Task<'a> {
    pub fn new(records: &'a [SignRecord], manifest: &SplitManifest, taxonomy: &Taxonomy) -> Result<Task<'a>, TrainError> {
        let property = manifest.spec.property;
        let by_id: BTreeMap<&str, &SignRecord> = records.iter().map(|r| (r.video_id.as_str(), r)).collect();
        let resolve = |part: Partition| -> Result<Vec<&'a SignRecord>, TrainError> {
            manifest
                .ids(part)
                .iter()
                .map(|id| by_id.get(id.as_str()).copied().ok_or_else(|| TrainError::UnknownRecord(id.clone())))
                .collect()
        };
        let (train, val, test) = (resolve(Partition::Train)?, resolve(Partition::Val)?, resolve(Partition::Test)?);
        let present: BTreeSet<&str> = train.iter().map(|r| r.label.get(property)).collect();
        let classes: Vec<String> = taxonomy
            .values(property)
            .iter()
            .filter(|v| present.contains(v.code.as_str()))
            .map(|v| v.code.clone())
            .collect();
        let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let samples = |rs: Vec<&'a SignRecord>| -> Vec<Sample<'a>> {
            rs.into_iter()
                .map(|record| Sample {
                    record,
                    target: index.get(record.label.get(property)).copied(),
                })
                .collect()
        };
        let tracker = records.first().map(|r| r.sequence.tracker());
        Ok(Task {
            property,
            mode: manifest.spec.mode,
            tracker,
            split_hash: manifest.dataset_hash.clone(),
            train: samples(train),
            val: samples(val),
            test: samples(test),
            classes,
        })
    }

    pub fn samples(&self, part: Partition) -> &[Sample<'a>] {
        match part {
            Partition::Train => &self.train,
            Partition::Val => &self.val,
            Partition::Test => &self.test,
        }
    }

    /// Model configuration sized for this task.
    pub fn model_config(&self, architecture: Architecture, dropout: f64) -> Result<ModelConfig, TrainError> {
        let first = self.train.first().ok_or(TrainError::EmptySplit(Partition::Train))?;
        let mut config = ModelConfig::new(architecture, InputShape::of(&first.record.sequence), self.classes.len());
        config.dropout = dropout;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub val_mcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Earliest epoch with the highest validation MCC.
    pub best_epoch: usize,
}

impl TrainHistory {
    /// Earliest argmax of validation MCC over the recorded epochs.
    pub fn argmax_val_mcc(&self) -> Option<usize> {
        let mut best: Option<&EpochRecord> = None;
        for e in &self.epochs {
            if best.is_none_or(|b| e.val_mcc > b.val_mcc) {
                best = Some(e);
            }
        }
        best.map(|e| e.epoch)
    }

    /// One JSON object per epoch.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("epoch serializes") + "\n")
            .collect()
    }
}

fn class_weights(samples: &[Sample], k: usize, weighting: ClassWeighting) -> Option<Vec<f64>> {
    match weighting {
        ClassWeighting::None => None,
        ClassWeighting::InverseFrequency => {
            let mut counts = vec![0usize; k];
            for s in samples {
                if let Some(t) = s.target {
                    counts[t] += 1;
                }
            }
            let n = samples.len() as f64;
            Some(
                counts
                    .iter()
                    .map(|&c| if c == 0 { 0.0 } else { n / (k as f64 * c as f64) })
                    .collect(),
            )
        }
    }
}

fn targets_of(samples: &[Sample]) -> Vec<usize> {
    samples.iter().filter_map(|s| s.target).collect()
}

/// Predicted class indices for `samples`.
pub fn predict_samples(model: &TrainedModel, samples: &[Sample]) -> Result<Vec<usize>, TrainError> {
    let seqs: Vec<_> = samples.iter().map(|s| &s.record.sequence).collect();
    Ok(model.predict_batch(&seqs)?)
}

/// Confusion matrix over the task classes plus one trailing slot for
/// classes unseen in training.
fn confusion(samples: &[Sample], predictions: &[usize], k: usize) -> Result<ConfusionMatrix, TrainError> {
    let truth: Vec<usize> = samples.iter().map(|s| s.target.unwrap_or(k)).collect();
    Ok(ConfusionMatrix::from_predictions(&truth, predictions, k + 1)?)
}

fn split_accuracy_mcc(model: &TrainedModel, samples: &[Sample]) -> Result<(f64, f64), TrainError> {
    let predictions = predict_samples(model, samples)?;
    let m = metrics(&confusion(samples, &predictions, model.config.num_classes)?)?;
    Ok((m.accuracy, m.mcc))
}

fn baseline_model(task: &Task, config: &ModelConfig, samples: &[Sample], provenance: Provenance) -> Result<TrainedModel, TrainError> {
    let majority = majority_index(&targets_of(samples), task.classes.len()).ok_or(TrainError::EmptySplit(Partition::Train))?;
    Ok(TrainedModel::new(config.clone(), task.classes.clone(), majority, Params::new(), provenance)?)
}

fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::keyed(seed, format!("epoch/{epoch}").as_bytes()).shuffle(&mut order);
    order
}

fn non_finite(epoch: usize, batch: usize, e: impl ToString) -> TrainError {
    TrainError::NonFiniteLoss {
        epoch,
        batch,
        detail: e.to_string(),
    }
}

/// Runs one epoch of mini-batch updates; returns the mean training loss.
fn run_epoch(
    network: &Network,
    params: &mut Params,
    optimizer: &mut Adam,
    samples: &[Sample],
    weights: Option<&[f64]>,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64, TrainError> {
    let order = epoch_order(cfg.seed, epoch, samples.len());
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let lr = cfg.learning_rate_at(epoch);
    let mut loss_sum = 0.0;
    let mut counted = 0usize;
    for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
        let chunk: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).filter(|s| s.target.is_some()).collect();
        if chunk.is_empty() {
            continue;
        }
        let seqs: Vec<_> = chunk.iter().map(|s| &s.record.sequence).collect();
        let targets: Vec<usize> = chunk.iter().filter_map(|s| s.target).collect();
        let input = batch_input(network.config(), &seqs)?;

        let mut tape = Tape::new();
        let vars = params.leaves(&mut tape);
        let x = tape.constant(input);
        let logits = match network.forward(&mut tape, &vars, x, &mut Mode::Train(&mut dropout_rng)) {
            Err(ModelError::Autodiff(e @ AutodiffError::NonFinite { .. })) => return Err(non_finite(epoch, batch, e)),
            other => other?,
        };
        let (loss, _) = tape
            .softmax_cross_entropy(logits, &targets, weights)
            .map_err(|e| non_finite(epoch, batch, e))?;
        let value = tape.value(loss).data()[0];
        let mut grads = tape.backward(loss).map_err(|e| non_finite(epoch, batch, e))?;
        let grads: Vec<Tensor> = vars
            .iter()
            .zip(params.tensors())
            .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        if !grads.iter().all(Tensor::all_finite) {
            return Err(non_finite(epoch, batch, "non-finite gradient"));
        }
        optimizer.update(params, &grads, lr);
        if !params.tensors().all(Tensor::all_finite) {
            return Err(non_finite(epoch, batch, "non-finite parameters after update"));
        }
        loss_sum += value * targets.len() as f64;
        counted += targets.len();
    }
    Ok(if counted == 0 { 0.0 } else { loss_sum / counted as f64 })
}

fn check_config(task: &Task, config: &ModelConfig, cfg: &TrainConfig) -> Result<(), TrainError> {
    cfg.validate()?;
    config.validate()?;
    if config.num_classes != task.classes.len() {
        return Err(TrainError::InvalidConfig(format!(
            "model has {} classes but the training split supports {}",
            config.num_classes,
            task.classes.len()
        )));
    }
    Ok(())
}

/// Trains on the training split, selecting the epoch with the best
/// validation MCC and restoring its parameters.
pub fn train(task: &Task, config: &ModelConfig, cfg: &TrainConfig) -> Result<(TrainedModel, TrainHistory), TrainError> {
    if task.train.is_empty() {
        return Err(TrainError::EmptySplit(Partition::Train));
    }
    if task.val.is_empty() {
        return Err(TrainError::EmptySplit(Partition::Val));
    }
    check_config(task, config, cfg)?;
    let provenance = |epochs| Provenance {
        seed: cfg.seed,
        split_hash: task.split_hash.clone(),
        epochs,
    };

    if config.architecture == Architecture::Baseline {
        let model = baseline_model(task, config, &task.train, provenance(0))?;
        let (train_accuracy, _) = split_accuracy_mcc(&model, &task.train)?;
        let (val_accuracy, val_mcc) = split_accuracy_mcc(&model, &task.val)?;
        let history = TrainHistory {
            epochs: vec![EpochRecord {
                epoch: 0,
                learning_rate: 0.0,
                train_loss: 0.0,
                train_accuracy,
                val_accuracy,
                val_mcc,
            }],
            best_epoch: 0,
        };
        return Ok((model, history));
    }

    let network = Network::new(config.clone())?;
    let mut params = init_params(config, cfg.seed)?;
    let mut optimizer = Adam::new(&params);
    let weights = class_weights(&task.train, task.classes.len(), cfg.class_weighting);
    let majority = majority_index(&targets_of(&task.train), task.classes.len()).unwrap_or(0);
    let mut history = TrainHistory {
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
    };
    let mut best: Option<(f64, Params)> = None;
    for epoch in 0..cfg.epochs {
        let train_loss = run_epoch(&network, &mut params, &mut optimizer, &task.train, weights.as_deref(), cfg, epoch)?;
        let snapshot = TrainedModel::with_network(
            network.clone(),
            task.classes.clone(),
            majority,
            params.clone(),
            provenance(epoch + 1),
        )?;
        let (train_accuracy, _) = split_accuracy_mcc(&snapshot, &task.train)?;
        let (val_accuracy, val_mcc) = split_accuracy_mcc(&snapshot, &task.val)?;
        log::debug!(
            "epoch {epoch}: loss {train_loss:.4}, train acc {train_accuracy:.4}, val acc {val_accuracy:.4}, val mcc {val_mcc:.4}"
        );
        history.epochs.push(EpochRecord {
            epoch,
            learning_rate: cfg.learning_rate_at(epoch),
            train_loss,
            train_accuracy,
            val_accuracy,
            val_mcc,
        });
        if best.as_ref().is_none_or(|(mcc, _)| val_mcc > *mcc) {
            history.best_epoch = epoch;
            best = Some((val_mcc, params.clone()));
        }
    }
    if let Some((_, best_params)) = best {
        params = best_params;
    }
    let model = TrainedModel::with_network(network, task.classes.clone(), majority, params, provenance(history.best_epoch + 1))?;
    Ok((model, history))
}

/// Result of refitting on train ∪ val.
#[derive(Debug, Clone)]
pub struct FinalFit {
    pub model: TrainedModel,
    /// Every video id that entered a batch, sorted.
    pub trained_ids: Vec<String>,
}

/// Retrains from scratch on train ∪ val for `epochs` epochs. Test samples
/// are never touched.
pub fn final_fit(task: &Task, config: &ModelConfig, cfg: &TrainConfig, epochs: usize) -> Result<FinalFit, TrainError> {
    check_config(task, config, cfg)?;
    let pool: Vec<Sample> = task.train.iter().chain(&task.val).copied().collect();
    if pool.is_empty() {
        return Err(TrainError::EmptySplit(Partition::Train));
    }
    let mut trained_ids: Vec<String> = pool
        .iter()
        .filter(|s| s.target.is_some())
        .map(|s| s.record.video_id.clone())
        .collect();
    trained_ids.sort();
    let provenance = Provenance {
        seed: cfg.seed,
        split_hash: task.split_hash.clone(),
        epochs,
    };
    if config.architecture == Architecture::Baseline {
        let model = baseline_model(task, config, &pool, provenance)?;
        return Ok(FinalFit { model, trained_ids });
    }
    let network = Network::new(config.clone())?;
    let mut params = init_params(config, cfg.seed)?;
    let mut optimizer = Adam::new(&params);
    let weights = class_weights(&pool, task.classes.len(), cfg.class_weighting);
    for epoch in 0..epochs {
        run_epoch(&network, &mut params, &mut optimizer, &pool, weights.as_deref(), cfg, epoch)?;
    }
    let majority = majority_index(&targets_of(&pool), task.classes.len()).unwrap_or(0);
    let model = TrainedModel::with_network(network, task.classes.clone(), majority, params, provenance)?;
    Ok(FinalFit { model, trained_ids })
}

/// Evaluates `model` on one partition of `task`.
pub fn evaluate(model: &TrainedModel, task: &Task, part: Partition, label: &str, alpha: f64) -> Result<EvalReport, TrainError> {
    let samples = task.samples(part);
    if samples.is_empty() {
        return Err(TrainError::EmptySplit(part));
    }
    let predicted = predict_samples(model, samples)?;
    let predictions = samples
        .iter()
        .zip(predicted)
        .map(|(s, p)| Prediction {
            video_id: s.record.video_id.clone(),
            truth: s.record.label.get(task.property).to_string(),
            predicted: model.classes[p].clone(),
        })
        .collect();
    Ok(EvalReport::new(
        task.property,
        task.mode,
        task.tracker,
        label,
        model.classes.clone(),
        predictions,
        alpha,
    )?)
}

#[cfg(test)]
mod tests;
