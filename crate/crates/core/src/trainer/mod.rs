//! Mini-batch training with Adam, per-epoch dev evaluation and early stopping.
//!
//! When no encoder weight is trainable the fused embeddings are computed once and training
//! runs on the cached features; otherwise every batch goes through the encoders.

mod config;
mod loss;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use candle_core::{DType, Device, Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use self::config::{ClassWeightMode, ConfigOverrides, TrainingConfig, PRESET_NAMES};
pub use self::loss::{example_loss, weighted_loss, PROBABILITY_EPSILON};

use crate::dataset::{class_counts, CanonicalLabels, ClassWeights, MemeRecord, Subtask};
use crate::error::{Error, Result};
use crate::fusion::{build_model, BuildOptions, FusionNetwork, ModelSpec};
use crate::metrics::macro_f1;

/// Shuffled index batches over `n` items; the last batch may be short.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let batch_size = batch_size.max(1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub fn make_batches<T>(records: &[T], batch_size: usize, seed: u64) -> Vec<Vec<&T>> {
    batch_indices(records.len(), batch_size, seed)
        .into_iter()
        .map(|b| b.into_iter().map(|i| &records[i]).collect())
        .collect()
}

/// Shuffle seed for a given epoch (epochs count from 1).
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_add(epoch as u64)
}

/// Weighted loss of a batch of fused features plus `l2 * sum(W^2)` over the dense kernel.
pub fn batch_loss(
    net: &FusionNetwork,
    fused: &Tensor,
    targets: &[usize],
    weights: &ClassWeights,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<Tensor> {
    let probs = net.activate(&net.logits(fused, dropout)?)?;
    let data = weighted_loss(&probs, targets, weights)?;
    let l2 = net.spec().l2_coefficient;
    if l2 == 0.0 {
        return Ok(data);
    }
    let penalty = (net.dense_weight().as_tensor().sqr()?.sum_all()? * l2)?;
    Ok((data + penalty)?)
}

pub fn class_weights_for(records: &[MemeRecord], task: Subtask, mode: ClassWeightMode) -> Result<ClassWeights> {
    match mode {
        ClassWeightMode::None => {
            // still fail on unlabeled data
            class_counts(records, task)?;
            Ok(ClassWeights::uniform(task))
        }
        ClassWeightMode::Balanced => ClassWeights::balanced_from_counts(task, &class_counts(records, task)?),
    }
}

/// Fused embeddings of labeled records, reusable for every subtask with the same encoders.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub ids: Vec<String>,
    pub features: Tensor,
    pub labels: Vec<CanonicalLabels>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn targets(&self, task: Subtask) -> Vec<usize> {
        self.labels.iter().map(|l| l.target(task).class_index).collect()
    }

    /// Records carrying the labels, for class-count based weighting.
    fn pseudo_records(&self) -> Vec<MemeRecord> {
        self.ids
            .iter()
            .zip(&self.labels)
            .map(|(id, l)| MemeRecord {
                id: id.clone(),
                image_path: PathBuf::new(),
                ocr_text: None,
                corrected_text: None,
                labels: Some(*l),
                needs_manual_text: false,
            })
            .collect()
    }
}

/// Encodes labeled records in batches, detached from any graph.
pub fn embed_records(net: &FusionNetwork, records: &[MemeRecord], batch_size: usize) -> Result<FeatureSet> {
    let mut labels = Vec::with_capacity(records.len());
    let mut parts = Vec::new();
    for chunk in records.chunks(batch_size.max(1)) {
        let mut inputs = Vec::with_capacity(chunk.len());
        for r in chunk {
            labels.push(r.labels.ok_or_else(|| Error::LabelsRequired(r.id.clone()))?);
            inputs.push(net.prepare(r)?);
        }
        parts.push(net.embed(&inputs)?.detach());
    }
    let features = if parts.is_empty() {
        Tensor::zeros((0, net.spec().fused_dim()), net.dtype(), net.device())?
    } else {
        Tensor::cat(&parts, 0)?
    };
    Ok(FeatureSet {
        ids: records.iter().map(|r| r.id.clone()).collect(),
        features,
        labels,
    })
}

/// Predicted class indices for a feature set.
pub fn predict_classes(net: &FusionNetwork, features: &Tensor, threshold: f64) -> Result<Vec<usize>> {
    if features.dim(0)? == 0 {
        return Ok(Vec::new());
    }
    Ok(net
        .predict_fused(features, threshold)?
        .into_iter()
        .map(|p| p.class_index)
        .collect())
}

/// Macro-F1 of the network on a labeled feature set.
pub fn evaluate_features(net: &FusionNetwork, set: &FeatureSet, threshold: f64) -> Result<f64> {
    let task = net.spec().task;
    macro_f1(&set.targets(task), &predict_classes(net, &set.features, threshold)?, task.num_classes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    /// Available when training on cached features.
    pub train_accuracy: Option<f64>,
    pub dev_macro_f1: f64,
    pub improved: bool,
}

pub struct TrainOutcome {
    /// Network holding the best-dev weights.
    pub network: FusionNetwork,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub steps: usize,
    pub class_weights: ClassWeights,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    /// Receives `best.safetensors` and `history.jsonl` when set.
    pub out_dir: Option<PathBuf>,
    pub device: Device,
    pub dtype: DType,
    pub threshold: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            out_dir: None,
            device: Device::Cpu,
            dtype: DType::F32,
            threshold: 0.5,
        }
    }
}

/// `spec` with the dense width, dropout and L2 taken from `config`.
pub fn apply_config(spec: &ModelSpec, config: &TrainingConfig) -> ModelSpec {
    let mut s = spec.clone();
    s.hidden_dim = config.hidden_dim;
    s.dropout_rate = config.dropout_rate;
    s.l2_coefficient = config.l2_coefficient;
    s
}

/// Records a model for `spec` can consume. Caption-less records get an empty caption when
/// `include_manual_text` is set and are dropped otherwise; image-only models keep everything.
pub fn usable_records(records: &[MemeRecord], spec: &ModelSpec, config: &TrainingConfig) -> Vec<MemeRecord> {
    let needs_text = spec.text_encoder.is_some();
    let mut skipped = 0;
    let out: Vec<MemeRecord> = records
        .iter()
        .filter_map(|r| {
            if !needs_text || r.caption().is_some() {
                Some(r.clone())
            } else if config.include_manual_text {
                let mut r = r.clone();
                r.corrected_text = Some(String::new());
                Some(r)
            } else {
                skipped += 1;
                None
            }
        })
        .collect();
    if skipped > 0 {
        log::warn!("skipped {skipped} records without a caption");
    }
    out
}

/// Builds a fresh network for `spec` and trains it on `train`, selecting on `dev`.
pub fn train(
    spec: &ModelSpec,
    config: &TrainingConfig,
    train: &[MemeRecord],
    dev: &[MemeRecord],
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    config.validate()?;
    let spec = apply_config(spec, config);
    let build = BuildOptions {
        seed: config.seed,
        device: opts.device.clone(),
        dtype: opts.dtype,
    };
    let net = build_model(&spec, &build)?;
    let train = usable_records(train, &spec, config);
    let dev = usable_records(dev, &spec, config);
    let weights = class_weights_for(&train, spec.task, config.class_weight_mode)?;
    if net.has_trainable_encoders() {
        let source = Streaming {
            train: &train,
            dev: &dev,
            batch_size: config.batch_size,
        };
        fit(net, config, &source, weights, opts)
    } else {
        let train_set = embed_records(&net, &train, 64)?;
        let dev_set = embed_records(&net, &dev, 64)?;
        fit_features(net, config, &train_set, &dev_set, opts)
    }
}

/// Trains an already built network (whose encoders must be frozen) on cached features.
pub fn fit_features(
    net: FusionNetwork,
    config: &TrainingConfig,
    train: &FeatureSet,
    dev: &FeatureSet,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    if net.has_trainable_encoders() {
        return Err(Error::Training(
            "cached features cannot train encoder weights".into(),
        ));
    }
    let weights = class_weights_for(&train.pseudo_records(), net.spec().task, config.class_weight_mode)?;
    fit(net, config, &Cached { train, dev }, weights, opts)
}

trait Source {
    fn train_len(&self) -> usize;
    fn train_targets(&self, task: Subtask) -> Vec<usize>;
    fn dev_targets(&self, task: Subtask) -> Vec<usize>;
    fn batch(&self, net: &FusionNetwork, idx: &[usize]) -> Result<Tensor>;
    fn dev_predictions(&self, net: &FusionNetwork, threshold: f64) -> Result<Vec<usize>>;
    fn train_predictions(&self, net: &FusionNetwork, threshold: f64) -> Result<Option<Vec<usize>>>;
}

struct Cached<'a> {
    train: &'a FeatureSet,
    dev: &'a FeatureSet,
}

impl Source for Cached<'_> {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn train_targets(&self, task: Subtask) -> Vec<usize> {
        self.train.targets(task)
    }

    fn dev_targets(&self, task: Subtask) -> Vec<usize> {
        self.dev.targets(task)
    }

    fn batch(&self, _net: &FusionNetwork, idx: &[usize]) -> Result<Tensor> {
        let idx: Vec<u32> = idx.iter().map(|&i| i as u32).collect();
        let idx = Tensor::new(idx.as_slice(), self.train.features.device())?;
        Ok(self.train.features.index_select(&idx, 0)?)
    }

    fn dev_predictions(&self, net: &FusionNetwork, threshold: f64) -> Result<Vec<usize>> {
        predict_classes(net, &self.dev.features, threshold)
    }

    fn train_predictions(&self, net: &FusionNetwork, threshold: f64) -> Result<Option<Vec<usize>>> {
        predict_classes(net, &self.train.features, threshold).map(Some)
    }
}

struct Streaming<'a> {
    train: &'a [MemeRecord],
    dev: &'a [MemeRecord],
    batch_size: usize,
}

fn labeled_targets(records: &[MemeRecord], task: Subtask) -> Vec<usize> {
    records
        .iter()
        .map(|r| r.labels.map_or(0, |l| l.target(task).class_index))
        .collect()
}

impl Source for Streaming<'_> {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn train_targets(&self, task: Subtask) -> Vec<usize> {
        labeled_targets(self.train, task)
    }

    fn dev_targets(&self, task: Subtask) -> Vec<usize> {
        labeled_targets(self.dev, task)
    }

    fn batch(&self, net: &FusionNetwork, idx: &[usize]) -> Result<Tensor> {
        let inputs = idx
            .iter()
            .map(|&i| net.prepare(&self.train[i]))
            .collect::<Result<Vec<_>>>()?;
        net.embed(&inputs)
    }

    fn dev_predictions(&self, net: &FusionNetwork, threshold: f64) -> Result<Vec<usize>> {
        let set = embed_records(net, self.dev, self.batch_size)?;
        predict_classes(net, &set.features, threshold)
    }

    fn train_predictions(&self, _net: &FusionNetwork, _threshold: f64) -> Result<Option<Vec<usize>>> {
        Ok(None)
    }
}

fn snapshot(vars: &[Var]) -> Result<Vec<Tensor>> {
    Ok(vars.iter().map(|v| v.as_tensor().copy()).collect::<candle_core::Result<_>>()?)
}

fn restore(vars: &[Var], saved: &[Tensor]) -> Result<()> {
    for (v, t) in vars.iter().zip(saved) {
        v.set(t)?;
    }
    Ok(())
}

fn accuracy(targets: &[usize], preds: &[usize]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let hits = targets.iter().zip(preds).filter(|(t, p)| t == p).count();
    hits as f64 / targets.len() as f64
}

fn fit(
    net: FusionNetwork,
    config: &TrainingConfig,
    source: &dyn Source,
    weights: ClassWeights,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    let task = net.spec().task;
    if source.train_len() == 0 {
        return Err(Error::Training("training split is empty".into()));
    }
    let dev_targets = source.dev_targets(task);
    if dev_targets.is_empty() {
        return Err(Error::Training("dev split is empty; early stopping needs it".into()));
    }
    let train_targets = source.train_targets(task);
    let vars = net.trainable_vars();
    let mut optimizer = AdamW::new(
        vars.clone(),
        ParamsAdamW {
            lr: config.learning_rate,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_epsilon,
            weight_decay: 0.0,
        },
    )?;
    let mut history_out = match &opts.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let p = dir.join("history.jsonl");
            Some(BufWriter::new(File::create(&p).map_err(|e| Error::io(&p, e))?))
        }
        None => None,
    };

    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xD80F_0D80_F0D8_0F0D);
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Vec<Tensor>)> = None;
    let mut since_best = 0;
    let mut steps = 0;
    let step_cap = config.max_steps.unwrap_or(usize::MAX);

    for epoch in 1..=config.max_epochs {
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, idx) in batch_indices(source.train_len(), config.batch_size, epoch_seed(config.seed, epoch))
            .into_iter()
            .enumerate()
        {
            if steps >= step_cap {
                break;
            }
            let fused = source.batch(&net, &idx)?;
            let targets: Vec<usize> = idx.iter().map(|&i| train_targets[i]).collect();
            let loss = batch_loss(&net, &fused, &targets, &weights, Some(&mut dropout_rng))?;
            let value = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b + 1,
                    learning_rate: config.learning_rate,
                });
            }
            optimizer.backward_step(&loss)?;
            loss_sum += value;
            batches += 1;
            steps += 1;
        }
        if batches == 0 {
            break;
        }
        let dev_preds = source.dev_predictions(&net, opts.threshold)?;
        let dev_f1 = macro_f1(&dev_targets, &dev_preds, task.num_classes())?;
        let train_accuracy = source
            .train_predictions(&net, opts.threshold)?
            .map(|p| accuracy(&train_targets, &p));
        let improved = best.as_ref().is_none_or(|(_, f, _)| dev_f1 > *f);
        if improved {
            best = Some((epoch, dev_f1, snapshot(&vars)?));
            since_best = 0;
            if let Some(dir) = &opts.out_dir {
                net.save(&dir.join("best.safetensors"))?;
            }
        } else {
            since_best += 1;
        }
        let record = EpochRecord {
            epoch,
            steps,
            train_loss: loss_sum / batches as f64,
            train_accuracy,
            dev_macro_f1: dev_f1,
            improved,
        };
        log::info!(
            "{task} epoch {epoch}: loss {:.5}, dev macro-F1 {dev_f1:.4}{}",
            record.train_loss,
            if improved { " *" } else { "" }
        );
        if let Some(w) = history_out.as_mut() {
            let line = serde_json::to_string(&record)?;
            writeln!(w, "{line}").map_err(|e| Error::io(opts.out_dir.as_ref().unwrap(), e))?;
        }
        history.push(record);
        if since_best > config.early_stop_patience || steps >= step_cap {
            break;
        }
    }
    if let Some(w) = history_out.as_mut() {
        w.flush().map_err(|e| Error::io(opts.out_dir.as_ref().unwrap(), e))?;
    }
    let (best_epoch, best_dev_f1, saved) =
        best.ok_or_else(|| Error::Training("no training step was taken".into()))?;
    restore(&vars, &saved)?;
    Ok(TrainOutcome {
        network: net,
        history,
        best_epoch,
        best_dev_f1,
        steps,
        class_weights: weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic::{generate, MarginalCounts};
    use crate::encoders::EncoderSpec;
    use proptest::prelude::*;

    #[test]
    fn batch_counts() {
        let b = batch_indices(5192, 16, 1);
        assert_eq!(b.len(), 325);
        assert_eq!(b.iter().filter(|x| x.len() == 16).count(), 324);
        assert_eq!(b.last().unwrap().len(), 8);
        assert_eq!(batch_indices(16, 16, 1).len(), 1);
        assert_eq!(batch_indices(40, 16, 7), batch_indices(40, 16, 7));
        let records: Vec<u32> = (0..10).collect();
        assert_eq!(make_batches(&records, 4, 0).len(), 3);
    }

    proptest! {
        #[test]
        fn every_record_appears_once_per_epoch(n in 0usize..300, bs in 1usize..40, seed: u64) {
            let mut seen: Vec<usize> = batch_indices(n, bs, seed).into_iter().flatten().collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn balanced_weights_equalize_class_gradients_at_uniform_prediction() {
        let counts = [2usize, 5, 9];
        let w = ClassWeights::balanced_from_counts(Subtask::A, &counts).unwrap();
        let targets: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| vec![c; n]).collect();
        let logits = Var::zeros((targets.len(), 3), DType::F64, &Device::Cpu).unwrap();
        let probs = candle_nn::ops::softmax(logits.as_tensor(), 1).unwrap();
        let loss = weighted_loss(&probs, &targets, &w).unwrap();
        let grad = loss.backward().unwrap().get(logits.as_tensor()).unwrap().to_vec2::<f64>().unwrap();
        let norms: Vec<f64> = (0..3)
            .map(|c| {
                let mut sum = [0.0; 3];
                for (row, &t) in grad.iter().zip(&targets) {
                    if t == c {
                        (0..3).for_each(|k| sum[k] += row[k]);
                    }
                }
                sum.iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .collect();
        assert!((norms[0] - norms[1]).abs() < 1e-12 && (norms[1] - norms[2]).abs() < 1e-12);
    }

    fn toy_setup(n: usize) -> (tempfile::TempDir, ModelSpec, Vec<MemeRecord>) {
        let dir = tempfile::tempdir().unwrap();
        let records = generate(&MarginalCounts::balanced(n), 5, "t", Some(dir.path()), 32).unwrap();
        let spec = ModelSpec::new(Some(EncoderSpec::toy_text(64)), Some(EncoderSpec::toy_image(16)), Subtask::A);
        (dir, spec, records)
    }

    #[test]
    fn zero_learning_rate_leaves_weights_unchanged() {
        let (_dir, spec, records) = toy_setup(24);
        let mut config = TrainingConfig::preset("comparative_bert").unwrap();
        config.learning_rate = 0.0;
        config.max_epochs = 1;
        config.hidden_dim = 8;
        let fresh = build_model(&apply_config(&spec, &config), &BuildOptions { seed: config.seed, ..Default::default() }).unwrap();
        let out = train(&spec, &config, &records, &records, &TrainOptions::default()).unwrap();
        for (a, b) in fresh.head_vars().iter().zip(out.network.head_vars()) {
            let a: Vec<f32> = a.flatten_all().unwrap().to_vec1().unwrap();
            let b: Vec<f32> = b.flatten_all().unwrap().to_vec1().unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn same_seed_same_history() {
        let (_dir, spec, records) = toy_setup(24);
        let mut config = TrainingConfig::preset("comparative_bert_densenet").unwrap();
        config.learning_rate = 1e-3;
        config.max_epochs = 3;
        config.hidden_dim = 8;
        let a = train(&spec, &config, &records, &records, &TrainOptions::default()).unwrap();
        let b = train(&spec, &config, &records, &records, &TrainOptions::default()).unwrap();
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn best_epoch_dominates_history_and_files_are_written() {
        let (_dir, spec, records) = toy_setup(24);
        let mut config = TrainingConfig::preset("submitted").unwrap();
        config.learning_rate = 5e-3;
        config.max_epochs = 6;
        config.early_stop_patience = 1;
        config.hidden_dim = 8;
        let dir = tempfile::tempdir().unwrap();
        let opts = TrainOptions { out_dir: Some(dir.path().to_path_buf()), ..Default::default() };
        let out = train(&spec, &config, &records, &records, &opts).unwrap();
        assert!(out.history.iter().all(|e| e.dev_macro_f1 <= out.best_dev_f1));
        let lines = std::fs::read_to_string(dir.path().join("history.jsonl")).unwrap();
        assert_eq!(lines.lines().count(), out.history.len());
        let reloaded = FusionNetwork::load(&dir.path().join("best.safetensors"), &BuildOptions::default()).unwrap();
        let set = embed_records(&reloaded, &records, 16).unwrap();
        let f1 = evaluate_features(&reloaded, &set, 0.5).unwrap();
        assert!((f1 - out.best_dev_f1).abs() < 1e-9);
    }

    #[test]
    fn non_finite_loss_aborts_with_context() {
        let (_dir, spec, records) = toy_setup(24);
        let mut config = TrainingConfig::preset("comparative_bert").unwrap();
        config.learning_rate = 1e30;
        config.hidden_dim = 8;
        config.l2_coefficient = 1e300;
        match train(&spec, &config, &records, &records, &TrainOptions::default()) {
            Err(Error::NonFiniteLoss { epoch, batch, learning_rate }) => {
                assert_eq!(learning_rate, 1e30);
                assert!(epoch >= 1 && batch >= 1);
            }
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("training should have diverged"),
        }
    }
}
