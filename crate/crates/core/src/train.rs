//! Deterministic mini-batch SGD with momentum.
//!
//! The trainer owns the optimization loop; what it optimizes is supplied per
//! batch by a [`LossProvider`], which turns forward outputs into a scalar loss
//! and output-side gradients. The plain task loss lives here; the combined
//! task+feature-matching loss is injected by the distillation module. A
//! provider may own trainable parameters of its own (dimension adapters do)
//! and advances them in [`LossProvider::step`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{backward, evaluate, forward, Dataset, FeatureSet, Model, OutputGrads, Params};
use crate::rng::RngStream;
use crate::tensor::{softmax_cross_entropy, Tensor};

/// How the learning rate evolves over a training stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// Fixed at `learning_rate` throughout.
    Constant,
    /// ×0.1 from epoch `⌊2E/3⌋`, ×0.01 from epoch `⌊8E/9⌋`.
    Step,
    /// Per-step decay `lr₀·(1 − t/T)` over all `T` optimizer steps.
    Linear,
}

/// Hyper-parameters for one training stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub lr_schedule: LrSchedule,
    /// Seeds the shuffle stream; equal configs replay identically.
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Argument(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Argument(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Learning rate for a given epoch / global step under a config's schedule.
pub fn learning_rate(cfg: &TrainConfig, epoch: usize, step: usize, total_steps: usize) -> f64 {
    match cfg.lr_schedule {
        LrSchedule::Constant => cfg.learning_rate,
        LrSchedule::Step => {
            let first_drop = cfg.epochs * 2 / 3;
            let second_drop = cfg.epochs * 8 / 9;
            if epoch >= second_drop {
                cfg.learning_rate * 0.01
            } else if epoch >= first_drop {
                cfg.learning_rate * 0.1
            } else {
                cfg.learning_rate
            }
        }
        LrSchedule::Linear => cfg.learning_rate * (1.0 - step as f64 / total_steps as f64),
    }
}

/// What a loss provider reports for one batch.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    /// Task (classification) part of the loss.
    pub task_loss: f64,
    /// Feature-matching part (0 when the provider has none).
    pub distill_loss: f64,
    /// Output-side gradients of the *combined* scalar loss.
    pub grads: OutputGrads,
}

/// Per-batch loss source. Implementations turn the student's forward outputs
/// into a scalar loss and gradients w.r.t. logits and/or feature maps.
pub trait LossProvider {
    fn batch_loss(
        &mut self,
        inputs: &Tensor,
        labels: &[usize],
        features: &FeatureSet,
        logits: &Tensor,
    ) -> Result<BatchLoss>;

    /// Advance provider-owned trainable parameters (if any) using gradients
    /// from the immediately preceding `batch_loss` call.
    fn step(&mut self, _lr: f64) -> Result<()> {
        Ok(())
    }
}

/// Plain task loss: mean softmax cross-entropy on the logits.
pub struct TaskLoss;

impl LossProvider for TaskLoss {
    fn batch_loss(
        &mut self,
        _inputs: &Tensor,
        labels: &[usize],
        _features: &FeatureSet,
        logits: &Tensor,
    ) -> Result<BatchLoss> {
        let (loss, grad) = softmax_cross_entropy(logits, labels)?;
        Ok(BatchLoss {
            task_loss: loss,
            distill_loss: 0.0,
            grads: OutputGrads { logits: Some(grad), features: None },
        })
    }
}

/// Metrics recorded after each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Batch-size-weighted mean task loss over the epoch's training batches.
    pub train_task_loss: f64,
    /// Likewise for the feature-matching loss (0 when absent).
    pub train_distill_loss: f64,
    pub val_task_loss: f64,
    pub val_accuracy: f64,
}

/// Per-epoch training history.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub epochs: Vec<EpochMetrics>,
}

impl MetricsLog {
    pub fn last(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    /// Append another stage's history, renumbering epochs to continue ours.
    pub fn extend_from(&mut self, other: &MetricsLog) {
        let base = self.epochs.len();
        for (i, m) in other.epochs.iter().enumerate() {
            let mut m = *m;
            m.epoch = base + i;
            self.epochs.push(m);
        }
    }
}

/// One SGD-with-momentum update: `v ← m·v + g`, `p ← p − lr·v`.
fn sgd_step(params: &mut Params, velocity: &mut Params, grads: &Params, momentum: f64, lr: f64) {
    for ((p, v), g) in params
        .tensors_mut()
        .zip(velocity.tensors_mut())
        .zip(grads.tensors())
    {
        for ((pv, vv), &gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vv = momentum * *vv + gv;
            *pv -= lr * *vv;
        }
    }
}

/// Train a model for `cfg.epochs` epochs of shuffled mini-batches.
///
/// Shuffle order comes only from `cfg.seed`, so equal `(model, data, cfg,
/// provider)` replays bit-identically. With `epochs = 0` the model is
/// returned untouched and the log is empty.
pub fn train(
    model: &Model,
    train_data: &Dataset,
    val_data: &Dataset,
    cfg: &TrainConfig,
    provider: &mut dyn LossProvider,
) -> Result<(Model, MetricsLog)> {
    cfg.validate()?;
    if train_data.input_dim() != model.spec.input_dim {
        return Err(Error::Dimension(format!(
            "model {} expects {}-dim inputs, dataset has {}",
            model.spec.id,
            model.spec.input_dim,
            train_data.input_dim()
        )));
    }
    if train_data.is_empty() {
        return Err(Error::Argument("training dataset is empty".into()));
    }
    let mut model = model.clone();
    let mut log = MetricsLog::default();
    if cfg.epochs == 0 {
        return Ok((model, log));
    }

    let n = train_data.len();
    let batches_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let mut shuffle_rng = RngStream::new(cfg.seed);
    let mut velocity = Params::zeros(&model.spec)?;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut indices);
        let mut task_acc = 0.0;
        let mut distill_acc = 0.0;
        for chunk in indices.chunks(cfg.batch_size) {
            let (inputs, labels) = train_data.gather(chunk)?;
            let (features, logits, tape) = forward(&model, &inputs)?;
            let batch = provider.batch_loss(&inputs, &labels, &features, &logits)?;
            let grads = backward(&model, &tape, &batch.grads)?;
            let lr = learning_rate(cfg, epoch, step, total_steps);
            sgd_step(&mut model.params, &mut velocity, &grads, cfg.momentum, lr);
            provider.step(lr)?;
            task_acc += batch.task_loss * chunk.len() as f64;
            distill_acc += batch.distill_loss * chunk.len() as f64;
            step += 1;
        }
        let (val_task_loss, val_accuracy) = evaluate(&model, val_data)?;
        log.epochs.push(EpochMetrics {
            epoch,
            train_task_loss: task_acc / n as f64,
            train_distill_loss: distill_acc / n as f64,
            val_task_loss,
            val_accuracy,
        });
    }

    for t in model.params.tensors() {
        t.assert_finite("trained parameters")?;
    }
    Ok((model, log))
}
