//! Minibatch Adam training shared by pretraining, finetuning, and transfer.
//!
//! One loop covers every mode: per-parameter rate scaling damps the backbone
//! during finetuning, an optional replay source mixes auxiliary pairs into
//! each step, and the returned weights are the best-validation snapshot, not
//! the last iterate.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::diff::{Adam, AdamConfig, Tape, Tensor};
use crate::error::TrainError;
use crate::model::{rmse_loss, OperatorModel};
use crate::pde::grid::Dataset;
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    Cosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub schedule: LrSchedule,
    /// Learning-rate divisor for non-head parameters; 1 trains everything at
    /// the full rate.
    pub backbone_divisor: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn scratch(epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            batch: 20,
            lr: 1e-3,
            schedule: LrSchedule::Cosine,
            backbone_divisor: 1.0,
            seed,
        }
    }

    /// Full-rate head, damped backbone.
    pub fn finetune(epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            backbone_divisor: 10.0,
            ..TrainConfig::scratch(epochs, seed)
        }
    }
}

/// Auxiliary pairs replayed alongside the task batch, weighted by `beta`.
/// Batches cycle through the data with a persistent cursor and never touch
/// an RNG, so `beta = 0` leaves the optimization trajectory bit-identical to
/// training without a replay source.
#[derive(Clone, Debug)]
pub struct ReplaySource {
    pub data: Dataset,
    pub beta: f64,
    cursor: usize,
}

impl ReplaySource {
    pub fn new(data: Dataset, beta: f64) -> ReplaySource {
        assert!(!data.is_empty(), "replay source needs at least one pair");
        assert!(beta >= 0.0 && beta.is_finite(), "replay weight must be finite and nonnegative");
        ReplaySource { data, beta, cursor: 0 }
    }

    fn next_indices(&mut self, n: usize) -> Vec<usize> {
        let len = self.data.len();
        let idx = (0..n).map(|j| (self.cursor + j) % len).collect();
        self.cursor = (self.cursor + n) % len;
        idx
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean objective per epoch, replay term included.
    pub loss_trace: Vec<f64>,
    /// Validation relative error per epoch.
    pub val_trace: Vec<f64>,
    /// Task-only component of the objective per epoch; empty without replay.
    pub task_trace: Vec<f64>,
    /// Unweighted replay component per epoch; empty without replay.
    /// When present, loss = task + beta * replay up to summation order.
    pub replay_trace: Vec<f64>,
    pub best_epoch: usize,
    pub best_val: f64,
}

pub(crate) fn epoch_lr(cfg: &TrainConfig, epoch: usize) -> f64 {
    match cfg.schedule {
        LrSchedule::Constant => cfg.lr,
        LrSchedule::Cosine => {
            let frac = epoch as f64 / cfg.epochs as f64;
            cfg.lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
        }
    }
}

pub(crate) fn gather_rows(x: &Tensor, idx: &[usize]) -> Tensor {
    let w = x.shape()[1];
    Tensor::from_fn(&[idx.len(), w], |i| x.data()[idx[i / w] * w + i % w])
}

/// Largest parameter magnitude a run can reach and still be considered
/// training rather than blowing up. The tape refuses non-finite values
/// outright, so runaway weights must be caught before the next forward pass
/// overflows.
const PARAM_BLOWUP: f64 = 1e30;

/// Train `model` on `train`, scoring `val` each epoch and restoring the best
/// validation snapshot before returning. An empty `val` skips selection and
/// keeps the final iterate.
pub fn train_supervised(
    model: &mut OperatorModel,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    mut replay: Option<&mut ReplaySource>,
) -> Result<TrainReport, TrainError> {
    if train.is_empty() {
        return Err(TrainError::Config("empty training split".into()));
    }
    if cfg.batch == 0 {
        return Err(TrainError::Config("batch size must be positive".into()));
    }
    if cfg.batch > train.len() {
        return Err(TrainError::Config(format!(
            "batch size {} exceeds the {} training samples",
            cfg.batch,
            train.len()
        )));
    }
    if !(cfg.backbone_divisor.is_finite() && cfg.backbone_divisor >= 1.0) {
        return Err(TrainError::Config(format!(
            "backbone rate divisor {} must be finite and at least 1",
            cfg.backbone_divisor
        )));
    }

    let xk = train.stack_k();
    let xu = train.stack_u();
    let replay_stacks = replay
        .as_deref()
        .filter(|rs| rs.beta > 0.0)
        .map(|rs| (rs.data.stack_k(), rs.data.stack_u()));

    let mut adam = Adam::for_params(&model.params(), AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    adam.set_names(model.param_names());
    adam.set_lr_scales(
        model
            .head_mask()
            .iter()
            .map(|&head| if head { 1.0 } else { 1.0 / cfg.backbone_divisor })
            .collect(),
    );

    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params: Option<Vec<Tensor>> = None;
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let mut val_trace = Vec::with_capacity(cfg.epochs);
    let mut task_trace = Vec::new();
    let mut replay_trace = Vec::new();
    let mut recent = Vec::new();
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let lr = epoch_lr(cfg, epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream(cfg.seed, "train-shuffle", epoch as u64));

        let mut epoch_loss = 0.0;
        let mut epoch_task = 0.0;
        let mut epoch_replay = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let bk = gather_rows(&xk, chunk);
            let bu = gather_rows(&xu, chunk);
            let rbatch = match (replay.as_deref_mut(), &replay_stacks) {
                (Some(rs), Some((rk_all, ru_all))) => {
                    let ridx = rs.next_indices(cfg.batch);
                    Some((gather_rows(rk_all, &ridx), gather_rows(ru_all, &ridx), rs.beta))
                }
                _ => None,
            };

            let (loss_val, grads) = {
                let tape = Tape::new();
                let bound = model.bind(&tape, true);
                let task = rmse_loss(&tape, bound.forward_rows(&bk), &bu);
                let mut total = task;
                if let Some((rk, ru, beta)) = &rbatch {
                    let rep = rmse_loss(&tape, bound.forward_rows(rk), ru);
                    total = total + rep.scale(*beta);
                    epoch_task += task.item() * chunk.len() as f64;
                    epoch_replay += rep.item() * chunk.len() as f64;
                }
                let loss_val = total.item();
                if !loss_val.is_finite() {
                    recent.push(loss_val);
                    return Err(TrainError::Diverged {
                        step,
                        loss: loss_val,
                        trace: recent,
                    });
                }
                tape.backward(total);
                (loss_val, bound.grads())
            };

            adam.step_with_lr(model.params_mut(), &grads, lr)?;
            recent.push(loss_val);
            if recent.len() > 20 {
                recent.remove(0);
            }
            let worst = model
                .params()
                .iter()
                .flat_map(|p| p.data())
                .fold(0.0f64, |a, &v| a.max(v.abs()));
            if !worst.is_finite() || worst > PARAM_BLOWUP {
                return Err(TrainError::Diverged {
                    step,
                    loss: loss_val,
                    trace: recent,
                });
            }
            step += 1;
            epoch_loss += loss_val * chunk.len() as f64;
        }
        loss_trace.push(epoch_loss / train.len() as f64);
        if replay_stacks.is_some() {
            task_trace.push(epoch_task / train.len() as f64);
            replay_trace.push(epoch_replay / train.len() as f64);
        }

        if !val.is_empty() {
            let v = model.dataset_rmse(val);
            val_trace.push(v);
            if v < best_val {
                best_val = v;
                best_epoch = epoch;
                best_params = Some(model.params().iter().map(|p| (*p).clone()).collect());
            }
        }
    }

    if let Some(snapshot) = best_params {
        for (dst, src) in model.params_mut().into_iter().zip(snapshot) {
            *dst = src;
        }
    } else {
        best_epoch = cfg.epochs.saturating_sub(1);
        best_val = loss_trace.last().copied().unwrap_or(f64::INFINITY);
    }

    Ok(TrainReport {
        loss_trace,
        val_trace,
        task_trace,
        replay_trace,
        best_epoch,
        best_val,
    })
}
