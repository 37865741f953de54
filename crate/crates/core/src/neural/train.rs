//! Mini-batch training with best-epoch selection on a validation set.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::models::Network;
use super::optim::{Optimizer, OptimizerKind};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Focusing exponent of the focal-style losses.
    pub beta: f64,
    /// Penalty-reduction exponent near heatmap keypoints.
    pub eta: f64,
    pub clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            beta: 2.0,
            eta: 4.0,
            clip: Some(10.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config("learning rate must be nonnegative".into()));
        }
        Ok(())
    }
}

/// A supervised objective over samples of type `S`.
pub trait Task<M: Network, S> {
    /// Loss of one sample; when `backprop` is set, gradients are accumulated
    /// into the model parameters.
    fn evaluate(&self, model: &mut M, sample: &S, backprop: bool) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Epoch (1-based) whose parameters were kept; 0 when no epoch beat the
    /// untrained model.
    pub best_epoch: usize,
    pub initial_valid_loss: f64,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,valid_loss\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.valid_loss));
        }
        s
    }
}

pub fn mean_loss<M: Network, S>(task: &impl Task<M, S>, model: &mut M, samples: &[S]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in samples {
        total += task.evaluate(model, s, false)?;
    }
    Ok(total / samples.len() as f64)
}

fn snapshot<M: Network>(model: &M) -> Vec<Vec<f64>> {
    model.params().iter().map(|p| p.value.clone()).collect()
}

fn restore<M: Network>(model: &mut M, values: &[Vec<f64>]) {
    for (p, v) in model.params_mut().into_iter().zip(values) {
        p.value.clone_from(v);
    }
}

/// Trains `model` in place and leaves it at the epoch with the lowest
/// validation loss. With an empty validation set the final epoch is kept.
pub fn train<M: Network, S>(
    model: &mut M,
    task: &impl Task<M, S>,
    train_set: &[S],
    valid_set: &[S],
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, config.clip);
    for p in model.params_mut() {
        p.zero_grad();
    }
    let initial = mean_loss(task, model, valid_set)?;
    let mut best = (0usize, if valid_set.is_empty() { f64::INFINITY } else { initial });
    let mut best_params = snapshot(model);
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        let mut shuffle = rng::stream(config.seed, &[tag::SHUFFLE, epoch as u64]);
        order.sort_unstable();
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            for &i in batch {
                let l = task.evaluate(model, &train_set[i], true)?;
                if !l.is_finite() {
                    return Err(Error::Diverged { epoch, loss: l });
                }
                total += l;
            }
            opt.step(model.params_mut(), 1.0 / batch.len() as f64);
            if model.params().iter().any(|p| p.value.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged { epoch, loss: f64::NAN });
            }
        }
        let train_loss = total / train_set.len() as f64;
        let valid_loss = mean_loss(task, model, valid_set)?;
        if !valid_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: valid_loss });
        }
        log::info!("epoch {epoch}: train {train_loss:.6} valid {valid_loss:.6}");
        epochs.push(EpochStats {
            epoch,
            train_loss,
            valid_loss,
        });
        if valid_set.is_empty() || valid_loss < best.1 {
            best = (epoch, valid_loss);
            best_params = snapshot(model);
        }
    }
    restore(model, &best_params);
    Ok(TrainReport {
        epochs,
        best_epoch: best.0,
        initial_valid_loss: initial,
    })
}
