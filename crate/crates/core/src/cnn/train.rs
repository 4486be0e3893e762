use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::Pass;
use super::{CnnConfig, CnnModel, Params, RunningStats};
use crate::error::{Error, Result};
use crate::ingest::{EpochSet, NON_TARGET, TARGET};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "cnn.adam: need lr > 0, betas in [0, 1) and epsilon > 0".into(),
            ))
        }
    }
}

/// One Adam update of `theta` at step `t` (1-based).
pub fn adam_step(theta: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], t: u64, cfg: &AdamConfig) {
    debug_assert!(t >= 1);
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for k in 0..theta.len() {
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
        let m_hat = m[k] / c1;
        let v_hat = v[k] / c2;
        theta[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Params,
    pub v: Params,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params, cfg: &AdamConfig) {
        self.t += 1;
        let t = self.t;
        for (((theta, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            adam_step(theta, g, m, v, t, cfg);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once the monitored loss has failed to strictly improve for
/// `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best_loss: f64,
    pub best_epoch: Option<usize>,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: None,
            wait: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = Some(epoch);
            self.wait = 0;
            StopDecision::Improved
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

fn gather(set: &EpochSet, idx: &[usize]) -> (Vec<f64>, Vec<u8>) {
    let mut x = Vec::with_capacity(idx.len() * set.epoch_len());
    let mut y = Vec::with_capacity(idx.len());
    for &i in idx {
        x.extend_from_slice(set.epoch(i));
        y.push(set.labels()[i]);
    }
    (x, y)
}

impl CnnModel {
    /// Mean eval-mode cross-entropy over `set`.
    pub fn eval_loss(&self, set: &EpochSet) -> Result<f64> {
        let per = self.shapes.input_len();
        let mut total = 0.0;
        for (x, y) in set.data().chunks(per * 64).zip(set.labels().chunks(64)) {
            let cache = self.forward(x, Pass::Eval)?;
            total += cache.loss(y) * y.len() as f64;
        }
        Ok(total / set.n_epochs() as f64)
    }
}

/// Trains on `train`, monitoring `val` for early stopping, and returns the
/// network from the epoch with the lowest validation loss.
pub fn train_cnn(train: &EpochSet, val: &EpochSet, cfg: &CnnConfig) -> Result<CnnModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::TooFewEpochs("cnn training set is empty".into()));
    }
    if !(train.labels().contains(&TARGET) && train.labels().contains(&NON_TARGET)) {
        return Err(Error::NeedTwoClasses);
    }
    let mut model = CnnModel::new(cfg, train.n_channels(), train.n_samples())?;
    if !val.is_empty() && (val.n_channels(), val.n_samples()) != (train.n_channels(), train.n_samples()) {
        return Err(Error::DimensionMismatch {
            expected: train.epoch_len(),
            found: val.epoch_len(),
        });
    }
    let use_val = !val.is_empty();
    if !use_val {
        log::warn!("empty validation set: early stopping disabled, training for {} epochs", cfg.max_epochs);
    }

    let mut rng = SeededRng::new(cfg.seed).child(1);
    let mut adam = AdamState::new(&model.params);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best: Option<(Params, RunningStats)> = None;
    let mut order: Vec<usize> = (0..train.n_epochs()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let (x, y) = gather(train, idx);
            let cache = model.forward(&x, Pass::Train(&mut rng))?;
            loss_sum += cache.loss(&y) * y.len() as f64;
            let grads = model.backward(&x, &y, &cache)?;
            adam.step(&mut model.params, &grads, &cfg.adam);
            if let Some((conv, dense)) = cache.batch_stats() {
                model.running.conv.update(&conv);
                for (r, b) in model.running.dense.iter_mut().zip(&dense) {
                    r.update(b);
                }
            }
        }
        let train_loss = loss_sum / train.n_epochs() as f64;
        let val_loss = if use_val { Some(model.eval_loss(val)?) } else { None };
        model.training_log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:?}");

        if let Some(v) = val_loss {
            match stopper.observe(epoch, v) {
                StopDecision::Improved => best = Some((model.params.clone(), model.running.clone())),
                StopDecision::Continue => {}
                StopDecision::Stop => break,
            }
        }
    }
    if let Some((params, running)) = best {
        model.params = params;
        model.running = running;
        model.best_epoch = stopper.best_epoch;
    } else {
        model.best_epoch = model.training_log.last().map(|e| e.epoch);
    }
    Ok(model)
}
