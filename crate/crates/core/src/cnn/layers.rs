//! Stateless building blocks of the network. Batched tensors are flat
//! slices laid out `[sample][channel][spatial]`, where a channel is a
//! feature map (or a dense unit, with a spatial extent of 1).

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Elu,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Average,
    Max,
}

/// `x` for `x > 0`, otherwise `alpha (e^x - 1)`.
pub fn elu(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        alpha * x.exp_m1()
    }
}

/// Derivative of [`elu`]; at 0 the left branch (`alpha`) is used.
pub fn elu_derivative(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        alpha * x.exp()
    }
}

impl Activation {
    pub fn apply(self, x: f64, alpha: f64) -> f64 {
        match self {
            Activation::Elu => elu(x, alpha),
            Activation::Relu => x.max(0.0),
        }
    }

    pub fn derivative(self, x: f64, alpha: f64) -> f64 {
        match self {
            Activation::Elu => elu_derivative(x, alpha),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Per-channel running statistics of a batch-normalization layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }

    pub fn update(&mut self, batch: &BnStats) {
        for (r, b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
        for (r, b) in self.var.iter_mut().zip(&batch.var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
        }
    }
}

/// Values kept from a training-mode normalization for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Vec<f64>,
    pub batch: BnStats,
}

/// Normalizes with batch statistics (biased variance).
pub fn bn_forward_train(
    x: &[f64],
    channels: usize,
    spatial: usize,
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<f64>, BnCache) {
    let batch = x.len() / (channels * spatial);
    let count = (batch * spatial) as f64;
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    for sample in x.chunks_exact(channels * spatial) {
        for (c, block) in sample.chunks_exact(spatial).enumerate() {
            mean[c] += block.iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    for sample in x.chunks_exact(channels * spatial) {
        for (c, block) in sample.chunks_exact(spatial).enumerate() {
            var[c] += block.iter().map(|v| (v - mean[c]) * (v - mean[c])).sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= count);

    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for (i, v) in x.iter().enumerate() {
        let c = (i / spatial) % channels;
        xhat[i] = (v - mean[c]) * inv_std[c];
        y[i] = gamma[c] * xhat[i] + beta[c];
    }
    (y, BnCache { xhat, batch: BnStats { mean, var } })
}

pub fn bn_forward_eval(
    x: &[f64],
    channels: usize,
    spatial: usize,
    gamma: &[f64],
    beta: &[f64],
    stats: &BnStats,
) -> Vec<f64> {
    let scale: Vec<f64> = (0..channels)
        .map(|c| gamma[c] / (stats.var[c] + BN_EPS).sqrt())
        .collect();
    x.iter()
        .enumerate()
        .map(|(i, v)| {
            let c = (i / spatial) % channels;
            (v - stats.mean[c]) * scale[c] + beta[c]
        })
        .collect()
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn bn_backward(
    dy: &[f64],
    cache: &BnCache,
    channels: usize,
    spatial: usize,
    gamma: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let count = (dy.len() / channels) as f64;
    let mut dgamma = vec![0.0; channels];
    let mut dbeta = vec![0.0; channels];
    for (i, g) in dy.iter().enumerate() {
        let c = (i / spatial) % channels;
        dgamma[c] += g * cache.xhat[i];
        dbeta[c] += g;
    }
    // dxhat = dy * gamma, so its channel sums follow from dbeta and dgamma
    let inv_std: Vec<f64> = cache.batch.var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let dx = dy
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let c = (i / spatial) % channels;
            gamma[c] * inv_std[c] / count
                * (count * g - dbeta[c] - cache.xhat[i] * dgamma[c])
        })
        .collect();
    (dx, dgamma, dbeta)
}

/// Inverted dropout mask: 0 with probability `p`, else `1 / (1 - p)`.
pub fn dropout_mask(len: usize, p: f64, rng: &mut SeededRng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

/// Pools along the last axis with window and stride `width`, dropping any
/// remainder. `rows` counts all leading positions (sample, map, height).
/// Returns the pooled values and, for max pooling, the winning input index.
pub fn pool_forward(
    x: &[f64],
    rows: usize,
    in_w: usize,
    width: usize,
    kind: Pooling,
) -> (Vec<f64>, Vec<usize>) {
    let out_w = in_w / width;
    let mut out = Vec::with_capacity(rows * out_w);
    let mut argmax = Vec::new();
    for r in 0..rows {
        let line = &x[r * in_w..(r + 1) * in_w];
        for k in 0..out_w {
            let win = &line[k * width..(k + 1) * width];
            match kind {
                Pooling::Average => out.push(win.iter().sum::<f64>() / width as f64),
                Pooling::Max => {
                    let mut best = 0;
                    for (j, v) in win.iter().enumerate() {
                        if *v > win[best] {
                            best = j;
                        }
                    }
                    out.push(win[best]);
                    argmax.push(r * in_w + k * width + best);
                }
            }
        }
    }
    (out, argmax)
}

pub fn pool_backward(
    dy: &[f64],
    rows: usize,
    in_w: usize,
    width: usize,
    kind: Pooling,
    argmax: &[usize],
) -> Vec<f64> {
    let out_w = in_w / width;
    let mut dx = vec![0.0; rows * in_w];
    match kind {
        Pooling::Average => {
            let share = 1.0 / width as f64;
            for r in 0..rows {
                for k in 0..out_w {
                    let g = dy[r * out_w + k] * share;
                    dx[r * in_w + k * width..r * in_w + (k + 1) * width]
                        .iter_mut()
                        .for_each(|d| *d = g);
                }
            }
        }
        Pooling::Max => {
            for (g, &src) in dy.iter().zip(argmax) {
                dx[src] += g;
            }
        }
    }
    dx
}

/// Row-wise log-softmax over `classes` logits per sample.
pub fn log_softmax(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(classes) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|z| z - lse));
    }
    out
}
