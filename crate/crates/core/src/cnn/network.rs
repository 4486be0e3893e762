use super::layers::{
    bn_backward, bn_forward_eval, bn_forward_train, dropout_mask, log_softmax, pool_backward,
    pool_forward, BnCache, BnStats,
};
use super::{CnnModel, Params};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Forward mode. Training uses batch statistics and draws dropout masks
/// from the given generator; evaluation is deterministic.
pub enum Pass<'a> {
    Train(&'a mut SeededRng),
    Eval,
}

/// Every layer output of one forward pass plus what backpropagation needs.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub batch: usize,
    /// Output of layer `l` at index `l - 1`, laid out `[sample][...]`.
    outputs: Vec<Vec<f64>>,
    conv_z: Vec<f64>,
    conv_bn: Option<BnCache>,
    conv_mask: Option<Vec<f64>>,
    pool_argmax: Vec<usize>,
    dense_z: Vec<Vec<f64>>,
    dense_bn: Vec<Option<BnCache>>,
    dense_mask: Vec<Option<Vec<f64>>>,
    log_probs: Vec<f64>,
}

impl ForwardCache {
    /// Output of a 1-based layer.
    pub fn layer(&self, layer: usize) -> &[f64] {
        &self.outputs[layer - 1]
    }

    /// Softmax outputs, `[sample][class]`.
    pub fn probabilities(&self) -> &[f64] {
        self.outputs.last().expect("output layer")
    }

    /// Mean cross-entropy for the given labels.
    pub fn loss(&self, labels: &[u8]) -> f64 {
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(b, &y)| -self.log_probs[2 * b + y as usize])
            .sum();
        total / labels.len() as f64
    }

    /// Batch statistics of every normalization layer (train mode only).
    pub fn batch_stats(&self) -> Option<(BnStats, Vec<BnStats>)> {
        let conv = self.conv_bn.as_ref()?.batch.clone();
        let dense = self
            .dense_bn
            .iter()
            .map(|c| c.as_ref().map(|c| c.batch.clone()))
            .collect::<Option<Vec<_>>>()?;
        Some((conv, dense))
    }
}

fn check_finite(values: &[f64], layer: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericOverflow { layer })
    }
}

impl CnnModel {
    /// Runs a batch of inputs laid out `[sample][channel][time]`.
    pub fn forward(&self, input: &[f64], pass: Pass<'_>) -> Result<ForwardCache> {
        forward_with(self, &self.params, input, pass)
    }

    /// Gradients of the mean cross-entropy with respect to every parameter,
    /// for a cache produced by a training-mode forward pass over `input`.
    pub fn backward(&self, input: &[f64], labels: &[u8], cache: &ForwardCache) -> Result<Params> {
        backward_with(self, &self.params, input, labels, cache)
    }
}

pub(crate) fn forward_with(
    model: &CnnModel,
    p: &Params,
    input: &[f64],
    mut pass: Pass<'_>,
) -> Result<ForwardCache> {
    let s = &model.shapes;
    let cfg = &model.config;
    let per = s.input_len();
    if input.is_empty() || input.len() % per != 0 {
        return Err(Error::DimensionMismatch {
            expected: per,
            found: input.len(),
        });
    }
    let batch = input.len() / per;
    let train = matches!(pass, Pass::Train(_));
    let drop = train && cfg.dropout_p > 0.0;
    let (fh, fw) = (cfg.filter_h, cfg.filter_w);
    let spatial = s.conv_h * s.conv_w;
    let mut outputs = Vec::with_capacity(s.n_layers());

    // 1: convolution
    let mut conv_z = vec![0.0; batch * s.maps * spatial];
    for b in 0..batch {
        let x = &input[b * per..(b + 1) * per];
        for f in 0..s.maps {
            let z = &mut conv_z[(b * s.maps + f) * spatial..(b * s.maps + f + 1) * spatial];
            z.iter_mut().for_each(|v| *v = p.conv_b[f]);
            for i in 0..fh {
                for j in 0..fw {
                    let w = p.conv_w[(f * fh + i) * fw + j];
                    for r in 0..s.conv_h {
                        let src = &x[(r + i) * s.in_w + j..(r + i) * s.in_w + j + s.conv_w];
                        let dst = &mut z[r * s.conv_w..(r + 1) * s.conv_w];
                        for (d, v) in dst.iter_mut().zip(src) {
                            *d += w * v;
                        }
                    }
                }
            }
        }
    }
    let a: Vec<f64> = conv_z.iter().map(|&z| cfg.activation.apply(z, cfg.elu_alpha)).collect();
    check_finite(&a, 1)?;
    outputs.push(a);

    // 2: batch normalization
    let mut conv_bn = None;
    let y = if !cfg.batchnorm {
        outputs[0].clone()
    } else if train {
        let (y, c) = bn_forward_train(&outputs[0], s.maps, spatial, &p.conv_gamma, &p.conv_beta);
        conv_bn = Some(c);
        y
    } else {
        bn_forward_eval(&outputs[0], s.maps, spatial, &p.conv_gamma, &p.conv_beta, &model.running.conv)
    };
    check_finite(&y, 2)?;
    outputs.push(y);

    // 3: dropout
    let mut conv_mask = None;
    let mut d = outputs[1].clone();
    if drop {
        let Pass::Train(rng) = &mut pass else { unreachable!() };
        let m = dropout_mask(d.len(), cfg.dropout_p, rng);
        d.iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
        conv_mask = Some(m);
    }
    outputs.push(d);

    // 4: pooling, 5: flatten
    let (pooled, pool_argmax) =
        pool_forward(&outputs[2], batch * s.maps * s.conv_h, s.conv_w, cfg.pool_w, cfg.pooling);
    check_finite(&pooled, 4)?;
    outputs.push(pooled.clone());
    outputs.push(pooled);

    let mut dense_z = Vec::new();
    let mut dense_bn = Vec::new();
    let mut dense_mask = Vec::new();
    let mut fan_in = s.flat;
    for (k, (&units, dp)) in s.dense.iter().zip(&p.dense).enumerate() {
        let base = 6 + 3 * k;
        let h = outputs.last().expect("previous layer");
        let mut z = vec![0.0; batch * units];
        for b in 0..batch {
            let hb = &h[b * fan_in..(b + 1) * fan_in];
            for o in 0..units {
                z[b * units + o] = dp.b[o] + crate::linalg::dot(&dp.w[o * fan_in..(o + 1) * fan_in], hb);
            }
        }
        let a: Vec<f64> = z.iter().map(|&v| cfg.activation.apply(v, cfg.elu_alpha)).collect();
        check_finite(&a, base)?;
        dense_z.push(z);
        outputs.push(a);

        let a = outputs.last().expect("dense output");
        let mut bn_cache = None;
        let y = if !cfg.batchnorm {
            a.clone()
        } else if train {
            let (y, c) = bn_forward_train(a, units, 1, &dp.gamma, &dp.beta);
            bn_cache = Some(c);
            y
        } else {
            bn_forward_eval(a, units, 1, &dp.gamma, &dp.beta, &model.running.dense[k])
        };
        check_finite(&y, base + 1)?;
        dense_bn.push(bn_cache);
        outputs.push(y);

        let mut d = outputs.last().expect("bn output").clone();
        let mut mask = None;
        if drop {
            let Pass::Train(rng) = &mut pass else { unreachable!() };
            let m = dropout_mask(d.len(), cfg.dropout_p, rng);
            d.iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
            mask = Some(m);
        }
        dense_mask.push(mask);
        outputs.push(d);
        fan_in = units;
    }

    // output layer
    let h = outputs.last().expect("last hidden layer");
    let mut logits = vec![0.0; batch * 2];
    for b in 0..batch {
        let hb = &h[b * fan_in..(b + 1) * fan_in];
        for o in 0..2 {
            logits[b * 2 + o] = p.out_b[o] + crate::linalg::dot(&p.out_w[o * fan_in..(o + 1) * fan_in], hb);
        }
    }
    let log_probs = log_softmax(&logits, 2);
    let probs: Vec<f64> = log_probs.iter().map(|l| l.exp()).collect();
    check_finite(&log_probs, s.n_layers())?;
    outputs.push(probs);

    Ok(ForwardCache {
        batch,
        outputs,
        conv_z,
        conv_bn,
        conv_mask,
        pool_argmax,
        dense_z,
        dense_bn,
        dense_mask,
        log_probs,
    })
}

pub(crate) fn backward_with(
    model: &CnnModel,
    p: &Params,
    input: &[f64],
    labels: &[u8],
    cache: &ForwardCache,
) -> Result<Params> {
    let s = &model.shapes;
    let cfg = &model.config;
    let batch = cache.batch;
    if labels.len() != batch {
        return Err(Error::DimensionMismatch {
            expected: batch,
            found: labels.len(),
        });
    }
    if cfg.batchnorm && cache.conv_bn.is_none() {
        return Err(Error::InvalidConfig("backward needs a training-mode forward pass".into()));
    }
    let mut g = p.zeros_like();
    let nd = s.dense.len();

    // softmax + cross-entropy: d logits = (p - onehot) / B
    let probs = cache.probabilities();
    let mut dlogits = probs.to_vec();
    for (b, &y) in labels.iter().enumerate() {
        dlogits[2 * b + y as usize] -= 1.0;
    }
    dlogits.iter_mut().for_each(|v| *v /= batch as f64);

    let fan_in = s.dense.last().copied().unwrap_or(s.flat);
    let h = &cache.outputs[cache.outputs.len() - 2];
    let mut dh = vec![0.0; batch * fan_in];
    for b in 0..batch {
        let hb = &h[b * fan_in..(b + 1) * fan_in];
        let dhb = &mut dh[b * fan_in..(b + 1) * fan_in];
        for o in 0..2 {
            let dz = dlogits[2 * b + o];
            g.out_b[o] += dz;
            let w = &p.out_w[o * fan_in..(o + 1) * fan_in];
            let gw = &mut g.out_w[o * fan_in..(o + 1) * fan_in];
            for i in 0..fan_in {
                gw[i] += dz * hb[i];
                dhb[i] += w[i] * dz;
            }
        }
    }

    for k in (0..nd).rev() {
        let units = s.dense[k];
        let in_w = if k == 0 { s.flat } else { s.dense[k - 1] };
        let dp = &p.dense[k];
        // dropout
        if let Some(m) = &cache.dense_mask[k] {
            dh.iter_mut().zip(m).for_each(|(d, k)| *d *= k);
        }
        // batch normalization
        if let Some(bc) = &cache.dense_bn[k] {
            let (dx, dgamma, dbeta) = bn_backward(&dh, bc, units, 1, &dp.gamma);
            dh = dx;
            g.dense[k].gamma = dgamma;
            g.dense[k].beta = dbeta;
        }
        // activation
        let z = &cache.dense_z[k];
        for (d, &zv) in dh.iter_mut().zip(z) {
            *d *= cfg.activation.derivative(zv, cfg.elu_alpha);
        }
        // affine
        let h_in = &cache.outputs[4 + 3 * k];
        let mut dprev = vec![0.0; batch * in_w];
        let gd = &mut g.dense[k];
        for b in 0..batch {
            let hb = &h_in[b * in_w..(b + 1) * in_w];
            let db = &mut dprev[b * in_w..(b + 1) * in_w];
            for o in 0..units {
                let dz = dh[b * units + o];
                if dz == 0.0 {
                    continue;
                }
                gd.b[o] += dz;
                let w = &dp.w[o * in_w..(o + 1) * in_w];
                let gw = &mut gd.w[o * in_w..(o + 1) * in_w];
                for i in 0..in_w {
                    gw[i] += dz * hb[i];
                    db[i] += w[i] * dz;
                }
            }
        }
        dh = dprev;
    }

    // flatten is a view; pooling
    let rows = batch * s.maps * s.conv_h;
    let mut dconv = pool_backward(&dh, rows, s.conv_w, cfg.pool_w, cfg.pooling, &cache.pool_argmax);
    if let Some(m) = &cache.conv_mask {
        dconv.iter_mut().zip(m).for_each(|(d, k)| *d *= k);
    }
    let spatial = s.conv_h * s.conv_w;
    if let Some(bc) = &cache.conv_bn {
        let (dx, dgamma, dbeta) = bn_backward(&dconv, bc, s.maps, spatial, &p.conv_gamma);
        dconv = dx;
        g.conv_gamma = dgamma;
        g.conv_beta = dbeta;
    }
    for (d, &z) in dconv.iter_mut().zip(&cache.conv_z) {
        *d *= cfg.activation.derivative(z, cfg.elu_alpha);
    }
    let (fh, fw) = (cfg.filter_h, cfg.filter_w);
    let per = s.input_len();
    for b in 0..batch {
        let x = &input[b * per..(b + 1) * per];
        for f in 0..s.maps {
            let dz = &dconv[(b * s.maps + f) * spatial..(b * s.maps + f + 1) * spatial];
            g.conv_b[f] += dz.iter().sum::<f64>();
            for i in 0..fh {
                for j in 0..fw {
                    let mut acc = 0.0;
                    for r in 0..s.conv_h {
                        let src = &x[(r + i) * s.in_w + j..(r + i) * s.in_w + j + s.conv_w];
                        acc += crate::linalg::dot(&dz[r * s.conv_w..(r + 1) * s.conv_w], src);
                    }
                    g.conv_w[(f * fh + i) * fw + j] += acc;
                }
            }
        }
    }
    Ok(g)
}
