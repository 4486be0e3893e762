//! A small convolutional network trained from scratch.
//!
//! Layer numbering (1-based, used by [`layer_outputs`]):
//!
//! | index | layer |
//! |-------|-------|
//! | 1 | convolution `filter_h x filter_w`, valid, stride 1, activation fused |
//! | 2 | batch normalization per feature map |
//! | 3 | dropout |
//! | 4 | pooling `1 x pool_w`, stride `pool_w`, remainder dropped |
//! | 5 | flatten, order `[map][row][pooled column]` |
//! | 6, 7, 8 | dense + activation, batch normalization, dropout (repeated per dense layer) |
//! | last | dense 2 + softmax |
//!
//! Batch normalization layers become identities when disabled, so the
//! numbering does not depend on the configuration.

mod layers;
mod network;
mod train;

#[cfg(test)]
mod tests;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::EpochSet;
use crate::linalg::Matrix;
use crate::rng::SeededRng;

pub use layers::{elu, elu_derivative, log_softmax, Activation, BnStats, Pooling, BN_EPS, BN_MOMENTUM};
pub use network::{ForwardCache, Pass};
pub use train::{
    adam_step, train_cnn, AdamConfig, AdamState, EarlyStopping, EpochLog, StopDecision,
};

pub const POOL_LAYER: usize = 4;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnnConfig {
    pub n_filters: usize,
    pub filter_h: usize,
    pub filter_w: usize,
    pub pool_w: usize,
    pub dense_units: Vec<usize>,
    pub dropout_p: f64,
    pub elu_alpha: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    pub activation: Activation,
    pub pooling: Pooling,
    pub batchnorm: bool,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            n_filters: 6,
            filter_h: 3,
            filter_w: 3,
            pool_w: 8,
            dense_units: vec![100],
            dropout_p: 0.5,
            elu_alpha: 1.0,
            batch_size: 16,
            max_epochs: 30,
            patience: 5,
            adam: AdamConfig::default(),
            activation: Activation::Elu,
            pooling: Pooling::Average,
            batchnorm: true,
            seed: 0,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("cnn: {m}")));
        if [self.n_filters, self.filter_h, self.filter_w, self.pool_w, self.batch_size, self.max_epochs, self.patience]
            .contains(&0)
        {
            return bad("all counts must be at least 1");
        }
        if self.dense_units.contains(&0) {
            return bad("dense layer widths must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must lie in [0, 1)");
        }
        if !(self.elu_alpha > 0.0) {
            return bad("elu_alpha must be positive");
        }
        self.adam.validate()
    }

    /// Shape of every layer for inputs of `channels x samples`.
    pub fn shapes(&self, channels: usize, samples: usize) -> Result<Shapes> {
        self.validate()?;
        if channels < self.filter_h || samples < self.filter_w {
            return Err(Error::InvalidConfig(format!(
                "cnn: {}x{} filter does not fit a {channels}x{samples} input",
                self.filter_h, self.filter_w
            )));
        }
        let conv_h = channels - self.filter_h + 1;
        let conv_w = samples - self.filter_w + 1;
        let pooled_w = conv_w / self.pool_w;
        if pooled_w == 0 {
            return Err(Error::InvalidConfig(format!(
                "cnn: pool width {} exceeds convolution output width {conv_w}",
                self.pool_w
            )));
        }
        Ok(Shapes {
            in_h: channels,
            in_w: samples,
            maps: self.n_filters,
            conv_h,
            conv_w,
            pooled_w,
            flat: self.n_filters * conv_h * pooled_w,
            dense: self.dense_units.clone(),
        })
    }
}

/// Layer dimensions derived from a configuration and an input shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shapes {
    pub in_h: usize,
    pub in_w: usize,
    pub maps: usize,
    pub conv_h: usize,
    pub conv_w: usize,
    pub pooled_w: usize,
    pub flat: usize,
    pub dense: Vec<usize>,
}

impl Shapes {
    pub fn n_layers(&self) -> usize {
        6 + 3 * self.dense.len()
    }

    pub fn input_len(&self) -> usize {
        self.in_h * self.in_w
    }

    /// Per-sample output width of a 1-based layer.
    pub fn layer_width(&self, layer: usize) -> usize {
        match layer {
            1..=3 => self.maps * self.conv_h * self.conv_w,
            4 | 5 => self.flat,
            l if l == self.n_layers() => 2,
            l => self.dense[(l - 6) / 3],
        }
    }

    /// Grid used to export one layer's output: `(rows, cols)`. Convolutional
    /// layers put time (row-major over height) down the rows and maps across
    /// the columns; vector layers are a single column.
    pub fn layer_grid(&self, layer: usize) -> (usize, usize) {
        match layer {
            1..=3 => (self.conv_h * self.conv_w, self.maps),
            4 => (self.conv_h * self.pooled_w, self.maps),
            l => (self.layer_width(l), 1),
        }
    }
}

/// Trainable parameters of one dense block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    /// `[out][in]`
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// All trainable parameters. Gradients use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// `[map][row][col]`
    pub conv_w: Vec<f64>,
    pub conv_b: Vec<f64>,
    pub conv_gamma: Vec<f64>,
    pub conv_beta: Vec<f64>,
    pub dense: Vec<DenseParams>,
    /// `[class][in]`
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

impl Params {
    /// Truncated-normal weights (cut at two standard deviations) with
    /// standard deviation `1 / sqrt(fan_in)`; zero biases, unit BN gains.
    pub fn init(shapes: &Shapes, cfg: &CnnConfig, rng: &mut SeededRng) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let mut draw = |len: usize, fan_in: usize| -> Vec<f64> {
            let scale = 1.0 / (fan_in as f64).sqrt();
            (0..len)
                .map(|_| loop {
                    let z: f64 = StandardNormal.sample(rng);
                    if z.abs() <= 2.0 {
                        break z * scale;
                    }
                })
                .collect()
        };
        let bn = |n: usize| if cfg.batchnorm { vec![1.0; n] } else { Vec::new() };
        let bn0 = |n: usize| if cfg.batchnorm { vec![0.0; n] } else { Vec::new() };
        let conv_w = draw(shapes.maps * cfg.filter_h * cfg.filter_w, cfg.filter_h * cfg.filter_w);
        let mut dense = Vec::new();
        let mut fan_in = shapes.flat;
        for &units in &shapes.dense {
            dense.push(DenseParams {
                w: draw(units * fan_in, fan_in),
                b: vec![0.0; units],
                gamma: bn(units),
                beta: bn0(units),
            });
            fan_in = units;
        }
        Self {
            conv_w,
            conv_b: vec![0.0; shapes.maps],
            conv_gamma: bn(shapes.maps),
            conv_beta: bn0(shapes.maps),
            dense,
            out_w: draw(2 * fan_in, fan_in),
            out_b: vec![0.0; 2],
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.iter_mut().for_each(|v| *v = 0.0));
        z
    }

    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut t = vec![&self.conv_w, &self.conv_b, &self.conv_gamma, &self.conv_beta];
        for d in &self.dense {
            t.extend([&d.w, &d.b, &d.gamma, &d.beta]);
        }
        t.extend([&self.out_w, &self.out_b]);
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut t = vec![&mut self.conv_w, &mut self.conv_b, &mut self.conv_gamma, &mut self.conv_beta];
        for d in &mut self.dense {
            t.extend([&mut d.w, &mut d.b, &mut d.gamma, &mut d.beta]);
        }
        t.extend([&mut self.out_w, &mut self.out_b]);
        t
    }

    /// Names matching [`Params::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut n: Vec<String> = ["conv_w", "conv_b", "conv_gamma", "conv_beta"].map(String::from).into();
        for k in 0..self.dense.len() {
            n.extend(["w", "b", "gamma", "beta"].map(|s| format!("dense{k}_{s}")));
        }
        n.extend(["out_w".into(), "out_b".into()]);
        n
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Running statistics of every batch-normalization layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub conv: BnStats,
    pub dense: Vec<BnStats>,
}

impl RunningStats {
    pub fn new(shapes: &Shapes) -> Self {
        Self {
            conv: BnStats::new(shapes.maps),
            dense: shapes.dense.iter().map(|&u| BnStats::new(u)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnModel {
    pub format_version: u32,
    pub config: CnnConfig,
    pub shapes: Shapes,
    pub params: Params,
    pub running: RunningStats,
    pub training_log: Vec<EpochLog>,
    /// Epoch (1-based) whose weights were kept.
    pub best_epoch: Option<usize>,
}

impl CnnModel {
    /// A freshly initialized, untrained network.
    pub fn new(cfg: &CnnConfig, channels: usize, samples: usize) -> Result<Self> {
        let shapes = cfg.shapes(channels, samples)?;
        let mut rng = SeededRng::new(cfg.seed).child(0);
        let params = Params::init(&shapes, cfg, &mut rng);
        Ok(Self {
            format_version: CHECKPOINT_VERSION,
            config: cfg.clone(),
            running: RunningStats::new(&shapes),
            shapes,
            params,
            training_log: Vec::new(),
            best_epoch: None,
        })
    }

    /// Eval-mode class probabilities, `[sample][class]`.
    pub fn predict_proba(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let per = self.shapes.input_len();
        if inputs.len() % per != 0 {
            return Err(Error::DimensionMismatch {
                expected: per,
                found: inputs.len() % per,
            });
        }
        let mut probs = Vec::with_capacity(inputs.len() / per * 2);
        for chunk in inputs.chunks(per * 256) {
            let cache = self.forward(chunk, Pass::Eval)?;
            probs.extend(cache.probabilities());
        }
        Ok(probs)
    }

    /// Target-class probability for each epoch of `set`.
    pub fn score(&self, set: &EpochSet) -> Result<Vec<f64>> {
        self.check_set(set)?;
        Ok(self.predict_proba(set.data())?.chunks_exact(2).map(|p| p[1]).collect())
    }

    pub fn predict(&self, set: &EpochSet) -> Result<Vec<u8>> {
        Ok(self.score(set)?.into_iter().map(|p| u8::from(p > 0.5)).collect())
    }

    fn check_set(&self, set: &EpochSet) -> Result<()> {
        if set.n_channels() != self.shapes.in_h {
            return Err(Error::DimensionMismatch {
                expected: self.shapes.in_h,
                found: set.n_channels(),
            });
        }
        if set.n_samples() != self.shapes.in_w {
            return Err(Error::DimensionMismatch {
                expected: self.shapes.in_w,
                found: set.n_samples(),
            });
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text)?;
        if model.format_version != CHECKPOINT_VERSION {
            return Err(Error::UnrecognizedContainer);
        }
        Ok(model)
    }

    /// Writes `epoch,train_loss,val_loss` rows; the validation column is
    /// empty when no validation set was used.
    pub fn write_training_log(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["epoch", "train_loss", "val_loss"]).map_err(|e| csv_err(path, e))?;
        for e in &self.training_log {
            let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([e.epoch.to_string(), e.train_loss.to_string(), val])
                .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

pub fn score_cnn(model: &CnnModel, set: &EpochSet) -> Result<Vec<f64>> {
    model.score(set)
}

/// Mean eval-mode output of a layer over all epochs of `set`, arranged as
/// [`Shapes::layer_grid`] (row-major).
pub fn layer_outputs(model: &CnnModel, set: &EpochSet, layer: usize) -> Result<Matrix> {
    let n_layers = model.shapes.n_layers();
    if layer == 0 || layer > n_layers {
        return Err(Error::InvalidLayer {
            index: layer,
            layers: n_layers,
        });
    }
    model.check_set(set)?;
    if set.is_empty() {
        return Err(Error::TooFewEpochs("layer_outputs needs at least one epoch".into()));
    }
    let width = model.shapes.layer_width(layer);
    let mut sum = vec![0.0; width];
    let per = model.shapes.input_len();
    for chunk in set.data().chunks(per * 256) {
        let cache = model.forward(chunk, Pass::Eval)?;
        for row in cache.layer(layer).chunks_exact(width) {
            sum.iter_mut().zip(row).for_each(|(s, v)| *s += v);
        }
    }
    let n = set.n_epochs() as f64;
    let mean: Vec<f64> = sum.into_iter().map(|s| s / n).collect();
    let (rows, cols) = model.shapes.layer_grid(layer);
    // per-sample layout is [map][position]; the grid wants [position][map]
    let data = if cols == 1 {
        mean
    } else {
        let mut g = vec![0.0; rows * cols];
        for m in 0..cols {
            for p in 0..rows {
                g[p * cols + m] = mean[m * rows + p];
            }
        }
        g
    };
    Matrix::from_vec(rows, cols, data)
}

/// Writes a layer grid with a leading position column and one column per map.
pub fn write_layer_csv(map: &Matrix, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["position".to_string()];
    header.extend((0..map.cols()).map(|m| format!("map{m}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (p, row) in map.iter_rows().enumerate() {
        let mut rec = vec![p.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
