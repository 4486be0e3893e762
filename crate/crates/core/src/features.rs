//! Windowed-means features and per-feature standardization.
//!
//! Each channel's `[start, end)` poststimulus window is cut into
//! `n_intervals` consecutive sub-windows and replaced by their mean
//! amplitudes. With 3 channels and 20 intervals this yields 60 features,
//! ordered channel-major (`ch0_win0 .. ch0_win19, ch1_win0, ..`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::EpochSet;
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WmConfig {
    pub window_start_ms: f64,
    pub window_end_ms: f64,
    pub n_intervals: usize,
}

impl Default for WmConfig {
    fn default() -> Self {
        Self {
            window_start_ms: 300.0,
            window_end_ms: 1000.0,
            n_intervals: 20,
        }
    }
}

impl WmConfig {
    pub fn with_window(start_ms: f64, end_ms: f64) -> Self {
        Self {
            window_start_ms: start_ms,
            window_end_ms: end_ms,
            ..Self::default()
        }
    }
}

/// How epochs become feature vectors before standardization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Windowed means.
    #[default]
    Wm,
    /// Every sample of every channel, flattened channel-major.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub wm: WmConfig,
}

impl FeatureConfig {
    pub fn wm(start_ms: f64, end_ms: f64) -> Self {
        Self {
            kind: FeatureKind::Wm,
            wm: WmConfig::with_window(start_ms, end_ms),
        }
    }

    pub fn raw() -> Self {
        Self {
            kind: FeatureKind::Raw,
            ..Self::default()
        }
    }

    /// Short tag such as `wm300-1000` or `raw`.
    pub fn tag(&self) -> String {
        match self.kind {
            FeatureKind::Wm => format!("wm{}-{}", self.wm.window_start_ms, self.wm.window_end_ms),
            FeatureKind::Raw => "raw".into(),
        }
    }

    pub fn extract(&self, set: &EpochSet) -> Result<FeatureMatrix> {
        match self.kind {
            FeatureKind::Wm => extract_wm(set, &self.wm),
            FeatureKind::Raw => extract_raw(set),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Matrix,
    pub labels: Vec<u8>,
    pub names: Vec<String>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_features(&self) -> usize {
        self.values.cols()
    }

    /// Writes a header of feature names plus a trailing `label` column.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let to_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(to_err)?;
        let mut header = self.names.clone();
        header.push("label".into());
        w.write_record(&header).map_err(to_err)?;
        for (row, label) in self.values.iter_rows().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(label.to_string());
            w.write_record(&rec).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Sample boundaries `b_0 < b_1 < .. < b_n` of the windowed-means intervals.
///
/// Interval `i` covers `[b_i, b_{i+1})` with
/// `b_i = s + round(i * len / n)` (halves rounded up), where `[s, s + len)`
/// is the window in samples.
pub fn interval_bounds(set: &EpochSet, cfg: &WmConfig) -> Result<Vec<usize>> {
    let out_of_range = || Error::WindowOutOfRange {
        start_ms: cfg.window_start_ms,
        end_ms: cfg.window_end_ms,
    };
    if cfg.n_intervals == 0 {
        return Err(Error::InvalidConfig("features: n_intervals must be at least 1".into()));
    }
    if !(cfg.window_start_ms >= 0.0 && cfg.window_start_ms < cfg.window_end_ms) {
        return Err(out_of_range());
    }
    let onset = set.onset_sample();
    let start = onset + set.ms_to_samples(cfg.window_start_ms);
    let end = onset + set.ms_to_samples(cfg.window_end_ms);
    if end > set.n_samples() || end <= start {
        return Err(out_of_range());
    }
    let len = end - start;
    let n = cfg.n_intervals;
    if len < n {
        return Err(Error::InvalidConfig(format!(
            "features: {len} samples cannot fill {n} intervals"
        )));
    }
    Ok((0..=n).map(|i| start + (2 * i * len + n) / (2 * n)).collect())
}

pub fn wm_feature_names(n_channels: usize, n_intervals: usize) -> Vec<String> {
    (0..n_channels)
        .flat_map(|c| (0..n_intervals).map(move |j| format!("ch{c}_win{j}")))
        .collect()
}

/// Windowed-means features of every epoch.
pub fn extract_wm(set: &EpochSet, cfg: &WmConfig) -> Result<FeatureMatrix> {
    let bounds = interval_bounds(set, cfg)?;
    let n_features = set.n_channels() * cfg.n_intervals;
    let mut values = Vec::with_capacity(set.n_epochs() * n_features);
    for i in 0..set.n_epochs() {
        for c in 0..set.n_channels() {
            let chan = set.channel(i, c);
            for w in bounds.windows(2) {
                let seg = &chan[w[0]..w[1]];
                values.push(seg.iter().sum::<f64>() / seg.len() as f64);
            }
        }
    }
    Ok(FeatureMatrix {
        values: Matrix::from_vec(set.n_epochs(), n_features, values)?,
        labels: set.labels().to_vec(),
        names: wm_feature_names(set.n_channels(), cfg.n_intervals),
    })
}

/// All samples flattened, `n_channels * n_samples` features per epoch.
pub fn extract_raw(set: &EpochSet) -> Result<FeatureMatrix> {
    let names = (0..set.n_channels())
        .flat_map(|c| (0..set.n_samples()).map(move |t| format!("ch{c}_t{t}")))
        .collect();
    Ok(FeatureMatrix {
        values: Matrix::from_vec(set.n_epochs(), set.epoch_len(), set.data().to_vec())?,
        labels: set.labels().to_vec(),
        names,
    })
}

const DEGENERATE_STD: f64 = 1e-12;

/// Per-feature mean and population standard deviation, fitted on training
/// rows only. Features whose std falls below 1e-12 always map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub degenerate: Vec<usize>,
}

impl Standardizer {
    pub fn fit(train: &Matrix) -> Result<Self> {
        let n = train.rows();
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: n });
        }
        let mean = train.column_means();
        let mut var = vec![0.0; train.cols()];
        for row in train.iter_rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = x - m;
                *v += d * d;
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
        let degenerate: Vec<usize> = (0..std.len()).filter(|&j| std[j] < DEGENERATE_STD).collect();
        if !degenerate.is_empty() {
            log::warn!("{} constant feature(s) will be standardized to 0", degenerate.len());
        }
        Ok(Self {
            mean,
            std,
            degenerate,
        })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: x.cols(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            self.apply_row(out.row_mut(i));
        }
        Ok(out)
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = if *s < DEGENERATE_STD { 0.0 } else { (*v - m) / s };
        }
    }
}

pub fn fit_standardizer(train: &FeatureMatrix) -> Result<Standardizer> {
    Standardizer::fit(&train.values)
}

pub fn apply_standardizer(s: &Standardizer, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    Ok(FeatureMatrix {
        values: s.apply(&x.values)?,
        labels: x.labels.clone(),
        names: x.names.clone(),
    })
}
