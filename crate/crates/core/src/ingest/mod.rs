//! Epoch containers and the ways to get data into them: the EPB binary
//! format, delimited text import, and a synthetic P300 generator.

mod csv_import;
mod epb;
mod synth;

pub use csv_import::{import_csv, EpochMeta};
pub use epb::{read_epb, read_epb_bytes, write_epb, write_epb_bytes, EPB_MAGIC, EPB_VERSION};
pub use synth::{synthesize, SynthConfig};

use crate::error::{Error, Result};

pub const TARGET: u8 = 1;
pub const NON_TARGET: u8 = 0;

/// A set of equally shaped multichannel epochs.
///
/// Amplitudes are in microvolts and laid out `[epoch][channel][sample]`.
/// Sample 0 of every epoch lies `prestim_ms` before stimulus onset.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    n_channels: usize,
    n_samples: usize,
    pub sampling_rate_hz: f64,
    pub prestim_ms: f64,
    pub channel_names: Vec<String>,
    labels: Vec<u8>,
    subject_ids: Vec<i32>,
    data: Vec<f64>,
}

impl EpochSet {
    /// An empty set with the given shape and metadata.
    pub fn empty(
        n_channels: usize,
        n_samples: usize,
        sampling_rate_hz: f64,
        prestim_ms: f64,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        let set = Self {
            n_channels,
            n_samples,
            sampling_rate_hz,
            prestim_ms,
            channel_names,
            labels: Vec::new(),
            subject_ids: Vec::new(),
            data: Vec::new(),
        };
        set.validate_header()?;
        Ok(set)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_channels: usize,
        n_samples: usize,
        sampling_rate_hz: f64,
        prestim_ms: f64,
        channel_names: Vec<String>,
        labels: Vec<u8>,
        subject_ids: Vec<i32>,
        data: Vec<f64>,
    ) -> Result<Self> {
        let set = Self {
            n_channels,
            n_samples,
            sampling_rate_hz,
            prestim_ms,
            channel_names,
            labels,
            subject_ids,
            data,
        };
        set.validate()?;
        Ok(set)
    }

    fn validate_header(&self) -> Result<()> {
        if self.n_channels == 0 || self.n_samples == 0 {
            return Err(Error::InvalidConfig("epochs need at least one channel and sample".into()));
        }
        if !(self.sampling_rate_hz > 0.0 && self.sampling_rate_hz.is_finite()) {
            return Err(Error::InvalidConfig("sampling rate must be positive".into()));
        }
        if !(self.prestim_ms >= 0.0 && self.prestim_ms.is_finite()) {
            return Err(Error::InvalidConfig("prestimulus span must be non-negative".into()));
        }
        if self.channel_names.len() != self.n_channels {
            return Err(Error::DimensionMismatch {
                expected: self.n_channels,
                found: self.channel_names.len(),
            });
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        self.validate_header()?;
        let n = self.labels.len();
        if self.subject_ids.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.subject_ids.len(),
            });
        }
        if self.data.len() != n * self.epoch_len() {
            return Err(Error::DimensionMismatch {
                expected: n * self.epoch_len(),
                found: self.data.len(),
            });
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidConfig(format!("label {bad} is not 0 or 1")));
        }
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(self.invalid_amplitude(pos));
        }
        Ok(())
    }

    fn invalid_amplitude(&self, flat: usize) -> Error {
        let per_epoch = self.epoch_len();
        Error::InvalidAmplitude {
            epoch: flat / per_epoch,
            channel: (flat % per_epoch) / self.n_samples,
            sample: flat % self.n_samples,
        }
    }

    pub fn n_epochs(&self) -> usize {
        self.labels.len()
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Values per epoch (`n_channels * n_samples`).
    pub fn epoch_len(&self) -> usize {
        self.n_channels * self.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn subject_ids(&self) -> &[i32] {
        &self.subject_ids
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn epoch(&self, i: usize) -> &[f64] {
        let len = self.epoch_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn epoch_mut(&mut self, i: usize) -> &mut [f64] {
        let len = self.epoch_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    pub fn channel(&self, epoch: usize, channel: usize) -> &[f64] {
        let start = epoch * self.epoch_len() + channel * self.n_samples;
        &self.data[start..start + self.n_samples]
    }

    /// Appends one epoch.
    pub fn push(&mut self, values: &[f64], label: u8, subject_id: i32) -> Result<()> {
        if values.len() != self.epoch_len() {
            return Err(Error::DimensionMismatch {
                expected: self.epoch_len(),
                found: values.len(),
            });
        }
        if label > 1 {
            return Err(Error::InvalidConfig(format!("label {label} is not 0 or 1")));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let err = Error::InvalidAmplitude {
                epoch: self.n_epochs(),
                channel: pos / self.n_samples,
                sample: pos % self.n_samples,
            };
            return Err(err);
        }
        self.data.extend_from_slice(values);
        self.labels.push(label);
        self.subject_ids.push(subject_id);
        Ok(())
    }

    /// Epochs at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> EpochSet {
        let mut out = self.same_shape_empty();
        out.data.reserve(indices.len() * self.epoch_len());
        for &i in indices {
            out.data.extend_from_slice(self.epoch(i));
            out.labels.push(self.labels[i]);
            out.subject_ids.push(self.subject_ids[i]);
        }
        out
    }

    /// An empty set sharing this set's shape and metadata.
    pub fn same_shape_empty(&self) -> EpochSet {
        EpochSet {
            n_channels: self.n_channels,
            n_samples: self.n_samples,
            sampling_rate_hz: self.sampling_rate_hz,
            prestim_ms: self.prestim_ms,
            channel_names: self.channel_names.clone(),
            labels: Vec::new(),
            subject_ids: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != self.n_epochs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_epochs(),
                found: labels.len(),
            });
        }
        self.labels = labels;
        self.validate()?;
        Ok(self)
    }

    /// Number of whole samples spanning `ms` milliseconds.
    pub fn ms_to_samples(&self, ms: f64) -> usize {
        (ms * self.sampling_rate_hz / 1000.0).round().max(0.0) as usize
    }

    /// Index of the stimulus-onset sample.
    pub fn onset_sample(&self) -> usize {
        self.ms_to_samples(self.prestim_ms)
    }

    pub fn count_targets(&self) -> usize {
        self.labels.iter().filter(|&&l| l == TARGET).count()
    }
}
