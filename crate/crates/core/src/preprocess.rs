//! Epoch extraction, baseline correction and amplitude-threshold artifact
//! rejection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::EpochSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub prestim_ms: f64,
    pub poststim_ms: f64,
    /// Half-open `[start, end)` window in ms relative to stimulus onset.
    pub baseline_window_ms: (f64, f64),
    /// Epochs whose peak absolute amplitude exceeds this are rejected.
    pub rejection_threshold_uv: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            prestim_ms: 200.0,
            poststim_ms: 1000.0,
            baseline_window_ms: (-200.0, 0.0),
            rejection_threshold_uv: 100.0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prestim_ms > 0.0 && self.poststim_ms > 0.0) {
            return Err(Error::InvalidConfig(
                "preprocess: prestim_ms and poststim_ms must be positive".into(),
            ));
        }
        if !(self.rejection_threshold_uv > 0.0) {
            return Err(Error::InvalidConfig(
                "preprocess: rejection_threshold_uv must be positive".into(),
            ));
        }
        let (a, b) = self.baseline_window_ms;
        if !(a < b) {
            return Err(Error::InvalidConfig(
                "preprocess: baseline window must satisfy start < end".into(),
            ));
        }
        Ok(())
    }
}

/// A stimulus marker in a continuous recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marker {
    pub onset_sample: usize,
    pub label: u8,
}

/// Continuous multichannel data, `[channel][point]`, plus stimulus markers.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousRecording {
    pub n_channels: usize,
    pub n_points: usize,
    pub sampling_rate_hz: f64,
    pub channel_names: Vec<String>,
    pub data: Vec<f64>,
    pub markers: Vec<Marker>,
}

impl ContinuousRecording {
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.n_points..(c + 1) * self.n_points]
    }
}

/// Result of [`extract_epochs`]: the epochs plus the markers that were
/// skipped because their window ran past the recording edges.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub epochs: EpochSet,
    pub skipped_markers: Vec<usize>,
}

/// Cuts one `[onset - prestim, onset + poststim)` epoch per marker.
pub fn extract_epochs(rec: &ContinuousRecording, cfg: &PreprocessConfig) -> Result<Extraction> {
    cfg.validate()?;
    if rec.data.len() != rec.n_channels * rec.n_points {
        return Err(Error::DimensionMismatch {
            expected: rec.n_channels * rec.n_points,
            found: rec.data.len(),
        });
    }
    let to_samples = |ms: f64| (ms * rec.sampling_rate_hz / 1000.0).round() as usize;
    let pre = to_samples(cfg.prestim_ms);
    let post = to_samples(cfg.poststim_ms);
    let mut epochs = EpochSet::empty(
        rec.n_channels,
        pre + post,
        rec.sampling_rate_hz,
        cfg.prestim_ms,
        rec.channel_names.clone(),
    )?;
    let mut skipped = Vec::new();
    let mut buf = Vec::with_capacity(rec.n_channels * (pre + post));
    for (i, m) in rec.markers.iter().enumerate() {
        if m.onset_sample < pre || m.onset_sample + post > rec.n_points {
            skipped.push(i);
            continue;
        }
        buf.clear();
        let start = m.onset_sample - pre;
        for c in 0..rec.n_channels {
            buf.extend_from_slice(&rec.channel(c)[start..start + pre + post]);
        }
        epochs.push(&buf, m.label, -1)?;
    }
    if !skipped.is_empty() {
        log::warn!("{} marker(s) too close to the recording edge were skipped", skipped.len());
    }
    Ok(Extraction {
        epochs,
        skipped_markers: skipped,
    })
}

/// Sample range of the baseline window inside each epoch of `set`.
fn baseline_range(set: &EpochSet, cfg: &PreprocessConfig) -> Result<std::ops::Range<usize>> {
    let onset = set.onset_sample() as isize;
    let to_samples = |ms: f64| (ms * set.sampling_rate_hz / 1000.0).round() as isize;
    let (a, b) = cfg.baseline_window_ms;
    let start = onset + to_samples(a);
    let end = onset + to_samples(b);
    if start < 0 || end > set.n_samples() as isize || start >= end {
        return Err(Error::WindowOutOfRange {
            start_ms: a,
            end_ms: b,
        });
    }
    Ok(start as usize..end as usize)
}

/// Subtracts, per epoch and channel, the mean over the baseline window.
pub fn baseline_correct(set: &EpochSet, cfg: &PreprocessConfig) -> Result<EpochSet> {
    let range = baseline_range(set, cfg)?;
    let n_samples = set.n_samples();
    let mut out = set.clone();
    for i in 0..out.n_epochs() {
        for chan in out.epoch_mut(i).chunks_exact_mut(n_samples) {
            let mean = chan[range.clone()].iter().sum::<f64>() / range.len() as f64;
            chan.iter_mut().for_each(|v| *v -= mean);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub n_input: usize,
    pub n_rejected: usize,
    pub rejection_rate: f64,
    pub rejected_indices: Vec<usize>,
}

/// Peak absolute amplitude over all channels and samples of an epoch.
pub fn peak_amplitude(epoch: &[f64]) -> f64 {
    epoch.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Drops every epoch with `max |x[c, t]| > threshold` (strict), keeping
/// the survivors in their original order.
pub fn reject_artifacts(set: &EpochSet, cfg: &PreprocessConfig) -> Result<(EpochSet, RejectionReport)> {
    cfg.validate()?;
    let (keep, rejected): (Vec<usize>, Vec<usize>) = (0..set.n_epochs())
        .partition(|&i| peak_amplitude(set.epoch(i)) <= cfg.rejection_threshold_uv);
    let n_input = set.n_epochs();
    let report = RejectionReport {
        n_input,
        n_rejected: rejected.len(),
        rejection_rate: if n_input == 0 {
            0.0
        } else {
            rejected.len() as f64 / n_input as f64
        },
        rejected_indices: rejected,
    };
    Ok((set.subset(&keep), report))
}

/// Baseline correction followed by artifact rejection.
pub fn preprocess_epochs(set: &EpochSet, cfg: &PreprocessConfig) -> Result<(EpochSet, RejectionReport)> {
    let corrected = baseline_correct(set, cfg)?;
    reject_artifacts(&corrected, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;
    use rand::RngExt;

    fn ramp_recording(n_points: usize, markers: Vec<Marker>) -> ContinuousRecording {
        let data = (0..3).flat_map(|_| (0..n_points).map(|t| t as f64)).collect();
        ContinuousRecording {
            n_channels: 3,
            n_points,
            sampling_rate_hz: 1000.0,
            channel_names: vec!["Fz".into(), "Cz".into(), "Pz".into()],
            data,
            markers,
        }
    }

    fn single_epoch(values: Vec<f64>, n_channels: usize) -> EpochSet {
        let n_samples = values.len() / n_channels;
        EpochSet::new(
            n_channels,
            n_samples,
            1000.0,
            200.0,
            (0..n_channels).map(|c| format!("C{c}")).collect(),
            vec![1],
            vec![-1],
            values,
        )
        .unwrap()
    }

    #[test]
    fn extracts_window_around_marker() {
        let rec = ramp_recording(
            8000,
            vec![Marker {
                onset_sample: 5000,
                label: 1,
            }],
        );
        let ex = extract_epochs(&rec, &PreprocessConfig::default()).unwrap();
        assert_eq!(ex.epochs.n_samples(), 1200);
        let ch = ex.epochs.channel(0, 2);
        assert_eq!(ch[0], 4800.0);
        assert_eq!(ch[1199], 5999.0);
        assert_eq!(ex.epochs.labels(), &[1]);
    }

    #[test]
    fn ramp_epoch_matches_direct_indexing() {
        let rec = ramp_recording(
            3000,
            vec![Marker {
                onset_sample: 1000,
                label: 0,
            }],
        );
        let ex = extract_epochs(&rec, &PreprocessConfig::default()).unwrap();
        let expected: Vec<f64> = (800..2000).map(|t| t as f64).collect();
        for c in 0..3 {
            assert_eq!(ex.epochs.channel(0, c), expected.as_slice());
        }
    }

    #[test]
    fn edge_markers_are_skipped() {
        let rec = ramp_recording(
            3000,
            vec![
                Marker {
                    onset_sample: 100,
                    label: 1,
                },
                Marker {
                    onset_sample: 1500,
                    label: 0,
                },
                Marker {
                    onset_sample: 2500,
                    label: 1,
                },
            ],
        );
        let ex = extract_epochs(&rec, &PreprocessConfig::default()).unwrap();
        assert_eq!(ex.epochs.n_epochs(), 1);
        assert_eq!(ex.skipped_markers, vec![0, 2]);
    }

    #[test]
    fn reembedding_extracted_epochs_round_trips() {
        let mut rng = SeededRng::new(4);
        let n_points = 6000;
        let data: Vec<f64> = (0..3 * n_points).map(|_| rng.random_range(-50.0..50.0)).collect();
        let markers = vec![
            Marker { onset_sample: 400, label: 1 },
            Marker { onset_sample: 2100, label: 0 },
            Marker { onset_sample: 4000, label: 1 },
        ];
        let mut rec = ramp_recording(n_points, markers.clone());
        rec.data = data;
        let cfg = PreprocessConfig::default();
        let first = extract_epochs(&rec, &cfg).unwrap().epochs;

        let mut silent = vec![0.0; 3 * n_points];
        for (i, m) in markers.iter().enumerate() {
            for c in 0..3 {
                let start = c * n_points + m.onset_sample - 200;
                silent[start..start + 1200].copy_from_slice(first.channel(i, c));
            }
        }
        rec.data = silent;
        let second = extract_epochs(&rec, &cfg).unwrap().epochs;
        assert_eq!(first, second);
    }

    #[test]
    fn constant_epoch_becomes_zero() {
        let set = single_epoch(vec![7.0; 3 * 1200], 3);
        let out = baseline_correct(&set, &PreprocessConfig::default()).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn poststim_shifted_by_prestim_mean() {
        let mut values = vec![0.0; 1200];
        for (t, v) in values.iter_mut().enumerate() {
            *v = if t < 200 {
                if t % 2 == 0 { 3.0 } else { 4.0 }
            } else {
                t as f64
            };
        }
        let set = single_epoch(values.clone(), 1);
        let out = baseline_correct(&set, &PreprocessConfig::default()).unwrap();
        for t in 200..1200 {
            assert_eq!(out.epoch(0)[t], values[t] - 3.5);
        }
    }

    proptest! {
        #[test]
        fn baseline_mean_is_zero_and_idempotent(seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed);
            let values: Vec<f64> = (0..3 * 1200).map(|_| rng.random_range(-80.0..80.0)).collect();
            let set = single_epoch(values, 3);
            let cfg = PreprocessConfig::default();
            let once = baseline_correct(&set, &cfg).unwrap();
            for c in 0..3 {
                let mean = once.channel(0, c)[..200].iter().sum::<f64>() / 200.0;
                prop_assert!(mean.abs() < 1e-9);
            }
            let twice = baseline_correct(&once, &cfg).unwrap();
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejection_boundary_is_strict() {
        let cfg = PreprocessConfig::default();
        for (peak, kept) in [(100.1, false), (99.9, true), (100.0, true), (-100.1, false)] {
            let mut values = vec![0.0; 3 * 1200];
            values[1700] = peak;
            let set = single_epoch(values, 3);
            let (out, report) = reject_artifacts(&set, &cfg).unwrap();
            assert_eq!(out.n_epochs() == 1, kept, "peak {peak}");
            assert_eq!(report.n_rejected, usize::from(!kept));
        }
    }

    #[test]
    fn zero_set_rejects_nothing() {
        let set = EpochSet::new(
            1,
            4,
            1000.0,
            0.0,
            vec!["A".into()],
            vec![0, 1, 0],
            vec![-1; 3],
            vec![0.0; 12],
        )
        .unwrap();
        let (out, report) = reject_artifacts(&set, &PreprocessConfig::default()).unwrap();
        assert_eq!(out.n_epochs(), 3);
        assert_eq!(report.rejection_rate, 0.0);
    }

    #[test]
    fn rejection_keeps_order_and_is_label_agnostic() {
        let mut rng = SeededRng::new(8);
        let n = 40;
        let data: Vec<f64> = (0..n * 2 * 50).map(|_| rng.random_range(-120.0..120.0) * 0.9).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let set = EpochSet::new(2, 50, 1000.0, 0.0, vec!["A".into(), "B".into()], labels.clone(), vec![-1; n], data)
            .unwrap();
        let cfg = PreprocessConfig::default();
        let (out, report) = reject_artifacts(&set, &cfg).unwrap();
        assert!(report.rejected_indices.windows(2).all(|w| w[0] < w[1]));
        assert!(out.data().iter().all(|v| v.abs() <= 100.0));
        assert_eq!(report.n_input, n);
        assert_eq!(report.rejection_rate, report.n_rejected as f64 / n as f64);

        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let (_, report2) = reject_artifacts(&set.clone().with_labels(flipped).unwrap(), &cfg).unwrap();
        assert_eq!(report.rejected_indices, report2.rejected_indices);
    }
}
