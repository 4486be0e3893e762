use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EpochSet, NON_TARGET, TARGET};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Parameters of the synthetic P300 generator.
///
/// Target epochs carry a Gaussian bump `A * exp(-(t - L)^2 / (2 w^2))`
/// scaled per channel; both classes carry white Gaussian noise. The default
/// latency of 500 ms mimics the delayed P300 of a child cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_epochs: usize,
    pub n_channels: usize,
    pub n_samples: usize,
    pub sampling_rate_hz: f64,
    pub prestim_ms: f64,
    pub p300_amplitude_uv: f64,
    pub p300_latency_ms: f64,
    pub latency_jitter_ms: f64,
    pub p300_width_ms: f64,
    pub noise_std_uv: f64,
    pub channel_gains: Vec<f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_epochs: 2000,
            n_channels: 3,
            n_samples: 1200,
            sampling_rate_hz: 1000.0,
            prestim_ms: 200.0,
            p300_amplitude_uv: 8.0,
            p300_latency_ms: 500.0,
            latency_jitter_ms: 50.0,
            p300_width_ms: 80.0,
            noise_std_uv: 12.0,
            channel_gains: vec![0.7, 1.0, 0.9],
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("synth: {m}")));
        if self.n_channels == 0 || self.n_samples == 0 {
            return bad("n_channels and n_samples must be at least 1");
        }
        if !(self.sampling_rate_hz > 0.0) || !(self.prestim_ms >= 0.0) {
            return bad("sampling_rate_hz must be positive and prestim_ms non-negative");
        }
        for (name, v) in [
            ("p300_amplitude_uv", self.p300_amplitude_uv),
            ("latency_jitter_ms", self.latency_jitter_ms),
            ("p300_width_ms", self.p300_width_ms),
            ("noise_std_uv", self.noise_std_uv),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be finite and non-negative"));
            }
        }
        let poststim_ms = self.n_samples as f64 * 1000.0 / self.sampling_rate_hz - self.prestim_ms;
        if !(0.0..=poststim_ms).contains(&self.p300_latency_ms) {
            return bad("p300_latency_ms must lie inside the poststimulus window");
        }
        if self.channel_gains.len() != self.n_channels {
            return bad("channel_gains needs one gain per channel");
        }
        if self.channel_gains.iter().any(|g| !g.is_finite()) {
            return bad("channel_gains must be finite");
        }
        Ok(())
    }

    fn channel_names(&self) -> Vec<String> {
        if self.n_channels == 3 {
            vec!["Fz".into(), "Cz".into(), "Pz".into()]
        } else {
            (1..=self.n_channels).map(|i| format!("Ch{i}")).collect()
        }
    }
}

/// Generates a balanced synthetic epoch set (`n / 2` targets, shuffled).
pub fn synthesize(cfg: &SynthConfig) -> Result<EpochSet> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let n_targets = cfg.n_epochs / 2;
    let mut labels: Vec<u8> = (0..cfg.n_epochs)
        .map(|i| if i < n_targets { TARGET } else { NON_TARGET })
        .collect();
    labels.shuffle(&mut rng);

    let noise = Normal::new(0.0, cfg.noise_std_uv).expect("validated std");
    let latency = Normal::new(cfg.p300_latency_ms, cfg.latency_jitter_ms).expect("validated std");
    let times_ms: Vec<f64> = (0..cfg.n_samples)
        .map(|s| s as f64 * 1000.0 / cfg.sampling_rate_hz - cfg.prestim_ms)
        .collect();
    let two_w2 = 2.0 * cfg.p300_width_ms * cfg.p300_width_ms;

    let mut set = EpochSet::empty(
        cfg.n_channels,
        cfg.n_samples,
        cfg.sampling_rate_hz,
        cfg.prestim_ms,
        cfg.channel_names(),
    )?;
    let mut epoch = vec![0.0; cfg.n_channels * cfg.n_samples];
    let mut bump = vec![0.0; cfg.n_samples];
    for &label in &labels {
        bump.iter_mut().for_each(|b| *b = 0.0);
        if label == TARGET && cfg.p300_amplitude_uv > 0.0 {
            let l = latency.sample(&mut rng);
            for (b, t) in bump.iter_mut().zip(&times_ms) {
                let d = t - l;
                *b = if two_w2 > 0.0 {
                    cfg.p300_amplitude_uv * (-d * d / two_w2).exp()
                } else if d == 0.0 {
                    cfg.p300_amplitude_uv
                } else {
                    0.0
                };
            }
        }
        for (c, chan) in epoch.chunks_exact_mut(cfg.n_samples).enumerate() {
            let gain = cfg.channel_gains[c];
            for (v, b) in chan.iter_mut().zip(&bump) {
                let n = if cfg.noise_std_uv > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                *v = gain * b + n;
            }
        }
        set.push(&epoch, label, -1)?;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_free_peaks_at_latency() {
        let cfg = SynthConfig {
            n_epochs: 10,
            noise_std_uv: 0.0,
            latency_jitter_ms: 0.0,
            ..SynthConfig::default()
        };
        let set = synthesize(&cfg).unwrap();
        let peak_sample = set.onset_sample() + 500;
        for i in 0..set.n_epochs() {
            for c in 0..3 {
                let ch = set.channel(i, c);
                if set.labels()[i] == TARGET {
                    let argmax = (0..ch.len()).max_by(|&a, &b| ch[a].total_cmp(&ch[b])).unwrap();
                    assert_eq!(argmax, peak_sample);
                    assert!((ch[argmax] - 8.0 * cfg.channel_gains[c]).abs() < 1e-12);
                } else {
                    assert!(ch.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn balanced_and_deterministic() {
        let cfg = SynthConfig {
            n_epochs: 101,
            n_samples: 300,
            p300_latency_ms: 60.0,
            ..SynthConfig::default()
        };
        let a = synthesize(&cfg).unwrap();
        let b = synthesize(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.count_targets(), 50);
        let c = synthesize(&SynthConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn grand_average_difference_peaks_near_latency() {
        let set = synthesize(&SynthConfig::default()).unwrap();
        let n = set.n_samples();
        let mut diff = vec![0.0; n];
        let (nt, nn) = (set.count_targets() as f64, (set.n_epochs() - set.count_targets()) as f64);
        for i in 0..set.n_epochs() {
            let w = if set.labels()[i] == TARGET { 1.0 / nt } else { -1.0 / nn };
            for c in 0..3 {
                for (d, v) in diff.iter_mut().zip(set.channel(i, c)) {
                    *d += w * v / 3.0;
                }
            }
        }
        let argmax = (0..n).max_by(|&a, &b| diff[a].total_cmp(&diff[b])).unwrap();
        let peak_ms = argmax as f64 - 200.0;
        assert!((peak_ms - 500.0).abs() <= 20.0, "peak at {peak_ms} ms");
    }

    #[test]
    fn non_target_mean_shrinks_with_n() {
        let cfg = SynthConfig {
            n_epochs: 10_000,
            n_samples: 100,
            p300_latency_ms: 0.0,
            prestim_ms: 0.0,
            ..SynthConfig::default()
        };
        let set = synthesize(&cfg).unwrap();
        let n_non = (set.n_epochs() - set.count_targets()) as f64;
        let mut mean = vec![0.0; set.epoch_len()];
        for i in (0..set.n_epochs()).filter(|&i| set.labels()[i] == NON_TARGET) {
            for (m, v) in mean.iter_mut().zip(set.epoch(i)) {
                *m += v / n_non;
            }
        }
        let bound = 3.0 * cfg.noise_std_uv / n_non.sqrt();
        let violations = mean.iter().filter(|m| m.abs() > bound).count();
        // 3-sigma: roughly 0.27 % of 300 cells may exceed the bound by chance
        assert!(violations <= 3, "{violations} cells above {bound}");
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SynthConfig {
            channel_gains: vec![1.0],
            ..SynthConfig::default()
        };
        assert!(synthesize(&cfg).is_err());
        let cfg = SynthConfig {
            p300_latency_ms: 2000.0,
            ..SynthConfig::default()
        };
        assert!(synthesize(&cfg).is_err());
    }
}
