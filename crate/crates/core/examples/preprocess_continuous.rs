//! Cuts epochs out of a continuous recording, baseline-corrects them and
//! drops the ones that exceed the amplitude threshold.

use p300bench::preprocess::{extract_epochs, preprocess_epochs, ContinuousRecording, Marker, PreprocessConfig};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn main() -> p300bench::Result<()> {
    let (n_channels, n_points) = (3, 60_000);
    let mut rng = rand_pcg::Pcg64::seed_from_u64(5);
    let noise = Normal::new(0.0, 20.0).unwrap();
    let mut data: Vec<f64> = (0..n_channels * n_points).map(|_| noise.sample(&mut rng)).collect();
    // a slow drift plus a few blinks
    for (i, v) in data.iter_mut().enumerate() {
        *v += 30.0 * ((i % n_points) as f64 / 5000.0).sin();
    }
    for blink in [7_000, 21_500, 40_200] {
        for k in 0..150 {
            data[blink + k] += 180.0;
        }
    }
    let markers = (0..48)
        .map(|i| Marker {
            onset_sample: 500 + i * 1200,
            label: u8::from(i % 6 == 0),
        })
        .collect();
    let rec = ContinuousRecording {
        n_channels,
        n_points,
        sampling_rate_hz: 1000.0,
        channel_names: vec!["Fz".into(), "Cz".into(), "Pz".into()],
        data,
        markers,
    };
    let cfg = PreprocessConfig::default();
    let extraction = extract_epochs(&rec, &cfg)?;
    println!("{} epochs cut, {} markers too close to the edge", extraction.epochs.n_epochs(), extraction.skipped_markers.len());
    let (clean, report) = preprocess_epochs(&extraction.epochs, &cfg)?;
    println!(
        "rejected {}/{} ({:.1} %), kept {} epochs; rejected indices {:?}",
        report.n_rejected,
        report.n_input,
        100.0 * report.rejection_rate,
        clean.n_epochs(),
        report.rejected_indices
    );
    Ok(())
}
