//! Training time and single-epoch prediction latency of each model.

use p300bench::eval::{bench_timing, ModelSpec, SplitPlan};
use p300bench::ingest::{synthesize, SynthConfig};

fn main() -> p300bench::Result<()> {
    let set = synthesize(&SynthConfig {
        n_epochs: 800,
        ..SynthConfig::default()
    })?;
    let models = [ModelSpec::lda(), ModelSpec::svm(), ModelSpec::cnn()];
    let report = bench_timing(&models, &set, &SplitPlan::default(), 1000)?;
    for m in &report.models {
        println!(
            "{:<16} train {:>9.3} s  predict median {:>8.4} ms over {} calls",
            m.name,
            m.train_seconds,
            1e3 * m.predict_median_seconds,
            m.predict_calls
        );
    }
    if let Some(s) = &report.lda_scaling {
        println!("lda batch scoring: {:.3e} s per epoch, r2 {:.4}", s.slope, s.r2);
    }
    Ok(())
}
