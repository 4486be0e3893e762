//! Monte-Carlo cross-validation of LDA, SVM and the CNN on synthetic data.
//!
//! Usage: `cargo run --release --example mccv_benchmark -- [iterations] [out_dir]`

use p300bench::eval::{run_benchmark, BenchmarkOptions, ModelSpec, SplitPlan};
use p300bench::ingest::{synthesize, SynthConfig};

fn main() -> p300bench::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations: usize = args.next().map_or(3, |a| a.parse().expect("iteration count"));
    let out = args.next();

    let set = synthesize(&SynthConfig {
        noise_std_uv: 6.0,
        ..SynthConfig::default()
    })?;
    let plan = SplitPlan {
        cv_iterations: iterations,
        master_seed: 2024,
        ..SplitPlan::default()
    };
    let models = [ModelSpec::lda(), ModelSpec::svm(), ModelSpec::cnn()];
    let start = std::time::Instant::now();
    let report = run_benchmark(&set, &models, &plan, &BenchmarkOptions::default())?;
    println!("{} epochs, {} held out, {iterations} iterations in {:.1?}", report.n_epochs, report.n_holdout, start.elapsed());
    println!("{:<16} {:>10} {:>10} {:>10} {:>10}", "model", "val acc", "sd", "hold acc", "sd");
    for m in &report.models {
        println!(
            "{:<16} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            m.name,
            m.validation_summary.accuracy.mean,
            m.validation_summary.accuracy.sd,
            m.holdout_summary.accuracy.mean,
            m.holdout_summary.accuracy.sd
        );
    }
    println!("\naveraged holdout accuracy by group size k");
    for m in &report.models {
        let accs: Vec<String> = m
            .averaging
            .iter()
            .map(|r| r.summary.map_or("-".into(), |s| format!("{:.3}", s.accuracy.mean)))
            .collect();
        println!("{:<16} {}", m.name, accs.join("  "));
    }
    if let Some(dir) = out {
        report.write_all(std::path::Path::new(&dir))?;
        println!("\nreport written to {dir}");
    }
    Ok(())
}
