//! Trains the CNN with early stopping and writes its training log.
//!
//! Usage: `cargo run --release --example cnn_training -- [log.csv]`

use p300bench::cnn::{train_cnn, CnnConfig};
use p300bench::ingest::{synthesize, SynthConfig};
use p300bench::metrics::compute_metrics;

fn main() -> p300bench::Result<()> {
    let set = synthesize(&SynthConfig {
        n_epochs: 600,
        noise_std_uv: 6.0,
        ..SynthConfig::default()
    })?;
    let idx = |r: std::ops::Range<usize>| r.collect::<Vec<_>>();
    let train = set.subset(&idx(0..400));
    let val = set.subset(&idx(400..500));
    let test = set.subset(&idx(500..600));

    let model = train_cnn(&train, &val, &CnnConfig { seed: 3, ..CnnConfig::default() })?;
    for e in &model.training_log {
        println!("epoch {:>2}  train {:.4}  val {:.4}", e.epoch, e.train_loss, e.val_loss.unwrap_or(f64::NAN));
    }
    println!("best epoch {:?}", model.best_epoch);
    let m = compute_metrics(&model.score(&test)?, test.labels(), 0.5);
    println!("test accuracy {:.3}", m.accuracy);
    if let Some(path) = std::env::args().nth(1) {
        model.write_training_log(std::path::Path::new(&path))?;
    }
    Ok(())
}
