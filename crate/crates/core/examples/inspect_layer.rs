//! Class-averaged activations after pooling, the data behind a
//! hidden-output plot.
//!
//! Usage: `cargo run --release --example inspect_layer -- [layer] [out_dir]`

use p300bench::cnn::{layer_outputs, train_cnn, write_layer_csv, CnnConfig, POOL_LAYER};
use p300bench::ingest::{synthesize, SynthConfig, NON_TARGET, TARGET};

fn main() -> p300bench::Result<()> {
    let mut args = std::env::args().skip(1);
    let layer: usize = args.next().map_or(POOL_LAYER, |a| a.parse().expect("layer index"));
    let out = args.next().map(std::path::PathBuf::from);

    let set = synthesize(&SynthConfig {
        n_epochs: 400,
        noise_std_uv: 6.0,
        ..SynthConfig::default()
    })?;
    let train = set.subset(&(0..300).collect::<Vec<_>>());
    let val = set.subset(&(300..400).collect::<Vec<_>>());
    let model = train_cnn(&train, &val, &CnnConfig { max_epochs: 10, ..CnnConfig::default() })?;

    for (class, name) in [(TARGET, "target"), (NON_TARGET, "nontarget")] {
        let idx: Vec<usize> = (0..val.n_epochs()).filter(|&i| val.labels()[i] == class).collect();
        let map = layer_outputs(&model, &val.subset(&idx), layer)?;
        let peak = map.data().iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        println!("layer {layer} {name}: {} positions x {} maps, peak {peak:.3}", map.rows(), map.cols());
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir).expect("output directory");
            write_layer_csv(&map, &dir.join(format!("layer{layer}_{name}.csv")))?;
        }
    }
    Ok(())
}
