//! Generates a synthetic epoch set and round-trips it through an EPB file.
//!
//! Usage: `cargo run --example synth_roundtrip -- [out.epb]`

use p300bench::ingest::{read_epb, synthesize, write_epb, SynthConfig};

fn main() -> p300bench::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| {
        std::env::temp_dir().join("synth.epb").to_string_lossy().into_owned()
    });
    let set = synthesize(&SynthConfig {
        n_epochs: 400,
        ..SynthConfig::default()
    })?;
    write_epb(&set, &path)?;
    let back = read_epb(&path)?;
    println!(
        "{} epochs ({} targets), {} channels x {} samples at {} Hz -> {path}",
        back.n_epochs(),
        back.count_targets(),
        back.n_channels(),
        back.n_samples(),
        back.sampling_rate_hz
    );
    assert_eq!(back.labels(), set.labels());
    Ok(())
}
