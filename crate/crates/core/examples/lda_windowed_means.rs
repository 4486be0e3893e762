//! Shrinkage LDA on windowed-means features for three analysis windows.

use p300bench::features::{FeatureConfig, Standardizer};
use p300bench::ingest::{synthesize, SynthConfig};
use p300bench::lda::{fit_lda, LdaConfig};
use p300bench::metrics::compute_metrics;

fn main() -> p300bench::Result<()> {
    let set = synthesize(&SynthConfig::default())?;
    let n_train = set.n_epochs() * 3 / 4;
    let train = set.subset(&(0..n_train).collect::<Vec<_>>());
    let test = set.subset(&(n_train..set.n_epochs()).collect::<Vec<_>>());

    for (a, b) in [(300.0, 500.0), (300.0, 800.0), (300.0, 1000.0)] {
        let features = FeatureConfig::wm(a, b);
        let x = features.extract(&train)?;
        let std = Standardizer::fit(&x.values)?;
        let model = fit_lda(&std.apply(&x.values)?, &x.labels, &LdaConfig::default())?;
        let xt = features.extract(&test)?;
        let m = compute_metrics(&model.score(&std.apply(&xt.values)?)?, &xt.labels, 0.0);
        println!(
            "{:<12} shrinkage {:.3}  accuracy {:.3}  auc {:.3}",
            features.tag(),
            model.shrinkage_intensity,
            m.accuracy,
            m.auc.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
