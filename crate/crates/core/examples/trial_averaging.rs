//! Accuracy of LDA as more same-class epochs are averaged before scoring.

use p300bench::eval::{averaging_eval, fit_on_first_fold, ModelSpec, SplitPlan};
use p300bench::ingest::{synthesize, SynthConfig};

fn main() -> p300bench::Result<()> {
    let set = synthesize(&SynthConfig {
        noise_std_uv: 60.0,
        ..SynthConfig::default()
    })?;
    let plan = SplitPlan {
        master_seed: 9,
        ..SplitPlan::default()
    };
    let (models, holdout) = fit_on_first_fold(&set, &[ModelSpec::lda(), ModelSpec::svm()], &plan)?;
    let table = averaging_eval(&models, &holdout, 8, false)?;
    for (model, row) in models.iter().zip(&table) {
        let accs: Vec<String> = row
            .iter()
            .map(|m| m.map_or("-".into(), |m| format!("{:.3}", m.accuracy)))
            .collect();
        println!("{:<4} k=1..8: {}", model.kind(), accs.join(" "));
    }
    Ok(())
}
