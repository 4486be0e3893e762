use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::EpochSet;

use super::models::{ModelSpec, TrainedModel};
use super::splits::SplitPlan;
use super::splits_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTiming {
    pub name: String,
    pub train_seconds: f64,
    /// Median wall time of one single-epoch prediction.
    pub predict_median_seconds: f64,
    pub predict_calls: usize,
}

/// Least-squares line through `(sizes, seconds)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub sizes: Vec<usize>,
    pub seconds: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub models: Vec<ModelTiming>,
    /// Batch prediction time of the first LDA model against batch size.
    pub lda_scaling: Option<ScalingFit>,
}

impl TimingReport {
    pub fn model(&self, kind: &str) -> Option<&ModelTiming> {
        self.models.iter().find(|m| m.name.starts_with(kind))
    }
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

const SCALING_SIZES: [usize; 4] = [250, 500, 1000, 2000];
const SCALING_REPS: usize = 7;

fn scaling(model: &TrainedModel, pool: &EpochSet) -> Result<ScalingFit> {
    let mut seconds = Vec::new();
    for &size in &SCALING_SIZES {
        let idx: Vec<usize> = (0..size).map(|i| i % pool.n_epochs()).collect();
        let batch = pool.subset(&idx);
        let mut reps = Vec::with_capacity(SCALING_REPS);
        for _ in 0..SCALING_REPS {
            let start = Instant::now();
            std::hint::black_box(model.score(&batch)?);
            reps.push(start.elapsed().as_secs_f64());
        }
        seconds.push(median(reps));
    }
    let xs: Vec<f64> = SCALING_SIZES.iter().map(|&s| s as f64).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &seconds);
    Ok(ScalingFit {
        sizes: SCALING_SIZES.to_vec(),
        seconds,
        slope,
        intercept,
        r2,
    })
}

/// Trains each model once on the first fold and times single-epoch
/// predictions on the holdout set (at least 1000 calls per model).
pub fn bench_timing(
    models: &[ModelSpec],
    set: &EpochSet,
    plan: &SplitPlan,
    predict_calls: usize,
) -> Result<TimingReport> {
    let splits = splits_for(set, plan)?;
    let fold = &splits.folds[0];
    let train = set.subset(&fold.train);
    let val = set.subset(&fold.val);
    let holdout = set.subset(&splits.holdout);
    if holdout.is_empty() {
        return Err(Error::TooFewEpochs("timing needs a non-empty holdout set".into()));
    }
    let singles: Vec<EpochSet> = (0..holdout.n_epochs()).map(|i| holdout.subset(&[i])).collect();
    let calls = predict_calls.max(1000);
    let seed = plan.training_seed(0);

    let mut out = Vec::new();
    let mut lda_scaling = None;
    for spec in models {
        let start = Instant::now();
        let model = spec.fit(&train, &val, seed)?;
        let train_seconds = start.elapsed().as_secs_f64();
        let mut times = Vec::with_capacity(calls);
        for c in 0..calls {
            let single = &singles[c % singles.len()];
            let start = Instant::now();
            std::hint::black_box(model.score(single)?);
            times.push(start.elapsed().as_secs_f64());
        }
        if lda_scaling.is_none() && matches!(model, TrainedModel::Lda { .. }) {
            lda_scaling = Some(scaling(&model, &holdout)?);
        }
        out.push(ModelTiming {
            name: spec.name(),
            train_seconds,
            predict_median_seconds: median(times),
            predict_calls: calls,
        });
    }
    Ok(TimingReport {
        models: out,
        lda_scaling,
    })
}
