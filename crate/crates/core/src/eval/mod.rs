//! The evaluation protocol: one holdout split, repeated Monte-Carlo
//! train/validation resplits of the rest, per-iteration refits of every
//! model, and a trial-averaging study on the holdout set.
//!
//! Randomness is derived from the plan's master seed: stream 0 draws the
//! holdout, stream 1 the per-iteration resplits and stream 2 the per-iteration
//! training seeds. Iterations can therefore run in any order or in parallel
//! and still produce the same report.

mod averaging;
mod models;
mod report;
mod splits;
mod timing;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::EpochSet;
use crate::metrics::{compute_metrics, MetricSet};

pub use averaging::{average_epochs, averaging_eval, averaging_groups};
pub use models::{ModelSpec, TrainedModel};
pub use report::{AveragingRow, EvalReport, MetricSummary, ModelReport, ModelTimings, Stat};
pub use splits::{make_splits, make_subject_splits, Fold, SplitPlan, Splits};
pub use timing::{bench_timing, linear_fit, ModelTiming, ScalingFit, TimingReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AveragingConfig {
    /// Largest group size; 0 disables the study.
    pub k_max: usize,
    pub within_subject: bool,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        Self {
            k_max: 6,
            within_subject: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkOptions {
    pub averaging: AveragingConfig,
    /// Run iterations on the rayon pool.
    pub parallel: bool,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            averaging: AveragingConfig::default(),
            parallel: true,
        }
    }
}

struct ModelIteration {
    validation: MetricSet,
    holdout: MetricSet,
    averaging: Vec<Option<MetricSet>>,
    train_seconds: f64,
}

pub fn splits_for(set: &EpochSet, plan: &SplitPlan) -> Result<Splits> {
    if plan.subject_wise {
        make_subject_splits(set.subject_ids(), plan)
    } else {
        make_splits(set.n_epochs(), plan)
    }
}

fn run_iteration(
    set: &EpochSet,
    holdout: &EpochSet,
    fold: &Fold,
    seed: u64,
    models: &[ModelSpec],
    opts: &BenchmarkOptions,
) -> Result<Vec<ModelIteration>> {
    let train = set.subset(&fold.train);
    let val = set.subset(&fold.val);
    let mut out = Vec::with_capacity(models.len());
    for spec in models {
        let start = Instant::now();
        let model = spec.fit(&train, &val, seed)?;
        let train_seconds = start.elapsed().as_secs_f64();
        let t = model.threshold();
        let validation = compute_metrics(&model.score(&val)?, val.labels(), t);
        let holdout_metrics = compute_metrics(&model.score(holdout)?, holdout.labels(), t);
        let averaging = if opts.averaging.k_max > 0 {
            averaging_eval(
                std::slice::from_ref(&model),
                holdout,
                opts.averaging.k_max,
                opts.averaging.within_subject,
            )?
            .remove(0)
        } else {
            Vec::new()
        };
        out.push(ModelIteration {
            validation,
            holdout: holdout_metrics,
            averaging,
            train_seconds,
        });
    }
    Ok(out)
}

/// Runs the full protocol for every model in `models`.
///
/// A failing iteration aborts the whole run.
pub fn run_benchmark(
    set: &EpochSet,
    models: &[ModelSpec],
    plan: &SplitPlan,
    opts: &BenchmarkOptions,
) -> Result<EvalReport> {
    let splits = splits_for(set, plan)?;
    assert!(splits.is_leak_free(), "holdout indices leaked into a training or validation fold");
    let holdout = set.subset(&splits.holdout);
    let run = |i: usize| run_iteration(set, &holdout, &splits.folds[i], plan.training_seed(i), models, opts);
    let per_iteration: Vec<Vec<ModelIteration>> = if opts.parallel {
        (0..splits.folds.len()).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..splits.folds.len()).map(run).collect::<Result<_>>()?
    };

    let mut reports = Vec::with_capacity(models.len());
    let mut timings = Vec::with_capacity(models.len());
    for (m, spec) in models.iter().enumerate() {
        let it = || per_iteration.iter().map(|r| &r[m]);
        let validation: Vec<MetricSet> = it().map(|r| r.validation).collect();
        let holdout_sets: Vec<MetricSet> = it().map(|r| r.holdout).collect();
        let averaging = (0..opts.averaging.k_max)
            .map(|k| {
                let per: Vec<Option<MetricSet>> = it().map(|r| r.averaging[k]).collect();
                let defined: Vec<MetricSet> = per.iter().flatten().copied().collect();
                AveragingRow {
                    k: k + 1,
                    summary: MetricSummary::of(&defined),
                    per_iteration: per,
                }
            })
            .collect();
        reports.push(ModelReport {
            name: spec.name(),
            spec: spec.clone(),
            validation_summary: MetricSummary::of(&validation).expect("at least one iteration"),
            holdout_summary: MetricSummary::of(&holdout_sets).expect("at least one iteration"),
            validation,
            holdout: holdout_sets,
            averaging,
        });
        timings.push(ModelTimings {
            name: spec.name(),
            train_seconds: it().map(|r| r.train_seconds).collect(),
        });
    }
    Ok(EvalReport {
        plan: *plan,
        n_epochs: set.n_epochs(),
        n_holdout: holdout.n_epochs(),
        k_max: opts.averaging.k_max,
        models: reports,
        timings,
    })
}

/// Fits every model on the training part of the first fold, validating on
/// its validation part; returns the models with the holdout set.
pub fn fit_on_first_fold(
    set: &EpochSet,
    models: &[ModelSpec],
    plan: &SplitPlan,
) -> Result<(Vec<TrainedModel>, EpochSet)> {
    let splits = splits_for(set, plan)?;
    assert!(splits.is_leak_free(), "holdout indices leaked into a training or validation fold");
    let fold = &splits.folds[0];
    let train = set.subset(&fold.train);
    let val = set.subset(&fold.val);
    let seed = plan.training_seed(0);
    let trained = models
        .iter()
        .map(|spec| spec.fit(&train, &val, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok((trained, set.subset(&splits.holdout)))
}
