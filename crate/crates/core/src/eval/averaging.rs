use crate::error::Result;
use crate::ingest::{EpochSet, NON_TARGET, TARGET};
use crate::metrics::{compute_metrics, MetricSet};

use super::models::TrainedModel;

/// Consecutive same-class groups of `k` epochs (in file order), the final
/// short group of each run dropped. With `within_subject`, a group never
/// spans two subjects.
pub fn averaging_groups(set: &EpochSet, k: usize, within_subject: bool) -> Vec<Vec<usize>> {
    assert!(k >= 1, "group size must be at least 1");
    let mut groups = Vec::new();
    for class in [NON_TARGET, TARGET] {
        let members: Vec<usize> = (0..set.n_epochs()).filter(|&i| set.labels()[i] == class).collect();
        let runs: Vec<Vec<usize>> = if within_subject {
            let mut by_subject: Vec<(i32, Vec<usize>)> = Vec::new();
            for &i in &members {
                let s = set.subject_ids()[i];
                match by_subject.iter_mut().find(|(id, _)| *id == s) {
                    Some((_, v)) => v.push(i),
                    None => by_subject.push((s, vec![i])),
                }
            }
            by_subject.into_iter().map(|(_, v)| v).collect()
        } else {
            vec![members]
        };
        for run in runs {
            groups.extend(run.chunks_exact(k).map(<[usize]>::to_vec));
        }
    }
    groups.sort_by_key(|g| g[0]);
    groups
}

/// Sample-wise mean of each group; labels and subjects from the first member.
pub fn average_epochs(set: &EpochSet, groups: &[Vec<usize>]) -> Result<EpochSet> {
    let mut out = set.same_shape_empty();
    let mut acc = vec![0.0; set.epoch_len()];
    for g in groups {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for &i in g {
            acc.iter_mut().zip(set.epoch(i)).for_each(|(a, v)| *a += v);
        }
        let k = g.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        out.push(&acc, set.labels()[g[0]], set.subject_ids()[g[0]])?;
    }
    Ok(out)
}

/// Metrics of every model on `k`-averaged holdout epochs for `k = 1..=k_max`.
/// Entry `[model][k - 1]` is `None` when averaging leaves a class empty.
pub fn averaging_eval(
    models: &[TrainedModel],
    holdout: &EpochSet,
    k_max: usize,
    within_subject: bool,
) -> Result<Vec<Vec<Option<MetricSet>>>> {
    let mut out = vec![Vec::with_capacity(k_max); models.len()];
    for k in 1..=k_max {
        let groups = averaging_groups(holdout, k, within_subject);
        let averaged = average_epochs(holdout, &groups)?;
        let targets = averaged.count_targets();
        let defined = targets > 0 && targets < averaged.n_epochs();
        for (m, model) in models.iter().enumerate() {
            let metrics = if defined {
                let scores = model.score(&averaged)?;
                Some(compute_metrics(&scores, averaged.labels(), model.threshold()))
            } else {
                None
            };
            out[m].push(metrics);
        }
    }
    Ok(out)
}
