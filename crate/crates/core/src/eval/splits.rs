use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Holdout and Monte-Carlo cross-validation proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitPlan {
    pub holdout_fraction: f64,
    pub cv_iterations: usize,
    pub cv_val_fraction: f64,
    pub master_seed: u64,
    /// Split whole subjects instead of single epochs.
    pub subject_wise: bool,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self {
            holdout_fraction: 0.25,
            cv_iterations: 30,
            cv_val_fraction: 0.25,
            master_seed: 0,
            subject_wise: false,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |f: f64| f > 0.0 && f < 1.0;
        if !in_unit(self.holdout_fraction) || !in_unit(self.cv_val_fraction) {
            return Err(Error::InvalidConfig("split: fractions must lie in (0, 1)".into()));
        }
        if self.cv_iterations == 0 {
            return Err(Error::InvalidConfig("split: cv_iterations must be at least 1".into()));
        }
        Ok(())
    }

    pub fn root_rng(&self) -> SeededRng {
        SeededRng::new(self.master_seed)
    }

    /// Seed for everything trained in iteration `i`.
    pub fn training_seed(&self, i: usize) -> u64 {
        self.root_rng().child(2).child(i as u64).seed()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// One holdout set and per-iteration train/validation partitions of the
/// remaining indices. All index lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub holdout: Vec<usize>,
    pub folds: Vec<Fold>,
}

impl Splits {
    /// True when no holdout index appears in any train or validation list.
    pub fn is_leak_free(&self) -> bool {
        let holdout: HashSet<usize> = self.holdout.iter().copied().collect();
        self.folds
            .iter()
            .all(|f| f.train.iter().chain(&f.val).all(|i| !holdout.contains(i)))
    }
}

fn floor_fraction(n: usize, f: f64) -> usize {
    (n as f64 * f).floor() as usize
}

/// Epoch-wise splits: `floor(f_h * n)` holdout indices drawn once, then
/// `floor(f_v * m)` validation indices per iteration out of the `m`
/// remaining ones.
pub fn make_splits(n: usize, plan: &SplitPlan) -> Result<Splits> {
    plan.validate()?;
    if n < 8 {
        return Err(Error::TooFewEpochs(format!("splitting needs at least 8 epochs, got {n}")));
    }
    let root = plan.root_rng();
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(&mut root.child(0));
    let n_hold = floor_fraction(n, plan.holdout_fraction).max(1);
    let mut holdout = all[..n_hold].to_vec();
    let mut rest = all[n_hold..].to_vec();
    holdout.sort_unstable();
    rest.sort_unstable();

    let cv = root.child(1);
    let folds = (0..plan.cv_iterations)
        .map(|i| {
            let mut perm = rest.clone();
            perm.shuffle(&mut cv.child(i as u64));
            let n_val = floor_fraction(perm.len(), plan.cv_val_fraction).max(1);
            let mut val = perm[..n_val].to_vec();
            let mut train = perm[n_val..].to_vec();
            val.sort_unstable();
            train.sort_unstable();
            Fold { train, val }
        })
        .collect();
    Ok(Splits { holdout, folds })
}

/// Subject-wise splits: whole subjects go to holdout, train or validation.
/// Every subject id must be known (non-negative).
pub fn make_subject_splits(subject_ids: &[i32], plan: &SplitPlan) -> Result<Splits> {
    plan.validate()?;
    if subject_ids.iter().any(|&s| s < 0) {
        return Err(Error::InvalidConfig("subject-wise splitting needs known subject ids".into()));
    }
    let subjects: Vec<i32> = subject_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if subjects.len() < 4 {
        return Err(Error::TooFewEpochs(format!(
            "subject-wise splitting needs at least 4 subjects, got {}",
            subjects.len()
        )));
    }
    let members = |chosen: &[i32]| -> Vec<usize> {
        let set: HashSet<i32> = chosen.iter().copied().collect();
        (0..subject_ids.len()).filter(|&i| set.contains(&subject_ids[i])).collect()
    };
    let root = plan.root_rng();
    let mut perm = subjects.clone();
    perm.shuffle(&mut root.child(0));
    let n_hold = floor_fraction(perm.len(), plan.holdout_fraction).max(1);
    let holdout = members(&perm[..n_hold]);
    let rest = perm[n_hold..].to_vec();
    let cv = root.child(1);
    let folds = (0..plan.cv_iterations)
        .map(|i| {
            let mut p = rest.clone();
            p.shuffle(&mut cv.child(i as u64));
            let n_val = floor_fraction(p.len(), plan.cv_val_fraction).max(1);
            Fold {
                train: members(&p[n_val..]),
                val: members(&p[..n_val]),
            }
        })
        .collect();
    Ok(Splits { holdout, folds })
}
