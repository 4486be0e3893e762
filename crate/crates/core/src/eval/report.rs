use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricSet;

use super::models::ModelSpec;
use super::splits::SplitPlan;

/// Mean and sample standard deviation (`n - 1` denominator; 0 when `n < 2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Stat { mean, sd, n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: Stat,
    pub precision: Stat,
    pub recall: Stat,
    /// Over the iterations where AUC was defined.
    pub auc: Option<Stat>,
}

impl MetricSummary {
    pub fn of(sets: &[MetricSet]) -> Option<MetricSummary> {
        let col = |f: fn(&MetricSet) -> f64| sets.iter().map(f).collect::<Vec<_>>();
        let aucs: Vec<f64> = sets.iter().filter_map(|m| m.auc).collect();
        Some(MetricSummary {
            accuracy: Stat::of(&col(|m| m.accuracy))?,
            precision: Stat::of(&col(|m| m.precision))?,
            recall: Stat::of(&col(|m| m.recall))?,
            auc: Stat::of(&aucs),
        })
    }

    fn stats(&self) -> [(&'static str, Option<Stat>); 4] {
        [
            ("accuracy", Some(self.accuracy)),
            ("precision", Some(self.precision)),
            ("recall", Some(self.recall)),
            ("auc", self.auc),
        ]
    }
}

/// Per-`k` results of the trial-averaging study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingRow {
    pub k: usize,
    pub per_iteration: Vec<Option<MetricSet>>,
    /// Over the iterations where metrics were defined.
    pub summary: Option<MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    pub spec: ModelSpec,
    pub validation: Vec<MetricSet>,
    pub holdout: Vec<MetricSet>,
    pub validation_summary: MetricSummary,
    pub holdout_summary: MetricSummary,
    pub averaging: Vec<AveragingRow>,
}

/// Wall-clock measurements, kept out of `report.json` so that reports of
/// identical runs are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTimings {
    pub name: String,
    pub train_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub plan: SplitPlan,
    pub n_epochs: usize,
    pub n_holdout: usize,
    pub k_max: usize,
    pub models: Vec<ModelReport>,
    #[serde(skip)]
    pub timings: Vec<ModelTimings>,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    }
}

fn fmt_opt(s: Option<Stat>) -> [String; 2] {
    match s {
        Some(s) => [s.mean.to_string(), s.sd.to_string()],
        None => [String::new(), String::new()],
    }
}

impl EvalReport {
    pub fn model(&self, name: &str) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `report.json`, `iterations.csv`, `aggregate.csv`,
    /// `averaging.csv` and `timings.json` into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("report.json");
        std::fs::write(&p, self.to_json()?).map_err(|e| Error::io(&p, e))?;
        let p = dir.join("timings.json");
        std::fs::write(&p, serde_json::to_string_pretty(&self.timings)?).map_err(|e| Error::io(&p, e))?;
        self.write_iterations_csv(&dir.join("iterations.csv"))?;
        self.write_aggregate_csv(&dir.join("aggregate.csv"))?;
        self.write_averaging_csv(&dir.join("averaging.csv"))
    }

    /// One row per iteration, model, split and metric.
    pub fn write_iterations_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
        w.write_record(["iteration", "model", "split", "metric", "value"]).map_err(csv_err(path))?;
        for m in &self.models {
            for (split, sets) in [("validation", &m.validation), ("holdout", &m.holdout)] {
                for (i, s) in sets.iter().enumerate() {
                    let auc = s.auc.map(|a| a.to_string()).unwrap_or_default();
                    for (metric, value) in [
                        ("accuracy", s.accuracy.to_string()),
                        ("precision", s.precision.to_string()),
                        ("recall", s.recall.to_string()),
                        ("auc", auc),
                    ] {
                        w.write_record([&i.to_string(), &m.name, split, metric, &value])
                            .map_err(csv_err(path))?;
                    }
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// One row per model and split with mean and sd of each metric.
    pub fn write_aggregate_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
        let mut header = vec!["model".to_string(), "split".to_string()];
        for metric in ["accuracy", "precision", "recall", "auc"] {
            header.push(format!("{metric}_mean"));
            header.push(format!("{metric}_sd"));
        }
        w.write_record(&header).map_err(csv_err(path))?;
        for m in &self.models {
            for (split, s) in [("validation", &m.validation_summary), ("holdout", &m.holdout_summary)] {
                let mut rec = vec![m.name.clone(), split.to_string()];
                for (_, stat) in s.stats() {
                    rec.extend(fmt_opt(stat));
                }
                w.write_record(&rec).map_err(csv_err(path))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// One row per model and group size `k`.
    pub fn write_averaging_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
        let mut header = vec!["model".to_string(), "k".to_string(), "n_defined".to_string()];
        for metric in ["accuracy", "precision", "recall", "auc"] {
            header.push(format!("{metric}_mean"));
            header.push(format!("{metric}_sd"));
        }
        w.write_record(&header).map_err(csv_err(path))?;
        for m in &self.models {
            for row in &m.averaging {
                let defined = row.per_iteration.iter().filter(|s| s.is_some()).count();
                let mut rec = vec![m.name.clone(), row.k.to_string(), defined.to_string()];
                match &row.summary {
                    Some(s) => {
                        for (_, stat) in s.stats() {
                            rec.extend(fmt_opt(stat));
                        }
                    }
                    None => rec.extend(std::iter::repeat_n(String::new(), 8)),
                }
                w.write_record(&rec).map_err(csv_err(path))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
