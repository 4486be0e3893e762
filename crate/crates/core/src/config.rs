//! One serializable record holding every tunable of a run.
//!
//! Files are TOML with one table per module. Unknown keys are rejected so a
//! typo never silently falls back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cnn::CnnConfig;
use crate::error::{Error, Result};
use crate::eval::{AveragingConfig, ModelSpec, SplitPlan};
use crate::features::FeatureConfig;
use crate::ingest::{EpochMeta, SynthConfig};
use crate::lda::LdaConfig;
use crate::preprocess::PreprocessConfig;
use crate::svm::SvmConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lda,
    Svm,
    Cnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Lda, ModelKind::Svm, ModelKind::Cnn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lda => "lda",
            ModelKind::Svm => "svm",
            ModelKind::Cnn => "cnn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; overrides `split.master_seed` and `synth.seed`.
    pub seed: u64,
    pub input: Option<PathBuf>,
    /// Label file for `import`.
    pub labels: Option<PathBuf>,
    pub output: PathBuf,
    pub models: Vec<ModelKind>,
    /// Layer exported by `inspect`.
    pub inspect_layer: usize,
    /// Worker cap for parallel evaluation; unset uses every core.
    pub threads: Option<usize>,
    pub import: EpochMeta,
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
    pub features: FeatureConfig,
    pub lda: LdaConfig,
    pub svm: SvmConfig,
    pub cnn: CnnConfig,
    pub split: SplitPlan,
    pub averaging: AveragingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            input: None,
            labels: None,
            output: PathBuf::from("out"),
            models: ModelKind::ALL.to_vec(),
            inspect_layer: crate::cnn::POOL_LAYER,
            threads: None,
            import: EpochMeta::default(),
            synth: SynthConfig::default(),
            preprocess: PreprocessConfig::default(),
            features: FeatureConfig::default(),
            lda: LdaConfig::default(),
            svm: SvmConfig::default(),
            cnn: CnnConfig::default(),
            split: SplitPlan::default(),
            averaging: AveragingConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable")
    }

    /// Propagates the master seed into the sub-configurations.
    pub fn resolved(mut self) -> Self {
        self.split.master_seed = self.seed;
        self.synth.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.preprocess.validate()?;
        self.svm.validate()?;
        self.cnn.validate()?;
        self.split.validate()?;
        if let Some(r) = self.lda.fixed_shrinkage {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidConfig("lda: fixed_shrinkage must lie in [0, 1]".into()));
            }
        }
        if self.features.wm.n_intervals == 0 || self.features.wm.window_end_ms <= self.features.wm.window_start_ms {
            return Err(Error::InvalidConfig("features: need n_intervals >= 1 and end > start".into()));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("models: select at least one model".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn model_specs(&self) -> Vec<ModelSpec> {
        let mut kinds = self.models.clone();
        kinds.sort();
        kinds.dedup();
        kinds
            .into_iter()
            .map(|k| match k {
                ModelKind::Lda => ModelSpec::Lda {
                    features: self.features,
                    lda: self.lda,
                },
                ModelKind::Svm => ModelSpec::Svm {
                    features: self.features,
                    svm: self.svm,
                },
                ModelKind::Cnn => ModelSpec::Cnn {
                    cnn: self.cnn.clone(),
                },
            })
            .collect()
    }
}

/// Every configuration key with its default, one `key = value` per line.
pub fn config_reference() -> String {
    fn walk(prefix: &str, v: &toml::Value, out: &mut Vec<String>) {
        match v {
            toml::Value::Table(t) => {
                for (k, v) in t {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, v, out);
                }
            }
            other => out.push(format!("  {prefix} = {other}")),
        }
    }
    let value = toml::Value::try_from(RunConfig::default()).expect("config is always representable");
    let mut lines = Vec::new();
    walk("", &value, &mut lines);
    lines.push("  input, labels, threads = unset".into());
    lines.join("\n")
}
