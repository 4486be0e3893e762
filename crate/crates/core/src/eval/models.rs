use serde::{Deserialize, Serialize};

use crate::cnn::{train_cnn, CnnConfig, CnnModel};
use crate::error::Result;
use crate::features::{FeatureConfig, Standardizer};
use crate::ingest::EpochSet;
use crate::lda::{fit_lda, LdaConfig, LdaModel};
use crate::svm::{fit_svm, SvmConfig, SvmModel};

/// What to train: a linear pipeline on extracted features, or the CNN on
/// raw epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Lda {
        #[serde(default)]
        features: FeatureConfig,
        #[serde(default)]
        lda: LdaConfig,
    },
    Svm {
        #[serde(default)]
        features: FeatureConfig,
        #[serde(default)]
        svm: SvmConfig,
    },
    Cnn {
        #[serde(default)]
        cnn: CnnConfig,
    },
}

impl ModelSpec {
    pub fn lda() -> Self {
        ModelSpec::Lda {
            features: FeatureConfig::default(),
            lda: LdaConfig::default(),
        }
    }

    pub fn svm() -> Self {
        ModelSpec::Svm {
            features: FeatureConfig::default(),
            svm: SvmConfig::default(),
        }
    }

    pub fn cnn() -> Self {
        ModelSpec::Cnn {
            cnn: CnnConfig::default(),
        }
    }

    /// Report label, e.g. `lda/wm300-1000`.
    pub fn name(&self) -> String {
        match self {
            ModelSpec::Lda { features, .. } => format!("lda/{}", features.tag()),
            ModelSpec::Svm { features, .. } => format!("svm/{}", features.tag()),
            ModelSpec::Cnn { .. } => "cnn".into(),
        }
    }

    /// Decision threshold on the model's score.
    pub fn threshold(&self) -> f64 {
        match self {
            ModelSpec::Cnn { .. } => 0.5,
            _ => 0.0,
        }
    }

    /// Fits on `train` only; `val` is used solely for CNN early stopping.
    /// `seed` replaces the configured seed of stochastic models.
    pub fn fit(&self, train: &EpochSet, val: &EpochSet, seed: u64) -> Result<TrainedModel> {
        match self {
            ModelSpec::Lda { features, lda } => {
                let (standardizer, x) = fit_features(features, train)?;
                let model = fit_lda(&x.values, &x.labels, lda)?;
                Ok(TrainedModel::Lda {
                    features: *features,
                    standardizer,
                    model,
                })
            }
            ModelSpec::Svm { features, svm } => {
                let (standardizer, x) = fit_features(features, train)?;
                let cfg = SvmConfig { seed, ..*svm };
                let model = fit_svm(&x.values, &x.labels, &cfg)?;
                Ok(TrainedModel::Svm {
                    features: *features,
                    standardizer,
                    model,
                })
            }
            ModelSpec::Cnn { cnn } => {
                let cfg = CnnConfig { seed, ..cnn.clone() };
                Ok(TrainedModel::Cnn {
                    model: train_cnn(train, val, &cfg)?,
                })
            }
        }
    }
}

fn fit_features(
    cfg: &FeatureConfig,
    train: &EpochSet,
) -> Result<(Standardizer, crate::features::FeatureMatrix)> {
    let mut x = cfg.extract(train)?;
    let standardizer = Standardizer::fit(&x.values)?;
    x.values = standardizer.apply(&x.values)?;
    Ok((standardizer, x))
}

/// A fitted pipeline that scores epochs directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Lda {
        features: FeatureConfig,
        standardizer: Standardizer,
        model: LdaModel,
    },
    Svm {
        features: FeatureConfig,
        standardizer: Standardizer,
        model: SvmModel,
    },
    Cnn {
        model: CnnModel,
    },
}

impl TrainedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::Lda { .. } => "lda",
            TrainedModel::Svm { .. } => "svm",
            TrainedModel::Cnn { .. } => "cnn",
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            TrainedModel::Cnn { .. } => 0.5,
            _ => 0.0,
        }
    }

    /// Decision value (LDA, SVM) or target probability (CNN) per epoch.
    pub fn score(&self, set: &EpochSet) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Lda {
                features,
                standardizer,
                model,
            } => model.score(&standardizer.apply(&features.extract(set)?.values)?),
            TrainedModel::Svm {
                features,
                standardizer,
                model,
            } => model.score(&standardizer.apply(&features.extract(set)?.values)?),
            TrainedModel::Cnn { model } => model.score(set),
        }
    }

    pub fn predict(&self, set: &EpochSet) -> Result<Vec<u8>> {
        let t = self.threshold();
        Ok(self.score(set)?.into_iter().map(|s| u8::from(s > t)).collect())
    }
}
