use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::forest::ForestModel;
use super::gbm::GbmModel;
use super::gnb::GnbModel;
use super::linear::{LinearKind, LinearModel};
use crate::error::{Error, Result};
use crate::xgb::XgbEnsemble;

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Model {
    Logistic(LinearModel),
    Svm(LinearModel),
    Gnb(GnbModel),
    Forest(ForestModel),
    Gbm(GbmModel),
    Xgb(XgbEnsemble),
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Logistic(_) => "logistic",
            Model::Svm(_) => "svm",
            Model::Gnb(_) => "gnb",
            Model::Forest(_) => "forest",
            Model::Gbm(_) => "gbm",
            Model::Xgb(_) => "xgb",
        }
    }

    /// Probability of the positive class, except for SVMs which return the signed margin.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        match self {
            Model::Logistic(m) | Model::Svm(m) => m.score(x),
            Model::Gnb(m) => m.score(x),
            Model::Forest(m) => m.score(x),
            Model::Gbm(m) => m.score(x),
            Model::Xgb(m) => m.probability(x),
        }
    }

    /// Score at which the positive class is predicted.
    pub fn decision_threshold(&self) -> f64 {
        match self {
            Model::Svm(_) => 0.0,
            _ => 0.5,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<bool> {
        let s = self.score(x)?;
        Ok(match self {
            // Even vote splits go to the negative class.
            Model::Forest(_) => s > 0.5,
            _ => s >= self.decision_threshold(),
        })
    }
}

pub fn predict_score(model: &Model, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    x.iter().map(|r| model.score(r)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMapping {
    pub positive: String,
    pub negative: String,
}

impl Default for ClassMapping {
    fn default() -> Self {
        Self {
            positive: "CD".into(),
            negative: "ITB".into(),
        }
    }
}

/// Versioned, self-describing model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub class_mapping: ClassMapping,
    pub model: Model,
}

impl ModelSnapshot {
    pub fn new(feature_names: Vec<String>, model: Model) -> Self {
        Self {
            format_version: SNAPSHOT_FORMAT_VERSION,
            feature_names,
            class_mapping: ClassMapping::default(),
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Snapshot(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: Self = serde_json::from_str(s).map_err(|e| Error::Snapshot(e.to_string()))?;
        if snap.format_version != SNAPSHOT_FORMAT_VERSION {
            return Err(Error::Snapshot(format!("unsupported format version {}", snap.format_version)));
        }
        Ok(snap)
    }

    /// Rejects data whose columns differ from the training columns.
    pub fn check_features(&self, names: &[String]) -> Result<()> {
        if names != self.feature_names.as_slice() {
            return Err(Error::Snapshot(format!(
                "feature names {:?} do not match the model's {:?}",
                names, self.feature_names
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Svm,
    Gnb,
    Forest,
    Gbm,
    Xgb,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "logistic" | "lr" => ModelKind::Logistic,
            "svm" => ModelKind::Svm,
            "gnb" | "naive_bayes" => ModelKind::Gnb,
            "forest" | "rf" => ModelKind::Forest,
            "gbm" => ModelKind::Gbm,
            "xgb" | "xgboost" => ModelKind::Xgb,
            other => return Err(Error::invalid(format!("unknown model kind `{other}`"))),
        })
    }
}

/// Hyperparameters for every model kind; each trainer reads its own section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub logistic: super::linear::LogisticParams,
    pub svm: super::linear::SvmParams,
    pub forest: super::forest::ForestParams,
    pub gbm: super::gbm::GbmParams,
    pub xgb: crate::xgb::XgbParams,
}

pub fn train(kind: ModelKind, data: &Dataset, cfg: &TrainConfig) -> Result<Model> {
    Ok(match kind {
        ModelKind::Logistic => Model::Logistic(super::linear::train_logistic(data, &cfg.logistic)?),
        ModelKind::Svm => Model::Svm(super::linear::train_svm(data, &cfg.svm)?),
        ModelKind::Gnb => Model::Gnb(super::gnb::train_gnb(data)?),
        ModelKind::Forest => Model::Forest(super::forest::train_forest(data, &cfg.forest)?),
        ModelKind::Gbm => Model::Gbm(super::gbm::train_gbm(data, &cfg.gbm)?),
        ModelKind::Xgb => Model::Xgb(crate::xgb::train_xgb(data, &cfg.xgb)?),
    })
}

impl LinearModel {
    pub fn into_model(self) -> Model {
        match self.kind {
            LinearKind::Logistic => Model::Logistic(self),
            LinearKind::Svm => Model::Svm(self),
        }
    }
}
