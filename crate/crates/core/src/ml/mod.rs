//! Evaluation metrics, threshold selection and the baseline classifiers.

pub mod dataset;
pub mod forest;
pub mod gbm;
pub mod gnb;
pub mod linear;
pub mod metrics;
pub mod model;

pub use dataset::{log_loss, Dataset};
pub use forest::{train_forest, ForestModel, ForestParams, MaxFeatures};
pub use gbm::{train_gbm, GbmModel, GbmParams};
pub use gnb::{train_gnb, GnbModel};
pub use linear::{
    logistic_objective, svm_objective, train_logistic, train_svm, LinearKind, LinearModel, LogisticParams, Standardizer,
    SvmParams,
};
pub use metrics::*;
pub use model::{predict_score, train, ClassMapping, Model, ModelKind, ModelSnapshot, TrainConfig, SNAPSHOT_FORMAT_VERSION};
