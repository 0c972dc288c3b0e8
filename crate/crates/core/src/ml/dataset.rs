use serde::{Deserialize, Serialize};

use crate::biomarkers::{FeatureVector, FEATURE_NAMES};
use crate::error::{Error, Result};

/// Feature matrix with binary labels (`true` = CD, the positive class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<bool>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, x: Vec<Vec<f64>>, y: Vec<bool>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::invalid(format!("{} rows but {} labels", x.len(), y.len())));
        }
        let d = feature_names.len();
        for row in &x {
            if row.len() != d {
                return Err(Error::Arity { expected: d, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("feature matrix".into()));
            }
        }
        Ok(Self { feature_names, x, y })
    }

    pub fn from_features(rows: &[FeatureVector], labels: &[bool]) -> Result<Self> {
        Self::new(
            FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            rows.iter().map(|r| r.values().to_vec()).collect(),
            labels.to_vec(),
        )
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.y.iter().filter(|&&v| v).count();
        (self.y.len() - pos, pos)
    }

    pub(crate) fn require_both_classes(&self) -> Result<()> {
        let (neg, pos) = self.class_counts();
        if neg == 0 || pos == 0 {
            return Err(Error::SingleClass);
        }
        Ok(())
    }

    /// One column, by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.feature_names.iter().position(|n| n == name)?;
        Some(self.x.iter().map(|r| r[j]).collect())
    }
}

pub(crate) fn check_arity(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Arity { expected, got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature row".into()));
    }
    Ok(())
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean binary cross-entropy of margins.
pub fn log_loss(margins: &[f64], y: &[bool]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(y)
        .map(|(&m, &l)| if l { softplus(-m) } else { softplus(m) })
        .sum();
    total / margins.len() as f64
}
