use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column names of the numeric features, in canonical order.
pub const FEATURE_NAMES: [&str; 12] = [
    "comb_left_sum",
    "comb_left_ratio",
    "comb_right_sum",
    "comb_right_ratio",
    "comb_center_sum",
    "comb_center_ratio",
    "fat_ratio",
    "fat_ratio_min",
    "fat_ratio_max",
    "ptb_prob",
    "calcified_volume",
    "necrotic_volume",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub case_id: String,
    pub comb_left_sum: f64,
    pub comb_left_ratio: f64,
    pub comb_right_sum: f64,
    pub comb_right_ratio: f64,
    pub comb_center_sum: f64,
    pub comb_center_ratio: f64,
    pub fat_ratio: f64,
    pub fat_ratio_min: f64,
    pub fat_ratio_max: f64,
    pub ptb_prob: f64,
    /// mm³
    pub calcified_volume: f64,
    /// mm³
    pub necrotic_volume: f64,
}

impl FeatureVector {
    pub fn values(&self) -> [f64; 12] {
        [
            self.comb_left_sum,
            self.comb_left_ratio,
            self.comb_right_sum,
            self.comb_right_ratio,
            self.comb_center_sum,
            self.comb_center_ratio,
            self.fat_ratio,
            self.fat_ratio_min,
            self.fat_ratio_max,
            self.ptb_prob,
            self.calcified_volume,
            self.necrotic_volume,
        ]
    }

    pub fn from_values(case_id: impl Into<String>, v: &[f64]) -> Result<Self> {
        if v.len() != FEATURE_NAMES.len() {
            return Err(Error::Arity {
                expected: FEATURE_NAMES.len(),
                got: v.len(),
            });
        }
        let fv = Self {
            case_id: case_id.into(),
            comb_left_sum: v[0],
            comb_left_ratio: v[1],
            comb_right_sum: v[2],
            comb_right_ratio: v[3],
            comb_center_sum: v[4],
            comb_center_ratio: v[5],
            fat_ratio: v[6],
            fat_ratio_min: v[7],
            fat_ratio_max: v[8],
            ptb_prob: v[9],
            calcified_volume: v[10],
            necrotic_volume: v[11],
        };
        fv.validate()?;
        Ok(fv)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in FEATURE_NAMES.iter().zip(self.values()) {
            if !v.is_finite() {
                return Err(Error::NonFinite((*name).into()));
            }
        }
        if !(0.0..=1.0).contains(&self.ptb_prob) {
            return Err(Error::invalid(format!("ptb_prob {} outside [0, 1]", self.ptb_prob)));
        }
        if self.calcified_volume < 0.0 || self.necrotic_volume < 0.0 {
            return Err(Error::invalid("node volumes must be non-negative"));
        }
        Ok(())
    }
}

/// Logistic function, evaluated without overflow for large `|z|`.
pub fn ptb_probability(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::NonFinite("ptb logit".into()));
    }
    Ok(if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    })
}

/// Sum and ratio of the comb-sign map over one region.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegionScore {
    pub sum: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CombScores {
    pub left: RegionScore,
    pub right: RegionScore,
    pub center: RegionScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FatSummary {
    pub ratio: f64,
    pub min: f64,
    pub max: f64,
}

pub fn assemble_features(
    case_id: &str,
    comb: CombScores,
    fat: FatSummary,
    ptb_prob: f64,
    calcified_volume: f64,
    necrotic_volume: f64,
) -> Result<FeatureVector> {
    let fv = FeatureVector {
        case_id: case_id.to_string(),
        comb_left_sum: comb.left.sum,
        comb_left_ratio: comb.left.ratio,
        comb_right_sum: comb.right.sum,
        comb_right_ratio: comb.right.ratio,
        comb_center_sum: comb.center.sum,
        comb_center_ratio: comb.center.ratio,
        fat_ratio: fat.ratio,
        fat_ratio_min: fat.min,
        fat_ratio_max: fat.max,
        ptb_prob,
        calcified_volume,
        necrotic_volume,
    };
    fv.validate()?;
    Ok(fv)
}
