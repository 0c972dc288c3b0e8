//! Exact interventional Shapley attributions on the margin scale.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ml::dataset::check_arity;
use crate::xgb::XgbEnsemble;

/// Largest feature count accepted by the exact subset enumeration.
pub const MAX_EXACT_FEATURES: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    /// Expected margin over the background.
    pub phi0: f64,
    pub phi: Vec<f64>,
    /// Model margin at the explained point.
    pub fx: f64,
}

impl ShapExplanation {
    /// `phi0 + Σ phi`.
    pub fn reconstructed(&self) -> f64 {
        self.phi0 + self.phi.iter().sum::<f64>()
    }
}

/// Value of every coalition, indexed by bitmask: the mean of `f` over the
/// background with features in the coalition taken from `x`.
pub fn coalition_values<F>(f: &F, x: &[f64], background: &[Vec<f64>]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let m = x.len();
    if m == 0 || m > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures { max: MAX_EXACT_FEATURES, got: m });
    }
    if background.is_empty() {
        return Err(Error::EmptyPopulation("SHAP background".into()));
    }
    for b in background {
        check_arity(m, b)?;
    }
    let nb = background.len() as f64;
    Ok((0..1usize << m)
        .into_par_iter()
        .map(|mask| {
            let mut z = vec![0.0; m];
            let mut s = 0.0;
            for b in background {
                for j in 0..m {
                    z[j] = if mask >> j & 1 == 1 { x[j] } else { b[j] };
                }
                s += f(&z);
            }
            s / nb
        })
        .collect())
}

/// Shapley weights `|S|!(M−|S|−1)!/M!` indexed by `|S|`.
fn weights(m: usize) -> Vec<f64> {
    let fact: Vec<f64> = (0..=m).scan(1.0, |acc, k| {
        if k > 0 {
            *acc *= k as f64;
        }
        Some(*acc)
    })
    .collect();
    (0..m).map(|s| fact[s] * fact[m - s - 1] / fact[m]).collect()
}

/// Exact Shapley values of an arbitrary model function.
pub fn shapley_values<F>(f: &F, x: &[f64], background: &[Vec<f64>]) -> Result<ShapExplanation>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let v = coalition_values(f, x, background)?;
    let m = x.len();
    let w = weights(m);
    let phi = (0..m)
        .map(|i| {
            let bit = 1usize << i;
            let mut acc = 0.0;
            for s in 0..1usize << m {
                if s & bit == 0 {
                    acc += w[s.count_ones() as usize] * (v[s | bit] - v[s]);
                }
            }
            acc
        })
        .collect();
    Ok(ShapExplanation {
        phi0: v[0],
        phi,
        fx: f(x),
    })
}

pub fn explain_shap(ens: &XgbEnsemble, x: &[f64], background: &[Vec<f64>]) -> Result<ShapExplanation> {
    check_arity(ens.n_features, x)?;
    let rounds = ens.trees.len();
    shapley_values(&|z: &[f64]| ens.margin_unchecked(z, rounds), x, background)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummary {
    pub mean_abs: Vec<f64>,
    /// Feature indices by decreasing mean |φ|; ties keep the lower index first.
    pub ranking: Vec<usize>,
    /// Per feature, `(feature value, φ)` for every explained sample.
    pub dependence: Vec<Vec<(f64, f64)>>,
    pub explanations: Vec<ShapExplanation>,
}

pub fn summarize(xs: &[Vec<f64>], explanations: Vec<ShapExplanation>) -> Result<ShapSummary> {
    if explanations.is_empty() {
        return Err(Error::EmptyPopulation("SHAP summary".into()));
    }
    let m = explanations[0].phi.len();
    let n = explanations.len() as f64;
    let mean_abs: Vec<f64> = (0..m)
        .map(|j| explanations.iter().map(|e| e.phi[j].abs()).sum::<f64>() / n)
        .collect();
    let mut ranking: Vec<usize> = (0..m).collect();
    ranking.sort_by(|&a, &b| mean_abs[b].total_cmp(&mean_abs[a]).then(a.cmp(&b)));
    let dependence = (0..m)
        .map(|j| xs.iter().zip(&explanations).map(|(x, e)| (x[j], e.phi[j])).collect())
        .collect();
    Ok(ShapSummary {
        mean_abs,
        ranking,
        dependence,
        explanations,
    })
}

pub fn shap_global_summary(ens: &XgbEnsemble, xs: &[Vec<f64>], background: &[Vec<f64>]) -> Result<ShapSummary> {
    let ex = xs
        .iter()
        .map(|x| explain_shap(ens, x, background))
        .collect::<Result<Vec<_>>>()?;
    summarize(xs, ex)
}
