use serde::{Deserialize, Serialize};

use super::dataset::{check_arity, sigmoid, Dataset};
use crate::error::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-9;

/// Gaussian naive Bayes. Index 0 is the negative class, 1 the positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbModel {
    pub priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
}

pub fn train_gnb(data: &Dataset) -> Result<GnbModel> {
    let (neg, pos) = data.class_counts();
    if neg.min(pos) < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: neg.min(pos) });
    }
    let d = data.n_features();
    let stats = |cls: bool| {
        let rows: Vec<&Vec<f64>> = data.x.iter().zip(&data.y).filter(|(_, &l)| l == cls).map(|(r, _)| r).collect();
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let var: Vec<f64> = (0..d)
            .map(|j| (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).max(VARIANCE_FLOOR))
            .collect();
        (mean, var)
    };
    let (m0, v0) = stats(false);
    let (m1, v1) = stats(true);
    let n = data.len() as f64;
    Ok(GnbModel {
        priors: [neg as f64 / n, pos as f64 / n],
        means: [m0, m1],
        variances: [v0, v1],
    })
}

impl GnbModel {
    /// `ln P(C=c) + Σ_j ln N(x_j; μ_cj, σ²_cj)` for both classes.
    pub fn log_joint(&self, x: &[f64]) -> Result<[f64; 2]> {
        check_arity(self.means[0].len(), x)?;
        let lj = |c: usize| {
            self.priors[c].ln()
                + x.iter()
                    .zip(self.means[c].iter().zip(&self.variances[c]))
                    .map(|(v, (m, s2))| -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (v - m).powi(2) / (2.0 * s2))
                    .sum::<f64>()
        };
        Ok([lj(0), lj(1)])
    }

    /// Log posterior of both classes.
    pub fn log_posterior(&self, x: &[f64]) -> Result<[f64; 2]> {
        let [a, b] = self.log_joint(x)?;
        let m = a.max(b);
        let lse = m + ((a - m).exp() + (b - m).exp()).ln();
        Ok([a - lse, b - lse])
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let [a, b] = self.log_joint(x)?;
        Ok(sigmoid(b - a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(x: Vec<Vec<f64>>, y: Vec<bool>) -> Dataset {
        let d = x[0].len();
        Dataset::new((0..d).map(|i| format!("f{i}")).collect(), x, y).unwrap()
    }

    #[test]
    fn symmetric_midpoint_is_half() {
        let d = ds(
            vec![vec![-3.0], vec![-1.0], vec![1.0], vec![3.0]],
            vec![false, false, true, true],
        );
        let m = train_gnb(&d).unwrap();
        assert_eq!(m.score(&[0.0]).unwrap(), 0.5);
    }

    #[test]
    fn priors_from_counts() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let y: Vec<bool> = (0..100).map(|i| i >= 30).collect();
        let m = train_gnb(&ds(x, y)).unwrap();
        assert_eq!(m.priors, [0.3, 0.7]);
    }

    #[test]
    fn hand_posterior() {
        // class 0: (0,1),(2,3); class 1: (4,0),(6,2),(5,1)
        let d = ds(
            vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 0.0], vec![6.0, 2.0], vec![5.0, 1.0]],
            vec![false, false, true, true, true],
        );
        let m = train_gnb(&d).unwrap();
        let x = [3.0, 1.5];
        let ln_n = |v: f64, mu: f64, s2: f64| -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (v - mu) * (v - mu) / (2.0 * s2);
        let a = (0.4f64).ln() + ln_n(3.0, 1.0, 1.0) + ln_n(1.5, 2.0, 1.0);
        let b = (0.6f64).ln() + ln_n(3.0, 5.0, 2.0 / 3.0) + ln_n(1.5, 1.0, 2.0 / 3.0);
        let want = b - (a.exp() + b.exp()).ln();
        let got = m.log_posterior(&x).unwrap()[1];
        assert!((got - want).abs() < 1e-12, "{got} {want}");
    }

    #[test]
    fn singleton_class_rejected() {
        let d = ds(vec![vec![0.0], vec![1.0], vec![2.0]], vec![false, false, true]);
        assert!(train_gnb(&d).is_err());
    }
}
