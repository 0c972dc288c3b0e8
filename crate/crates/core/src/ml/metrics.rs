use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Predict positive iff the (oriented) score is `>= threshold`.
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Starts at (0, 0) with an infinite threshold and ends at (1, 1).
    pub points: Vec<RocPoint>,
    /// Scores were negated so that the curve lies on or above the diagonal.
    pub flipped: bool,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl RocCurve {
    /// Map a raw score into the curve's orientation.
    pub fn orient(&self, score: f64) -> f64 {
        if self.flipped {
            -score
        } else {
            score
        }
    }

    /// Threshold rule in raw-score terms.
    pub fn predict(&self, score: f64, threshold: f64) -> bool {
        self.orient(score) >= self.orient(threshold)
    }
}

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((n_pos, n_neg))
}

/// ROC curve with a fixed score direction.
pub fn roc_curve_oriented(scores: &[f64], labels: &[bool], flipped: bool) -> Result<RocCurve> {
    let (n_pos, n_neg) = check_scores(scores, labels)?;
    let sign = if flipped { -1.0 } else { 1.0 };
    let mut order: Vec<(f64, bool)> = scores.iter().map(|s| sign * s).zip(labels.iter().copied()).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        tp: 0,
        fp: 0,
        tpr: 0.0,
        fpr: 0.0,
    }];
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let t = order[i].0;
        while i < order.len() && order[i].0 == t {
            if order[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: sign * t,
            tp,
            fp,
            tpr: tp as f64 / n_pos as f64,
            fpr: fp as f64 / n_neg as f64,
        });
    }
    Ok(RocCurve {
        points,
        flipped,
        n_pos,
        n_neg,
    })
}

/// ROC curve, flipped when the raw orientation would give AUC < 0.5.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let raw = roc_curve_oriented(scores, labels, false)?;
    if auc(&raw) < 0.5 {
        roc_curve_oriented(scores, labels, true)
    } else {
        Ok(raw)
    }
}

/// Trapezoidal area, accumulated in integer counts so it equals the
/// Mann-Whitney statistic up to a single rounding.
pub fn auc(curve: &RocCurve) -> f64 {
    let mut twice: u128 = 0;
    for w in curve.points.windows(2) {
        let dfp = (w[1].fp - w[0].fp) as u128;
        twice += dfp * (w[1].tp + w[0].tp) as u128;
    }
    twice as f64 / (2 * curve.n_pos as u128 * curve.n_neg as u128) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Youden {
    /// Raw-score threshold; see `RocCurve::predict`.
    pub threshold: f64,
    pub j: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Operating point maximising `TPR - FPR`; ties go to the higher TPR.
pub fn youden_threshold(curve: &RocCurve) -> Youden {
    let (p, n) = (curve.n_pos as i128, curve.n_neg as i128);
    let score = |pt: &RocPoint| pt.tp as i128 * n - pt.fp as i128 * p;
    let best = curve.points[1..]
        .iter()
        .max_by(|a, b| score(a).cmp(&score(b)).then(a.tp.cmp(&b.tp)))
        .expect("curve has at least one finite threshold");
    Youden {
        threshold: best.threshold,
        j: score(best) as f64 / (p * n) as f64,
        sensitivity: best.tpr,
        specificity: 1.0 - best.fpr,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub recall: f64,
    pub specificity: f64,
    pub ppv: f64,
    pub f1: f64,
    pub mcc: f64,
    pub auc: Option<f64>,
    /// No positive predictions, so PPV was reported as 0.
    pub ppv_undefined: bool,
    pub confusion: Confusion,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn confusion_metrics(pred: &[bool], labels: &[bool]) -> Result<Metrics> {
    if pred.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} labels",
            pred.len(),
            labels.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyPopulation("no predictions".into()));
    }
    let mut c = Confusion::default();
    for (&p, &l) in pred.iter().zip(labels) {
        match (p, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let recall = ratio(c.tp, c.tp + c.fn_);
    let specificity = ratio(c.tn, c.tn + c.fp);
    let ppv = ratio(c.tp, c.tp + c.fp);
    let f1 = if ppv + recall > 0.0 {
        2.0 * ppv * recall / (ppv + recall)
    } else {
        0.0
    };
    let factors = [c.tp + c.fp, c.tp + c.fn_, c.tn + c.fp, c.tn + c.fn_];
    let mcc = if factors.contains(&0) {
        0.0
    } else {
        let num = c.tp as f64 * c.tn as f64 - c.fp as f64 * c.fn_ as f64;
        num / factors.iter().map(|&f| f as f64).product::<f64>().sqrt()
    };
    Ok(Metrics {
        accuracy: ratio(c.tp + c.tn, pred.len()),
        balanced_accuracy: 0.5 * (recall + specificity),
        recall,
        specificity,
        ppv,
        f1,
        mcc,
        auc: None,
        ppv_undefined: c.tp + c.fp == 0,
        confusion: c,
    })
}
