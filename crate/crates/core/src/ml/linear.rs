use serde::{Deserialize, Serialize};

use super::dataset::{check_arity, sigmoid, softplus, Dataset};
use crate::error::{Error, Result};

/// Per-feature z-scoring fitted on training rows. Constant columns keep scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale = (0..d)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Logistic,
    Svm,
}

/// `margin = w · z(x) + b` with `z` the stored standardisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub scaler: Standardizer,
    /// Objective value per iteration.
    pub trace: Vec<f64>,
}

impl LinearModel {
    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        check_arity(self.weights.len(), x)?;
        let z = self.scaler.apply(x);
        Ok(self.weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>() + self.bias)
    }

    /// Probability for logistic models, signed margin for SVMs.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let m = self.margin(x)?;
        Ok(match self.kind {
            LinearKind::Logistic => sigmoid(m),
            LinearKind::Svm => m,
        })
    }

    /// Weights and bias expressed on the raw feature scale.
    pub fn folded(&self) -> (Vec<f64>, f64) {
        let w: Vec<f64> = self.weights.iter().zip(&self.scaler.scale).map(|(w, s)| w / s).collect();
        let b = self.bias - w.iter().zip(&self.scaler.mean).map(|(w, m)| w * m).sum::<f64>();
        (w, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    pub l2: f64,
    /// Initial step size of the backtracking line search.
    pub lr: f64,
    pub iters: usize,
    /// Stop once the gradient norm drops below this.
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            l2: 1e-2,
            lr: 1.0,
            iters: 1000,
            tol: 1e-8,
        }
    }
}

/// Summed cross-entropy plus `(l2/2)‖w‖²`, with its gradient.
pub fn logistic_objective(x: &[Vec<f64>], y: &[bool], w: &[f64], b: f64, l2: f64) -> (f64, Vec<f64>, f64) {
    let mut loss = 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    let mut gw: Vec<f64> = w.iter().map(|v| l2 * v).collect();
    let mut gb = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let m = row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
        loss += if label { softplus(-m) } else { softplus(m) };
        let r = sigmoid(m) - if label { 1.0 } else { 0.0 };
        for (g, v) in gw.iter_mut().zip(row) {
            *g += r * v;
        }
        gb += r;
    }
    (loss, gw, gb)
}

pub fn train_logistic(data: &Dataset, params: &LogisticParams) -> Result<LinearModel> {
    data.require_both_classes()?;
    let scaler = Standardizer::fit(&data.x);
    let z: Vec<Vec<f64>> = data.x.iter().map(|r| scaler.apply(r)).collect();
    let mut w = vec![0.0; z[0].len()];
    let mut b = 0.0;
    let (mut loss, mut gw, mut gb) = logistic_objective(&z, &data.y, &w, b, params.l2);
    let mut trace = vec![loss];
    let mut step = params.lr;
    for _ in 0..params.iters {
        let gnorm2 = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        if gnorm2.sqrt() < params.tol {
            break;
        }
        let mut accepted = false;
        while step > 1e-16 {
            let nw: Vec<f64> = w.iter().zip(&gw).map(|(a, g)| a - step * g).collect();
            let nb = b - step * gb;
            let (nl, ngw, ngb) = logistic_objective(&z, &data.y, &nw, nb, params.l2);
            if !nl.is_finite() {
                return Err(Error::NonFinite("logistic loss".into()));
            }
            if nl <= loss - 0.5 * step * gnorm2 {
                (w, b, loss, gw, gb) = (nw, nb, nl, ngw, ngb);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(loss);
        step = (step * 2.0).min(params.lr.max(step));
    }
    Ok(LinearModel {
        kind: LinearKind::Logistic,
        weights: w,
        bias: b,
        scaler,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    /// KKT violation tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-9,
            max_iter: 1_000_000,
        }
    }
}

/// `½‖w‖² + C Σ max(0, 1 - y_i (w·x_i + b))` on standardised rows.
pub fn svm_objective(z: &[Vec<f64>], y: &[bool], w: &[f64], b: f64, c: f64) -> f64 {
    let hinge: f64 = z
        .iter()
        .zip(y)
        .map(|(r, &l)| {
            let s = if l { 1.0 } else { -1.0 };
            let m = r.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
            (1.0 - s * m).max(0.0)
        })
        .sum();
    0.5 * w.iter().map(|v| v * v).sum::<f64>() + c * hinge
}

/// Linear soft-margin SVM solved exactly in the dual by sequential minimal
/// optimisation with second-order working-set selection.
pub fn train_svm(data: &Dataset, params: &SvmParams) -> Result<LinearModel> {
    data.require_both_classes()?;
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::invalid("SVM C must be positive"));
    }
    let scaler = Standardizer::fit(&data.x);
    let z: Vec<Vec<f64>> = data.x.iter().map(|r| scaler.apply(r)).collect();
    let n = z.len();
    let ys: Vec<f64> = data.y.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let k: Vec<Vec<f64>> = z
        .iter()
        .map(|a| z.iter().map(|b| a.iter().zip(b).map(|(p, q)| p * q).sum()).collect())
        .collect();
    let c = params.c;
    let mut alpha = vec![0.0; n];
    // Gradient of ½αᵀQα - eᵀα.
    let mut grad = vec![-1.0; n];
    let mut trace = Vec::new();
    let tau = 1e-12;
    for it in 0..params.max_iter {
        let up = |t: usize| (ys[t] > 0.0 && alpha[t] < c) || (ys[t] < 0.0 && alpha[t] > 0.0);
        let low = |t: usize| (ys[t] > 0.0 && alpha[t] > 0.0) || (ys[t] < 0.0 && alpha[t] < c);
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..n {
            if up(t) && -ys[t] * grad[t] > gmax {
                gmax = -ys[t] * grad[t];
                i = t;
            }
        }
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(t) {
                continue;
            }
            let v = -ys[t] * grad[t];
            gmin = gmin.min(v);
            if i != usize::MAX && v < gmax {
                let bdiff = gmax - v;
                let a = (k[i][i] + k[t][t] - 2.0 * k[i][t]).max(tau);
                let obj = -bdiff * bdiff / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < params.tol {
            break;
        }
        let a = (k[i][i] + k[j][j] - 2.0 * k[i][j]).max(tau);
        let (oi, oj) = (alpha[i], alpha[j]);
        if ys[i] != ys[j] {
            let delta = (-grad[i] - grad[j]) / a;
            let diff = oi - oj;
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / a;
            let sum = oi + oj;
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - oi, alpha[j] - oj);
        for t in 0..n {
            grad[t] += ys[t] * (ys[i] * k[t][i] * di + ys[j] * k[t][j] * dj);
        }
        if it % 64 == 0 {
            let (w, b) = primal(&z, &ys, &alpha, &grad, c);
            record(&mut trace, svm_objective(&z, &data.y, &w, b, c));
        }
    }
    let (w, b) = primal(&z, &ys, &alpha, &grad, c);
    record(&mut trace, svm_objective(&z, &data.y, &w, b, c));
    Ok(LinearModel {
        kind: LinearKind::Svm,
        weights: w,
        bias: b,
        scaler,
        trace,
    })
}

fn record(trace: &mut Vec<f64>, v: f64) {
    let best = trace.last().copied().unwrap_or(f64::INFINITY);
    trace.push(v.min(best));
}

fn primal(z: &[Vec<f64>], ys: &[f64], alpha: &[f64], grad: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = z.len();
    let mut w = vec![0.0; z[0].len()];
    for t in 0..n {
        for (wj, zj) in w.iter_mut().zip(&z[t]) {
            *wj += alpha[t] * ys[t] * zj;
        }
    }
    // Bias from free vectors, else the midpoint of the feasible interval.
    let (mut sum, mut count) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = ys[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            sum += yg;
            count += 1;
        } else if (alpha[t] >= c && ys[t] < 0.0) || (alpha[t] <= 0.0 && ys[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if count > 0 { sum / count as f64 } else { 0.5 * (ub + lb) };
    (w, -rho)
}
