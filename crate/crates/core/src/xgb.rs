//! Second-order regularised gradient boosting for binary log-loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ml::dataset::{check_arity, log_loss, sigmoid, Dataset};
use crate::tree::{midpoint, sorted_candidates, Node, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct XgbParams {
    /// Shrinkage η applied to every leaf weight.
    pub eta: f64,
    /// Per-leaf complexity penalty γ.
    pub gamma: f64,
    /// L2 penalty λ on leaf weights.
    pub lambda: f64,
    pub max_depth: usize,
    pub rounds: usize,
    pub min_child_hessian: f64,
}

impl Default for XgbParams {
    fn default() -> Self {
        Self {
            eta: 0.3,
            gamma: 0.0,
            lambda: 1.0,
            max_depth: 3,
            rounds: 50,
            min_child_hessian: 1e-3,
        }
    }
}

impl XgbParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::invalid("eta must lie in (0, 1]"));
        }
        if !(self.gamma >= 0.0 && self.lambda >= 0.0 && self.min_child_hessian >= 0.0) {
            return Err(Error::invalid("gamma, lambda and min_child_hessian must be non-negative"));
        }
        if self.rounds == 0 {
            return Err(Error::invalid("at least one boosting round is required"));
        }
        Ok(())
    }
}

/// `margin(x) = base_score + Σ_t f_t(x)`. Node covers hold the training hessian sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XgbEnsemble {
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub n_features: usize,
    /// Mean training log-loss, starting with the base score alone.
    #[serde(default)]
    pub trace: Vec<f64>,
}

impl XgbEnsemble {
    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        self.margin_upto(x, self.trees.len())
    }

    /// Margin using only the first `rounds` trees.
    pub fn margin_upto(&self, x: &[f64], rounds: usize) -> Result<f64> {
        check_arity(self.n_features, x)?;
        Ok(self.margin_unchecked(x, rounds))
    }

    pub(crate) fn margin_unchecked(&self, x: &[f64], rounds: usize) -> f64 {
        self.trees[..rounds.min(self.trees.len())]
            .iter()
            .fold(self.base_score, |m, t| m + t.predict(x))
    }

    pub fn probability(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.margin(x)?))
    }
}

/// Optimal leaf weight `-G / (H + λ)`, before shrinkage.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

/// `½ [G_L²/(H_L+λ) + G_R²/(H_R+λ) − (G_L+G_R)²/(H_L+H_R+λ)] − γ`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let (g, h) = (gl + gr, hl + hr);
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Exact greedy search over every boundary between distinct sorted values.
/// Ties keep the lowest feature, then the lowest threshold.
pub fn best_split(x: &[Vec<f64>], g: &[f64], h: &[f64], rows: &[usize], params: &XgbParams) -> Option<SplitCandidate> {
    if rows.len() < 2 {
        return None;
    }
    let d = x[rows[0]].len();
    let gt: f64 = rows.iter().map(|&r| g[r]).sum();
    let ht: f64 = rows.iter().map(|&r| h[r]).sum();
    let mut best: Option<SplitCandidate> = None;
    for f in 0..d {
        let order = sorted_candidates(x, rows, f);
        let (mut gl, mut hl) = (0.0, 0.0);
        for i in 0..order.len() - 1 {
            gl += g[order[i]];
            hl += h[order[i]];
            let (a, b) = (x[order[i]][f], x[order[i + 1]][f]);
            if a == b {
                continue;
            }
            let (gr, hr) = (gt - gl, ht - hl);
            if hl < params.min_child_hessian || hr < params.min_child_hessian {
                continue;
            }
            let gain = split_gain(gl, hl, gr, hr, params.lambda, params.gamma);
            if gain > 0.0 && best.map_or(true, |c| gain > c.gain) {
                best = Some(SplitCandidate {
                    feature: f,
                    threshold: midpoint(a, b),
                    gain,
                });
            }
        }
    }
    best
}

fn grow(x: &[Vec<f64>], g: &[f64], h: &[f64], rows: &[usize], depth: usize, params: &XgbParams, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    let gs: f64 = rows.iter().map(|&r| g[r]).sum();
    let hs: f64 = rows.iter().map(|&r| h[r]).sum();
    nodes.push(Node::Leaf {
        value: params.eta * leaf_weight(gs, hs, params.lambda),
        cover: hs,
    });
    if depth >= params.max_depth {
        return id;
    }
    let Some(s) = best_split(x, g, h, rows, params) else {
        return id;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][s.feature] < s.threshold);
    let left = grow(x, g, h, &l, depth + 1, params, nodes);
    let right = grow(x, g, h, &r, depth + 1, params, nodes);
    nodes[id] = Node::Split {
        feature: s.feature,
        threshold: s.threshold,
        left,
        right,
        cover: hs,
    };
    id
}

pub fn train_xgb(data: &Dataset, params: &XgbParams) -> Result<XgbEnsemble> {
    params.validate()?;
    data.require_both_classes()?;
    let (neg, pos) = data.class_counts();
    let base_score = (pos as f64 / neg as f64).ln();
    let n = data.len();
    let rows: Vec<usize> = (0..n).collect();
    let mut margin = vec![base_score; n];
    let mut trace = vec![log_loss(&margin, &data.y)];
    let mut trees = Vec::with_capacity(params.rounds);
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    for _ in 0..params.rounds {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            g[i] = p - if data.y[i] { 1.0 } else { 0.0 };
            h[i] = p * (1.0 - p);
        }
        let mut nodes = Vec::new();
        grow(&data.x, &g, &h, &rows, 0, params, &mut nodes);
        let tree = Tree { nodes };
        for (m, r) in margin.iter_mut().zip(&data.x) {
            *m += tree.predict(r);
        }
        trace.push(log_loss(&margin, &data.y));
        trees.push(tree);
    }
    Ok(XgbEnsemble {
        base_score,
        trees,
        n_features: data.n_features(),
        trace,
    })
}
