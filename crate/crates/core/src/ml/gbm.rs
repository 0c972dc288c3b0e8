use serde::{Deserialize, Serialize};

use super::dataset::{check_arity, log_loss, sigmoid, Dataset};
use crate::error::{Error, Result};
use crate::tree::{midpoint, sorted_candidates, Node, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmParams {
    pub learning_rate: f64,
    pub stages: usize,
    pub max_depth: usize,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            stages: 100,
            max_depth: 3,
        }
    }
}

/// `F(x) = f0 + η Σ_t h_t(x)`, scored as `σ(F)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub f0: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    pub n_features: usize,
    /// Mean training log-loss after each stage, starting with `f0` alone.
    pub trace: Vec<f64>,
}

impl GbmModel {
    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        check_arity(self.n_features, x)?;
        Ok(self.f0 + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>())
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.margin(x)?))
    }
}

pub fn train_gbm(data: &Dataset, params: &GbmParams) -> Result<GbmModel> {
    data.require_both_classes()?;
    if params.stages == 0 {
        return Err(Error::invalid("at least one boosting stage is required"));
    }
    if !(0.0..=1.0).contains(&params.learning_rate) {
        return Err(Error::invalid("learning rate must lie in [0, 1]"));
    }
    let (neg, pos) = data.class_counts();
    let f0 = (pos as f64 / neg as f64).ln();
    let mut f = vec![f0; data.len()];
    let mut trace = vec![log_loss(&f, &data.y)];
    let mut trees = Vec::with_capacity(params.stages);
    let rows: Vec<usize> = (0..data.len()).collect();
    for _ in 0..params.stages {
        let resid: Vec<f64> = f
            .iter()
            .zip(&data.y)
            .map(|(&m, &l)| if l { 1.0 } else { 0.0 } - sigmoid(m))
            .collect();
        let mut nodes = Vec::new();
        grow_regression(&data.x, &resid, &rows, 0, params.max_depth, &mut nodes);
        let tree = Tree { nodes };
        for (fi, r) in f.iter_mut().zip(&data.x) {
            *fi += params.learning_rate * tree.predict(r);
        }
        trace.push(log_loss(&f, &data.y));
        trees.push(tree);
    }
    Ok(GbmModel {
        f0,
        learning_rate: params.learning_rate,
        trees,
        n_features: data.n_features(),
        trace,
    })
}

/// Least-squares CART; leaves hold the mean target.
fn grow_regression(x: &[Vec<f64>], t: &[f64], rows: &[usize], depth: usize, max_depth: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    let n = rows.len() as f64;
    let sum: f64 = rows.iter().map(|&r| t[r]).sum();
    nodes.push(Node::Leaf { value: sum / n, cover: n });
    if depth >= max_depth || rows.len() < 2 {
        return id;
    }
    // Maximising S_L²/n_L + S_R²/n_R minimises the summed squared error.
    let base = sum * sum / n;
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x[0].len() {
        let order = sorted_candidates(x, rows, f);
        let mut sl = 0.0;
        for i in 0..order.len() - 1 {
            sl += t[order[i]];
            let (a, b) = (x[order[i]][f], x[order[i + 1]][f]);
            if a == b {
                continue;
            }
            let nl = (i + 1) as f64;
            let sr = sum - sl;
            let gain = sl * sl / nl + sr * sr / (n - nl) - base;
            if gain > 1e-12 && best.map_or(true, |(g, _, _)| gain > g) {
                best = Some((gain, f, midpoint(a, b)));
            }
        }
    }
    let Some((_, feature, threshold)) = best else {
        return id;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][feature] < threshold);
    let left = grow_regression(x, t, &l, depth + 1, max_depth, nodes);
    let right = grow_regression(x, t, &r, depth + 1, max_depth, nodes);
    nodes[id] = Node::Split {
        feature,
        threshold,
        left,
        right,
        cover: n,
    };
    id
}
