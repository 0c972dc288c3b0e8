use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{check_arity, Dataset};
use crate::error::{Error, Result};
use crate::tree::{midpoint, sorted_candidates, Node, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `⌈√d⌉` candidates per split.
    Sqrt,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 6,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

/// Trees whose leaves hold a class label (0 or 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub seed: u64,
    pub n_features: usize,
}

impl ForestModel {
    pub fn votes(&self, x: &[f64]) -> Result<usize> {
        check_arity(self.n_features, x)?;
        Ok(self.trees.iter().filter(|t| t.predict(x) > 0.5).count())
    }

    /// Fraction of trees voting for the positive class.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(self.votes(x)? as f64 / self.trees.len() as f64)
    }

    /// Majority vote; an even split goes to class 0.
    pub fn predict(&self, x: &[f64]) -> Result<bool> {
        Ok(2 * self.votes(x)? > self.trees.len())
    }
}

pub fn train_forest(data: &Dataset, params: &ForestParams) -> Result<ForestModel> {
    data.require_both_classes()?;
    if params.n_trees == 0 {
        return Err(Error::invalid("forest needs at least one tree"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let seeds: Vec<u64> = (0..params.n_trees).map(|_| rng.random()).collect();
    let trees = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let n = data.len();
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut b = GiniBuilder {
                data,
                params,
                rng,
                nodes: Vec::new(),
            };
            b.grow(&rows, 0);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestModel {
        trees,
        seed: params.seed,
        n_features: data.n_features(),
    })
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct GiniBuilder<'a> {
    data: &'a Dataset,
    params: &'a ForestParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl GiniBuilder<'_> {
    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let n = rows.len();
        let pos = rows.iter().filter(|&&r| self.data.y[r]).count();
        let leaf = Node::Leaf {
            value: if 2 * pos > n { 1.0 } else { 0.0 },
            cover: n as f64,
        };
        self.nodes.push(leaf.clone());
        if depth >= self.params.max_depth || pos == 0 || pos == n {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(rows, pos) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.data.x[i][feature] < threshold);
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
            cover: n as f64,
        };
        id
    }

    fn best_split(&mut self, rows: &[usize], pos: usize) -> Option<(usize, f64)> {
        let d = self.data.n_features();
        let k = match self.params.max_features {
            MaxFeatures::Sqrt => ((d as f64).sqrt().ceil() as usize).clamp(1, d),
            MaxFeatures::All => d,
        };
        let mut feats = sample(&mut self.rng, d, k).into_vec();
        feats.sort_unstable();
        let n = rows.len();
        let parent = gini(pos, n);
        let mut best: Option<(f64, usize, f64)> = None;
        for f in feats {
            let order = sorted_candidates(&self.data.x, rows, f);
            let mut lp = 0;
            for i in 0..n - 1 {
                if self.data.y[order[i]] {
                    lp += 1;
                }
                let (a, b) = (self.data.x[order[i]][f], self.data.x[order[i + 1]][f]);
                if a == b {
                    continue;
                }
                let nl = i + 1;
                let imp = (nl as f64 * gini(lp, nl) + (n - nl) as f64 * gini(pos - lp, n - nl)) / n as f64;
                let dec = parent - imp;
                if dec > 1e-12 && best.map_or(true, |(bd, _, _)| dec > bd) {
                    best = Some((dec, f, midpoint(a, b)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}
