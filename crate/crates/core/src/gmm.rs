//! One-dimensional Gaussian mixtures fitted by EM, with BIC model selection
//! and the intestinal-wall posterior used by the comb-sign map.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, CtVolume, ProbabilityVolume};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub log_likelihood: f64,
    pub n: usize,
    /// Log-likelihood after every EM iteration of the winning restart.
    pub trace: Vec<f64>,
}

/// How BIC counts free parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BicPenalty {
    /// `3k - 1`: weights, means and variances.
    #[default]
    Parameters,
    /// The bare component count `k`.
    ComponentCount,
}

impl BicPenalty {
    pub fn free_parameters(self, k: usize) -> usize {
        match self {
            BicPenalty::Parameters => 3 * k - 1,
            BicPenalty::ComponentCount => k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Stop when the relative log-likelihood gain drops below this.
    pub tol: f64,
    pub max_iter: usize,
    pub variance_floor: f64,
    /// Independent k-means++ restarts; the best final likelihood wins.
    pub n_init: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            variance_floor: 0.25,
            n_init: 3,
        }
    }
}

pub fn bic_value(log_likelihood: f64, free_parameters: usize, n: f64) -> f64 {
    -2.0 * log_likelihood + free_parameters as f64 * n.ln()
}

impl GmmModel {
    pub fn bic(&self) -> f64 {
        self.bic_with(BicPenalty::default())
    }

    pub fn bic_with(&self, penalty: BicPenalty) -> f64 {
        bic_value(self.log_likelihood, penalty.free_parameters(self.k), self.n as f64)
    }

    fn log_joint(&self, x: f64, out: &mut [f64]) -> f64 {
        for j in 0..self.k {
            let v = self.variances[j];
            let d = x - self.means[j];
            out[j] = self.weights[j].ln() - 0.5 * (LN_2PI + v.ln() + d * d / v);
        }
        log_sum_exp(out)
    }

    /// Posterior component probabilities for one sample.
    pub fn responsibilities(&self, x: f64) -> Vec<f64> {
        let mut r = vec![0.0; self.k];
        let lse = self.log_joint(x, &mut r);
        r.iter_mut().for_each(|v| *v = (*v - lse).exp());
        r
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let mut r = vec![0.0; self.k];
        self.log_joint(x, &mut r)
    }

    /// The enhancing-wall component: of the two heaviest components, the brighter.
    pub fn wall_component(&self) -> usize {
        let mut order: Vec<usize> = (0..self.k).collect();
        order.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]).then(a.cmp(&b)));
        order
            .iter()
            .take(2)
            .copied()
            .max_by(|&a, &b| self.means[a].total_cmp(&self.means[b]).then(b.cmp(&a)))
            .unwrap_or(0)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Fit a `k`-component mixture. The input is sorted internally, so the
/// result does not depend on sample order.
pub fn fit_gmm(samples: &[f64], k: usize, seed: u64, opts: &FitOptions) -> Result<GmmModel> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if samples.len() < 2 * k {
        return Err(Error::TooFewSamples {
            needed: 2 * k,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("samples".into()));
    }
    if !(opts.variance_floor > 0.0) || opts.max_iter == 0 {
        return Err(Error::invalid("variance floor and max_iter must be positive"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<GmmModel> = None;
    for _ in 0..opts.n_init.max(1) {
        let init = kmeans_pp_init(&xs, k, opts.variance_floor, &mut rng);
        let fit = run_em(&xs, init, opts);
        if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn kmeans_pp_init(xs: &[f64], k: usize, floor: f64, rng: &mut ChaCha8Rng) -> GmmModel {
    let n = xs.len();
    let mut centers = vec![xs[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = xs.iter().map(|x| (x - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if t < *d {
                    idx = i;
                    break;
                }
                t -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = xs[pick];
        centers.push(c);
        for (d, x) in d2.iter_mut().zip(xs) {
            *d = d.min((x - c).powi(2));
        }
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let global_var = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).max(floor);
    let mut count = vec![0usize; k];
    let mut sum = vec![0.0; k];
    let mut sq = vec![0.0; k];
    for &x in xs {
        let j = (0..k)
            .min_by(|&a, &b| (x - centers[a]).abs().total_cmp(&(x - centers[b]).abs()))
            .unwrap();
        count[j] += 1;
        sum[j] += x;
        sq[j] += x * x;
    }
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for j in 0..k {
        if count[j] >= 2 {
            let m = sum[j] / count[j] as f64;
            weights.push(count[j] as f64 / n as f64);
            means.push(m);
            variances.push((sq[j] / count[j] as f64 - m * m).max(floor));
        } else {
            weights.push(1.0 / n as f64);
            means.push(centers[j]);
            variances.push(global_var);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GmmModel {
        k,
        weights,
        means,
        variances,
        log_likelihood: f64::NEG_INFINITY,
        n,
        trace: Vec::new(),
    }
}

struct Precomputed {
    offset: Vec<f64>,
    inv_var: Vec<f64>,
}

impl GmmModel {
    fn precompute(&self) -> Precomputed {
        Precomputed {
            offset: (0..self.k)
                .map(|j| self.weights[j].ln() - 0.5 * (LN_2PI + self.variances[j].ln()))
                .collect(),
            inv_var: self.variances.iter().map(|v| 1.0 / v).collect(),
        }
    }
}

fn run_em(xs: &[f64], mut m: GmmModel, opts: &FitOptions) -> GmmModel {
    let k = m.k;
    let n = xs.len();
    let mut row = vec![0.0; k];
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..opts.max_iter {
        // Sufficient statistics under the current parameters, whose
        // log-likelihood is recorded before the M-step replaces them.
        let pre = m.precompute();
        let mut nk = vec![0.0; k];
        let mut sx = vec![0.0; k];
        let mut sxx = vec![0.0; k];
        let mut ll = 0.0;
        for &x in xs {
            let mut top = f64::NEG_INFINITY;
            for j in 0..k {
                let d = x - m.means[j];
                row[j] = pre.offset[j] - 0.5 * d * d * pre.inv_var[j];
                top = top.max(row[j]);
            }
            let mut total = 0.0;
            for r in row.iter_mut() {
                *r = (*r - top).exp();
                total += *r;
            }
            ll += top + total.ln();
            let inv = 1.0 / total;
            for j in 0..k {
                let r = row[j] * inv;
                let d = x - m.means[j];
                nk[j] += r;
                sx[j] += r * d;
                sxx[j] += r * d * d;
            }
        }
        m.trace.push(ll);
        let converged = prev.is_finite() && (ll - prev) < opts.tol * prev.abs();
        prev = ll;
        if converged {
            break;
        }
        let tiny = f64::MIN_POSITIVE.sqrt();
        for j in 0..k {
            m.weights[j] = (nk[j] / n as f64).max(tiny);
            if nk[j] > 0.0 {
                // Statistics are centred on the old mean to avoid cancellation.
                let shift = sx[j] / nk[j];
                m.means[j] += shift;
                m.variances[j] = (sxx[j] / nk[j] - shift * shift).max(opts.variance_floor);
            }
        }
        let total: f64 = m.weights.iter().sum();
        m.weights.iter_mut().for_each(|w| *w /= total);
    }
    m.log_likelihood = xs.iter().map(|&x| m.log_joint(x, &mut row)).sum();
    if m.trace.last() != Some(&m.log_likelihood) {
        m.trace.push(m.log_likelihood);
    }
    m
}

/// Fit every `k` in `ks` and keep the lowest BIC. Ties go to the smaller `k`.
pub fn select_k_by_bic(
    samples: &[f64],
    ks: &[usize],
    seed: u64,
    opts: &FitOptions,
    penalty: BicPenalty,
) -> Result<GmmModel> {
    if ks.is_empty() {
        return Err(Error::invalid("empty k range"));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let fits: Vec<Result<GmmModel>> = ks
        .par_iter()
        .map(|&k| fit_gmm(samples, k, seed.wrapping_add(k as u64), opts))
        .collect();
    let mut best: Option<GmmModel> = None;
    for fit in fits {
        let fit = fit?;
        if best
            .as_ref()
            .is_none_or(|b| fit.bic_with(penalty) < b.bic_with(penalty))
        {
            best = Some(fit);
        }
    }
    Ok(best.expect("nonempty k range"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WallOptions {
    pub k_max: usize,
    pub penalty: BicPenalty,
    pub max_samples: usize,
    pub fit: FitOptions,
}

impl Default for WallOptions {
    fn default() -> Self {
        Self {
            k_max: 6,
            penalty: BicPenalty::Parameters,
            max_samples: 2_000_000,
            fit: FitOptions::default(),
        }
    }
}

pub fn wall_posterior(vol: &CtVolume, intestine: &BinaryMask, seed: u64) -> Result<ProbabilityVolume> {
    wall_posterior_with(vol, intestine, seed, &WallOptions::default()).map(|(p, _)| p)
}

/// Wall posterior plus the selected mixture.
pub fn wall_posterior_with(
    vol: &CtVolume,
    intestine: &BinaryMask,
    seed: u64,
    opts: &WallOptions,
) -> Result<(ProbabilityVolume, GmmModel)> {
    vol.grid().ensure_same_dims(intestine.grid())?;
    let inside: Vec<usize> = intestine
        .bits()
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i))
        .collect();
    if inside.is_empty() {
        return Err(Error::EmptyPopulation("intestine mask".into()));
    }
    let hu = vol.voxels();
    let mut samples: Vec<f64> = inside.iter().map(|&i| hu[i] as f64).collect();
    if samples.len() > opts.max_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5a3b);
        let picked = index::sample(&mut rng, samples.len(), opts.max_samples);
        samples = picked.iter().map(|i| samples[i]).collect();
    }
    let k_hi = opts.k_max.min(samples.len() / 2).max(1);
    let ks: Vec<usize> = (1..=k_hi).collect();
    let model = select_k_by_bic(&samples, &ks, seed, &opts.fit, opts.penalty)?;
    let wall = model.wall_component();
    let mut out = vec![0.0f32; vol.grid().len()];
    let mut row = vec![0.0; model.k];
    for &i in &inside {
        let lse = model.log_joint(hu[i] as f64, &mut row);
        out[i] = ((row[wall] - lse).exp().clamp(0.0, 1.0)) as f32;
    }
    Ok((ProbabilityVolume::from_parts(vol.grid().clone(), out), model))
}
