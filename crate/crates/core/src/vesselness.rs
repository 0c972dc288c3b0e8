//! Multiscale Hessian tube enhancement, neighbourhood-max refinement and
//! wall-proximity weighting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{
    convolve_axis, gaussian_blur, gaussian_d1_kernel, gaussian_d2_kernel, gaussian_kernel,
    Boundary, Kernel,
};
use crate::morphology::{percentile_threshold, Population};
use crate::volume::{BinaryMask, CtVolume, Grid, ProbabilityVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Bright tubes on a darker background (contrast-filled vessels).
    Bright,
    Dark,
}

/// Structureness constant `c` of the tube measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureConstant {
    /// Half the largest Hessian Frobenius norm over every scale and voxel.
    HalfMaxNorm,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VesselParams {
    /// Scales in millimetres, ascending.
    pub scales: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub c: StructureConstant,
    pub polarity: Polarity,
}

impl Default for VesselParams {
    fn default() -> Self {
        Self {
            scales: geometric_scales(1.0, 4.0, 5).expect("valid default scales"),
            alpha: 0.5,
            beta: 0.5,
            c: StructureConstant::HalfMaxNorm,
            polarity: Polarity::Bright,
        }
    }
}

pub fn geometric_scales(s_min: f64, s_max: f64, count: usize) -> Result<Vec<f64>> {
    if !(s_min > 0.0 && s_min <= s_max && s_max.is_finite()) || count == 0 {
        return Err(Error::invalid(format!(
            "need 0 < s_min <= s_max and count >= 1, got {s_min}, {s_max}, {count}"
        )));
    }
    if count == 1 {
        return Ok(vec![s_min]);
    }
    let ratio = (s_max / s_min).powf(1.0 / (count - 1) as f64);
    let mut out: Vec<f64> = (0..count).map(|i| s_min * ratio.powi(i as i32)).collect();
    out[count - 1] = s_max;
    Ok(out)
}

impl VesselParams {
    fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("scales must be nonempty and positive"));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::invalid("alpha and beta must be positive"));
        }
        if let StructureConstant::Fixed(c) = self.c {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::invalid("structure constant must be positive"));
            }
        }
        Ok(())
    }
}

/// Eigenvalues of the symmetric matrix `[xx, yy, zz, xy, xz, yz]`, ordered
/// by absolute value (ties broken by signed value).
///
/// The arithmetic is arranged so that swapping the x and y axes, with any
/// sign flips on the off-diagonal terms, gives bit-identical results.
pub fn hessian_eigenvalues(h: [f64; 6]) -> [f64; 3] {
    let [a00, a11, a22, a01, a02, a12] = h;
    let p1 = a01 * a01 + (a02 * a02 + a12 * a12);
    let mut e = if p1 == 0.0 {
        [a00, a11, a22]
    } else {
        let q = (a00 + a11 + a22) / 3.0;
        let d0 = a00 - q;
        let d1 = a11 - q;
        let d2 = a22 - q;
        let p2 = (d0 * d0 + d1 * d1) + d2 * d2 + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let (b00, b11, b22) = (d0 / p, d1 / p, d2 / p);
        let (b01, b02, b12) = (a01 / p, a02 / p, a12 / p);
        let det = b22 * (b00 * b11 - b01 * b01) + 2.0 * b01 * (b02 * b12)
            - (b00 * (b12 * b12) + b11 * (b02 * b02));
        let r = (det / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
        [e1, 3.0 * q - e1 - e3, e3]
    };
    e.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
    e
}

/// Tube measure for eigenvalues sorted by absolute value.
pub fn frangi_measure(l: [f64; 3], alpha: f64, beta: f64, c: f64, polarity: Polarity) -> f64 {
    let [l1, l2, l3] = l;
    let tubular = match polarity {
        Polarity::Bright => l2 < 0.0 && l3 < 0.0,
        Polarity::Dark => l2 > 0.0 && l3 > 0.0,
    };
    if !tubular || c <= 0.0 {
        return 0.0;
    }
    let ra = l2.abs() / l3.abs();
    let rb = l1.abs() / (l2 * l3).abs().sqrt();
    let s2 = l1 * l1 + l2 * l2 + l3 * l3;
    (1.0 - (-ra * ra / (2.0 * alpha * alpha)).exp())
        * (-rb * rb / (2.0 * beta * beta)).exp()
        * (1.0 - (-s2 / (2.0 * c * c)).exp())
}

fn axis_pass(data: &[f64], dims: [usize; 3], axis: usize, k: &Kernel) -> Vec<f64> {
    convolve_axis(data, dims, axis, k, Boundary::Clamp)
}

/// Apply `kx` along x and `ky` along y in both orders and average, then `kz`.
/// The symmetric ordering keeps in-plane quarter turns bit-exact.
fn planar_then_z(data: &[f64], dims: [usize; 3], kx: &Kernel, ky: &Kernel, kz: &Kernel) -> Vec<f64> {
    let a = axis_pass(&axis_pass(data, dims, 0, kx), dims, 1, ky);
    let b = axis_pass(&axis_pass(data, dims, 1, ky), dims, 0, kx);
    let mixed: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect();
    axis_pass(&mixed, dims, 2, kz)
}

/// Scale-normalised Hessian in mm units: `[xx, yy, zz, xy, xz, yz]` planes.
pub fn hessian(data: &[f64], grid: &Grid, scale_mm: f64) -> [Vec<f64>; 6] {
    let dims = grid.dims;
    let sp = grid.spacing;
    let sig = sp.map(|s| scale_mm / s);
    let g = sig.map(gaussian_kernel);
    let d1 = sig.map(gaussian_d1_kernel);
    let d2 = sig.map(gaussian_d2_kernel);
    let norm = |i: usize, j: usize| scale_mm * scale_mm / (sp[i] * sp[j]);
    let scaled = |v: Vec<f64>, f: f64| v.into_iter().map(|x| x * f).collect::<Vec<f64>>();
    [
        scaled(planar_then_z(data, dims, &d2[0], &g[1], &g[2]), norm(0, 0)),
        scaled(planar_then_z(data, dims, &g[0], &d2[1], &g[2]), norm(1, 1)),
        scaled(planar_then_z(data, dims, &g[0], &g[1], &d2[2]), norm(2, 2)),
        scaled(planar_then_z(data, dims, &d1[0], &d1[1], &g[2]), norm(0, 1)),
        scaled(planar_then_z(data, dims, &d1[0], &g[1], &d1[2]), norm(0, 2)),
        scaled(planar_then_z(data, dims, &g[0], &d1[1], &d1[2]), norm(1, 2)),
    ]
}

/// Unnormalised multiscale response.
#[derive(Debug, Clone)]
pub struct VesselResponse {
    pub values: Vec<f64>,
    /// Index into `VesselParams::scales` of the winning scale per voxel.
    pub best_scale: Vec<u8>,
    /// Structure constant actually used.
    pub c: f64,
}

pub fn vesselness_raw(vol: &CtVolume, params: &VesselParams) -> Result<VesselResponse> {
    params.validate()?;
    if vol.dims().iter().any(|&n| n < 8) {
        return Err(Error::invalid(format!(
            "vesselness needs at least 8 voxels per axis, got {:?}",
            vol.dims()
        )));
    }
    let data: Vec<f64> = vol.voxels().iter().map(|&v| v as f64).collect();
    let n = data.len();
    let eigen: Vec<Vec<[f64; 3]>> = params
        .scales
        .iter()
        .map(|&s| {
            let h = hessian(&data, vol.grid(), s);
            (0..n)
                .into_par_iter()
                .map(|i| hessian_eigenvalues([h[0][i], h[1][i], h[2][i], h[3][i], h[4][i], h[5][i]]))
                .collect()
        })
        .collect();
    let c = match params.c {
        StructureConstant::Fixed(c) => c,
        StructureConstant::HalfMaxNorm => {
            let max_norm = eigen
                .iter()
                .flatten()
                .map(|l| (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt())
                .fold(0.0, f64::max);
            0.5 * max_norm
        }
    };
    let mut values = vec![0.0; n];
    let mut best_scale = vec![0u8; n];
    for (si, ev) in eigen.iter().enumerate() {
        for i in 0..n {
            let v = frangi_measure(ev[i], params.alpha, params.beta, c, params.polarity);
            if v > values[i] {
                values[i] = v;
                best_scale[i] = si as u8;
            }
        }
    }
    Ok(VesselResponse { values, best_scale, c })
}

/// Max-over-scales tube measure rescaled to peak 1.
pub fn frangi_response(vol: &CtVolume, params: &VesselParams) -> Result<ProbabilityVolume> {
    let raw = vesselness_raw(vol, params)?;
    let peak = raw.values.iter().copied().fold(0.0, f64::max);
    let out = if peak > 0.0 {
        raw.values.iter().map(|v| (v / peak).clamp(0.0, 1.0) as f32).collect()
    } else {
        vec![0.0; raw.values.len()]
    };
    Ok(ProbabilityVolume::from_parts(vol.grid().clone(), out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineSchedule {
    /// One mixing weight per iteration.
    pub lambdas: Vec<f64>,
}

impl RefineSchedule {
    pub fn constant(lambda: f64, iterations: usize) -> Self {
        Self {
            lambdas: vec![lambda; iterations],
        }
    }

    pub fn iterations(&self) -> usize {
        self.lambdas.len()
    }
}

impl Default for RefineSchedule {
    fn default() -> Self {
        Self::constant(0.5, 3)
    }
}

/// Maximum over the 3×3×3 neighbourhood, clipped at the border.
pub fn max_filter3(values: &[f32], dims: [usize; 3]) -> Vec<f32> {
    let mut cur = values.to_vec();
    for axis in 0..3 {
        let stride = [1, dims[0], dims[0] * dims[1]][axis];
        let n = dims[axis];
        let src = cur.clone();
        cur.par_iter_mut().enumerate().for_each(|(i, out)| {
            let pos = (i / stride) % n;
            let mut m = src[i];
            if pos > 0 {
                m = m.max(src[i - stride]);
            }
            if pos + 1 < n {
                m = m.max(src[i + stride]);
            }
            *out = m;
        });
    }
    cur
}

/// `P ← M^(1-λ) · P^λ` with `M` the 3×3×3 neighbourhood max, once per `λ`.
pub fn refine_probability(p0: &ProbabilityVolume, sched: &RefineSchedule) -> Result<ProbabilityVolume> {
    if sched.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::invalid("refinement weights must lie in [0, 1]"));
    }
    let dims = p0.dims();
    let mut p = p0.values().to_vec();
    for &lambda in &sched.lambdas {
        if lambda == 1.0 {
            continue;
        }
        let m = max_filter3(&p, dims);
        if lambda == 0.0 {
            p = m;
            continue;
        }
        p.par_iter_mut().zip(&m).for_each(|(pv, &mv)| {
            let v = (mv as f64).powf(1.0 - lambda) * (*pv as f64).powf(lambda);
            *pv = (v as f32).clamp(*pv, mv);
        });
    }
    Ok(ProbabilityVolume::from_parts(p0.grid().clone(), p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceParams {
    pub sigma_mm: f64,
    /// Vessel values below this percentile of the nonzero values are dropped.
    pub keep_percentile: f64,
}

impl Default for DistanceParams {
    fn default() -> Self {
        Self {
            sigma_mm: 10.0,
            keep_percentile: 95.0,
        }
    }
}

/// Gaussian-blurred wall field rescaled to peak 1.
pub fn proximity_field(wall: &ProbabilityVolume, sigma_mm: f64) -> Result<Vec<f64>> {
    if !(sigma_mm.is_finite() && sigma_mm > 0.0) {
        return Err(Error::invalid("proximity sigma must be positive"));
    }
    let data: Vec<f64> = wall.values().iter().map(|&v| v as f64).collect();
    let grid = wall.grid();
    let mut blurred = gaussian_blur(&data, grid.dims, grid.spacing, sigma_mm, Boundary::Zero);
    let peak = blurred.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        blurred.iter_mut().for_each(|v| *v = (*v / peak).clamp(0.0, 1.0));
    } else {
        blurred.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(blurred)
}

pub fn wall_distance_weight(
    p: &ProbabilityVolume,
    wall: &ProbabilityVolume,
    intestine: &BinaryMask,
    params: &DistanceParams,
) -> Result<ProbabilityVolume> {
    p.grid().ensure_same_dims(wall.grid())?;
    p.grid().ensure_same_dims(intestine.grid())?;
    let cut = if p.values().iter().any(|&v| v > 0.0) {
        percentile_threshold(p, params.keep_percentile, Population::Nonzero)?
    } else {
        return Ok(ProbabilityVolume::zeros(p.grid().clone()));
    };
    let prox = proximity_field(wall, params.sigma_mm)?;
    let out = p
        .values()
        .iter()
        .zip(&prox)
        .zip(intestine.bits())
        .map(|((&v, &w), &inside)| {
            if inside || v < cut {
                0.0
            } else {
                ((v as f64 * w) as f32).min(v)
            }
        })
        .collect();
    Ok(ProbabilityVolume::from_parts(p.grid().clone(), out))
}
