use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{CtVolume, Grid};

/// Fill value for samples that fall outside the field of view.
pub const AIR_HU: f32 = -1000.0;

const SNAP: f64 = 1e-9;

type Mat3 = [[f64; 3]; 3];

/// `R = Rz(γ) Ry(β) Rx(α)`.
pub fn rotation_matrix(alpha: f64, beta: f64, gamma: f64) -> Mat3 {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]];
    let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let rz = [[cg, -sg, 0.0], [sg, cg, 0.0], [0.0, 0.0, 1.0]];
    matmul(&rz, &matmul(&ry, &rx))
}

fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn field_center(grid: &Grid) -> [f64; 3] {
    [0, 1, 2].map(|a| (grid.dims[a] - 1) as f64 * grid.spacing[a] / 2.0)
}

/// Trilinear lookup at fractional voxel coordinates.
fn sample(vol: &CtVolume, q: [f64; 3]) -> f32 {
    let dims = vol.dims();
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        let mut c = q[a];
        let r = c.round();
        if (c - r).abs() < SNAP {
            c = r;
        }
        let hi = (dims[a] - 1) as f64;
        if !(0.0..=hi).contains(&c) {
            return AIR_HU;
        }
        let i = (c.floor() as usize).min(dims[a].saturating_sub(2));
        base[a] = i;
        frac[a] = c - i as f64;
    }
    let v = vol.voxels();
    let [nx, ny, _] = dims;
    let at = |dx: usize, dy: usize, dz: usize| -> f64 {
        let x = (base[0] + dx).min(dims[0] - 1);
        let y = (base[1] + dy).min(dims[1] - 1);
        let z = (base[2] + dz).min(dims[2] - 1);
        v[x + nx * (y + ny * z)] as f64
    };
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + t * (b - a) };
    let [tx, ty, tz] = frac;
    let c00 = lerp(at(0, 0, 0), at(1, 0, 0), tx);
    let c10 = lerp(at(0, 1, 0), at(1, 1, 0), tx);
    let c01 = lerp(at(0, 0, 1), at(1, 0, 1), tx);
    let c11 = lerp(at(0, 1, 1), at(1, 1, 1), tx);
    let c0 = lerp(c00, c10, ty);
    let c1 = lerp(c01, c11, ty);
    lerp(c0, c1, tz) as f32
}

/// Backward warp: output voxel at millimetre position `p` reads the input at `src(p)`.
fn warp(vol: &CtVolume, src: impl Fn([f64; 3]) -> [f64; 3] + Sync) -> CtVolume {
    let grid = vol.grid().clone();
    let [nx, ny, _] = grid.dims;
    let s = grid.spacing;
    let mut out = vec![0.0f32; grid.len()];
    out.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
        for y in 0..ny {
            for x in 0..nx {
                let p = [x as f64 * s[0], y as f64 * s[1], z as f64 * s[2]];
                let m = src(p);
                slab[x + nx * y] = sample(vol, [m[0] / s[0], m[1] / s[1], m[2] / s[2]]);
            }
        }
    });
    CtVolume::from_parts(grid, out)
}

/// Rigid rotation about `center` (mm; defaults to the field centre).
pub fn rotate_rigid(vol: &CtVolume, angles: [f64; 3], center: Option<[f64; 3]>) -> CtVolume {
    if angles == [0.0; 3] {
        return vol.clone();
    }
    let r = rotation_matrix(angles[0], angles[1], angles[2]);
    let c = center.unwrap_or_else(|| field_center(vol.grid()));
    warp(vol, |p| {
        let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
        // Rᵀ d
        [0, 1, 2].map(|i| c[i] + r[0][i] * d[0] + r[1][i] * d[1] + r[2][i] * d[2])
    })
}

/// Uniform magnification by `s` about `center`.
pub fn scale_uniform(vol: &CtVolume, s: f64, center: Option<[f64; 3]>) -> Result<CtVolume> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::invalid(format!("scale must be positive, got {s}")));
    }
    if s == 1.0 {
        return Ok(vol.clone());
    }
    let c = center.unwrap_or_else(|| field_center(vol.grid()));
    Ok(warp(vol, |p| [0, 1, 2].map(|i| c[i] + (p[i] - c[i]) / s)))
}

/// Shift content by `delta` mm.
pub fn translate(vol: &CtVolume, delta: [f64; 3]) -> CtVolume {
    if delta == [0.0; 3] {
        return vol.clone();
    }
    warp(vol, |p| [0, 1, 2].map(|i| p[i] - delta[i]))
}

/// The per-axis shift `random_translate` draws for this seed.
pub fn sample_shift(max_shift: f64, seed: u64) -> Result<[f64; 3]> {
    if !(max_shift.is_finite() && max_shift >= 0.0) {
        return Err(Error::invalid(format!("max_shift must be >= 0, got {max_shift}")));
    }
    if max_shift == 0.0 {
        return Ok([0.0; 3]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok([0; 3].map(|_| rng.random_range(-max_shift..=max_shift)))
}

pub fn random_translate(vol: &CtVolume, max_shift: f64, seed: u64) -> Result<CtVolume> {
    Ok(translate(vol, sample_shift(max_shift, seed)?))
}

/// Cubic B-spline control lattice. Control point `i` sits at `(i - 1)·spacing`
/// along each axis, so the lattice starts one cell before the volume origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticGrid {
    pub counts: [usize; 3],
    pub spacing_mm: [f64; 3],
    /// Displacement in mm per control point, x-fastest.
    pub displacements: Vec<[f64; 3]>,
}

impl ElasticGrid {
    /// Smallest lattice with the given spacing that covers `grid`.
    pub fn covering(grid: &Grid, spacing_mm: [f64; 3]) -> Self {
        let counts = [0, 1, 2].map(|a| {
            let extent = (grid.dims[a] - 1) as f64 * grid.spacing[a];
            (extent / spacing_mm[a]).floor() as usize + 4
        });
        let n = counts.iter().product();
        Self {
            counts,
            spacing_mm,
            displacements: vec![[0.0; 3]; n],
        }
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.counts[0] * (j + self.counts[1] * k)
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.counts.iter().any(|&c| c < 4) {
            return Err(Error::invalid(format!(
                "elastic control grid needs at least 4 points per axis, got {:?}",
                self.counts
            )));
        }
        if self.spacing_mm.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("elastic control spacing must be positive"));
        }
        if self.displacements.len() != self.counts.iter().product::<usize>() {
            return Err(Error::invalid("elastic displacement count does not match grid"));
        }
        if self.displacements.iter().flatten().any(|d| !d.is_finite()) {
            return Err(Error::NonFinite("elastic displacements".into()));
        }
        for a in 0..3 {
            let extent = (grid.dims[a] - 1) as f64 * grid.spacing[a];
            let top = (extent / self.spacing_mm[a] + 1.0).floor() as usize + 2;
            if top >= self.counts[a] {
                return Err(Error::invalid(format!(
                    "elastic control grid does not cover axis {a}: need {} points, have {}",
                    top + 1,
                    self.counts[a]
                )));
            }
        }
        Ok(())
    }

    /// Displacement `u(p)` at a millimetre position inside the covered field.
    pub fn displacement_at(&self, p: [f64; 3]) -> [f64; 3] {
        let mut base = [0usize; 3];
        let mut w = [[0.0f64; 4]; 3];
        for a in 0..3 {
            let u = p[a] / self.spacing_mm[a] + 1.0;
            let i = u.floor();
            base[a] = i as usize - 1;
            w[a] = bspline_weights(u - i);
        }
        let mut out = [0.0; 3];
        for (dk, wk) in w[2].iter().enumerate() {
            for (dj, wj) in w[1].iter().enumerate() {
                for (di, wi) in w[0].iter().enumerate() {
                    let d = self.displacements
                        [self.index(base[0] + di, base[1] + dj, base[2] + dk)];
                    let wt = wi * wj * wk;
                    for c in 0..3 {
                        out[c] += wt * d[c];
                    }
                }
            }
        }
        out
    }
}

fn bspline_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        (1.0 - t).powi(3) / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

/// Free-form deformation: output at `x` samples the input at `x - u(x)`.
pub fn elastic_deform(vol: &CtVolume, phi: &ElasticGrid) -> Result<CtVolume> {
    phi.validate(vol.grid())?;
    if phi.displacements.iter().all(|d| *d == [0.0; 3]) {
        return Ok(vol.clone());
    }
    Ok(warp(vol, |p| {
        let u = phi.displacement_at(p);
        [p[0] - u[0], p[1] - u[1], p[2] - u[2]]
    }))
}

/// Additive Gaussian noise. Voxel `i` always consumes the same slice of the
/// ChaCha keystream, so the result does not depend on the thread count.
pub fn add_noise(vol: &CtVolume, sigma: f64, seed: u64) -> Result<CtVolume> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(vol.clone());
    }
    const CHUNK: usize = 4096;
    let root = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vol.voxels().to_vec();
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let mut rng = root.clone();
        rng.set_word_pos(4 * (c * CHUNK) as u128);
        for v in chunk.iter_mut() {
            let u1 = 1.0 - unit(rng.next_u64());
            let u2 = unit(rng.next_u64());
            let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            *v = (*v as f64 + sigma * z) as f32;
        }
    });
    Ok(CtVolume::from_parts(vol.grid().clone(), out))
}

fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSpec {
    /// Euler angles (α, β, γ) in radians.
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
    pub scale: f64,
    /// Rotation and scaling centre in mm; `None` means the field centre.
    pub center: Option<[f64; 3]>,
    pub elastic: Option<ElasticGrid>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            rotation: [0.0; 3],
            translation: [0.0; 3],
            scale: 1.0,
            center: None,
            elastic: None,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Rotation, scaling, elastic warp, translation, then noise.
pub fn compose_augment(vol: &CtVolume, spec: &AugmentSpec) -> Result<CtVolume> {
    if !(spec.scale.is_finite() && spec.scale > 0.0) {
        return Err(Error::invalid(format!("scale must be positive, got {}", spec.scale)));
    }
    if let Some(phi) = &spec.elastic {
        phi.validate(vol.grid())?;
    }
    let mut out = rotate_rigid(vol, spec.rotation, spec.center);
    out = scale_uniform(&out, spec.scale, spec.center)?;
    if let Some(phi) = &spec.elastic {
        out = elastic_deform(&out, phi)?;
    }
    out = translate(&out, spec.translation);
    add_noise(&out, spec.noise_sigma, spec.seed)
}
