use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{dilate, erode, threshold_at_least, threshold_range, StructuringElement};
use crate::volume::{BinaryMask, CtVolume};

pub const FAT_HU: (f64, f64) = (-500.0, -50.0);

/// Threshold to the fat window, then two erode/dilate cycles with a 3×3×3 cube.
pub fn fat_mask(vol: &CtVolume) -> BinaryMask {
    let mut m = threshold_range(vol, FAT_HU.0, FAT_HU.1).expect("fixed range is ordered");
    let cube = StructuringElement::cube(1).expect("radius 1");
    for _ in 0..2 {
        m = dilate(&erode(&m, cube, 1), cube, 1);
    }
    m
}

/// Everything denser than air.
pub fn body_mask(vol: &CtVolume) -> BinaryMask {
    threshold_at_least(vol, -500.0)
}

/// A borrowed axial slice of a mask.
#[derive(Debug, Clone, Copy)]
pub struct SliceMask<'a> {
    pub nx: usize,
    pub ny: usize,
    pub bits: &'a [bool],
}

impl<'a> SliceMask<'a> {
    pub fn new(nx: usize, ny: usize, bits: &'a [bool]) -> Result<Self> {
        if bits.len() != nx * ny {
            return Err(Error::invalid(format!(
                "slice of {nx}x{ny} needs {} pixels, got {}",
                nx * ny,
                bits.len()
            )));
        }
        Ok(Self { nx, ny, bits })
    }

    pub fn of(mask: &'a BinaryMask, z: usize) -> Self {
        let [nx, ny, _] = mask.dims();
        let len = nx * ny;
        Self {
            nx,
            ny,
            bits: &mask.bits()[z * len..(z + 1) * len],
        }
    }

    fn get(&self, x: usize, y: usize) -> bool {
        self.bits[x + self.nx * y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub theta: f64,
    /// Outer edge of the outermost fat band, 0 when the ray has no band.
    pub d_out: f64,
    /// Inner edge of that band, 0 when it reaches the centre.
    pub d_in: f64,
    /// `Σ (d_out² - d_in²)` over every fat run on the ray.
    pub all_runs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarScan {
    pub a_subcut: f64,
    pub a_total: f64,
    pub rays: Vec<Ray>,
}

/// Pixels on the digital line from `start` toward `(dx, dy)`, clipped to the slice.
fn bresenham(start: (i64, i64), end: (i64, i64), nx: usize, ny: usize) -> Vec<(usize, usize)> {
    let (mut x, mut y) = start;
    let dx = (end.0 - x).abs();
    let dy = -(end.1 - y).abs();
    let sx = if end.0 > x { 1 } else { -1 };
    let sy = if end.1 > y { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::new();
    while x >= 0 && y >= 0 && (x as usize) < nx && (y as usize) < ny {
        out.push((x as usize, y as usize));
        if x == end.0 && y == end.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// Minimum run length that counts as a fat band on a ray.
const MIN_RUN: usize = 2;

/// Cast `g` rays from `center` and integrate `½(d_out² - d_in²)Δθ` over the
/// outermost fat band of each ray (subcutaneous area) and over every fat
/// band (total area).
pub fn polar_subcutaneous_area(slice: SliceMask<'_>, center: [f64; 2], g: usize) -> Result<PolarScan> {
    if g < 8 {
        return Err(Error::invalid(format!("need at least 8 rays, got {g}")));
    }
    let (nx, ny) = (slice.nx, slice.ny);
    if !(center[0] >= 0.0 && center[1] >= 0.0 && center[0] <= (nx - 1) as f64 && center[1] <= (ny - 1) as f64) {
        return Err(Error::invalid(format!("polar centre {center:?} outside {nx}x{ny} slice")));
    }
    let start = (center[0].round() as i64, center[1].round() as i64);
    let reach = (nx + ny) as f64 * 2.0;
    let dtheta = std::f64::consts::TAU / g as f64;
    let mut rays = Vec::with_capacity(g);
    let (mut sub, mut tot) = (0.0, 0.0);
    for k in 0..g {
        let theta = k as f64 * dtheta;
        let end = (
            start.0 + (reach * theta.cos()).round() as i64,
            start.1 + (reach * theta.sin()).round() as i64,
        );
        let px = bresenham(start, end, nx, ny);
        let dist: Vec<f64> = px
            .iter()
            .map(|&(x, y)| ((x as f64 - center[0]).powi(2) + (y as f64 - center[1]).powi(2)).sqrt())
            .collect();
        let fat: Vec<bool> = px.iter().map(|&(x, y)| slice.get(x, y)).collect();
        let edge_out = |b: usize| {
            if b + 1 < dist.len() {
                0.5 * (dist[b] + dist[b + 1])
            } else {
                dist[b] + 0.5
            }
        };
        let edge_in = |a: usize| if a == 0 { 0.0 } else { 0.5 * (dist[a - 1] + dist[a]) };

        let mut band: Option<(f64, f64)> = None;
        let mut others = 0.0;
        let mut i = fat.len();
        while i > 0 {
            if !fat[i - 1] {
                i -= 1;
                continue;
            }
            let b = i - 1;
            let mut a = b;
            while a > 0 && fat[a - 1] {
                a -= 1;
            }
            if b - a + 1 >= MIN_RUN {
                let (o, n) = (edge_out(b), edge_in(a));
                if band.is_none() {
                    band = Some((o, n));
                } else {
                    others += o * o - n * n;
                }
            }
            i = a;
        }
        let (d_out, d_in) = band.unwrap_or((0.0, 0.0));
        let own = d_out * d_out - d_in * d_in;
        let all_runs = own + others;
        sub += own;
        tot += all_runs;
        rays.push(Ray { theta, d_out, d_in, all_runs });
    }
    Ok(PolarScan {
        a_subcut: 0.5 * sub * dtheta,
        a_total: 0.5 * tot * dtheta,
        rays,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceFat {
    pub z: usize,
    pub center: [f64; 2],
    pub fat_pixels: usize,
    pub a_total: f64,
    pub a_subcut: f64,
    /// `None` when the slice has no subcutaneous band and is left out.
    pub ratio: Option<f64>,
    pub rays: Vec<Ray>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FatResult {
    pub slices: Vec<SliceFat>,
    pub fat_ratio: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Slices skipped because `A_subcut = 0`.
    pub excluded: Vec<usize>,
}

/// Volumetric fat ratio `ΣA_total / ΣA_subcut - 1` over an inclusive slice range.
pub fn fat_ratio_volume(fat: &BinaryMask, body: &BinaryMask, z_range: [usize; 2], g: usize) -> Result<FatResult> {
    fat.grid().ensure_same_dims(body.grid())?;
    let [nx, ny, nz] = fat.dims();
    if z_range[0] > z_range[1] || z_range[1] >= nz {
        return Err(Error::invalid(format!("slice range {z_range:?} outside {nz} slices")));
    }
    let mut slices = Vec::new();
    let mut excluded = Vec::new();
    let (mut sum_tot, mut sum_sub) = (0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for z in z_range[0]..=z_range[1] {
        let bs = SliceMask::of(body, z);
        let (mut cx, mut cy, mut n) = (0.0, 0.0, 0usize);
        for y in 0..ny {
            for x in 0..nx {
                if bs.get(x, y) {
                    cx += x as f64;
                    cy += y as f64;
                    n += 1;
                }
            }
        }
        let fs = SliceMask::of(fat, z);
        let fat_pixels = fs.bits.iter().filter(|&&b| b).count();
        if n == 0 {
            excluded.push(z);
            continue;
        }
        let center = [cx / n as f64, cy / n as f64];
        let scan = polar_subcutaneous_area(fs, center, g)?;
        let ratio = (scan.a_subcut > 0.0).then(|| scan.a_total / scan.a_subcut - 1.0);
        match ratio {
            Some(r) => {
                sum_tot += scan.a_total;
                sum_sub += scan.a_subcut;
                lo = lo.min(r);
                hi = hi.max(r);
            }
            None => excluded.push(z),
        }
        slices.push(SliceFat {
            z,
            center,
            fat_pixels,
            a_total: scan.a_total,
            a_subcut: scan.a_subcut,
            ratio,
            rays: scan.rays,
        });
    }
    if sum_sub <= 0.0 {
        return Err(Error::EmptyPopulation(format!(
            "no slice in {z_range:?} has subcutaneous fat"
        )));
    }
    Ok(FatResult {
        slices,
        fat_ratio: sum_tot / sum_sub - 1.0,
        min_ratio: lo,
        max_ratio: hi,
        excluded,
    })
}
