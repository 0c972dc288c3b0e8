//! Binary mask machinery: range thresholds, erosion/dilation, unions,
//! connected components and order-statistic thresholds.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, CtVolume, Grid, ProbabilityVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementShape {
    /// Full `(2r+1)^3` block.
    Cube,
    /// Centre plus axis-aligned arms of length `r`.
    Cross,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuringElement {
    pub shape: ElementShape,
    pub radius: usize,
}

impl StructuringElement {
    pub fn new(shape: ElementShape, radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::invalid("structuring element radius must be >= 1"));
        }
        Ok(Self { shape, radius })
    }

    pub fn cube(radius: usize) -> Result<Self> {
        Self::new(ElementShape::Cube, radius)
    }

    pub fn cross(radius: usize) -> Result<Self> {
        Self::new(ElementShape::Cross, radius)
    }

    /// Voxel offsets covered by the element, origin included.
    pub fn offsets(&self) -> Vec<[isize; 3]> {
        let r = self.radius as isize;
        match self.shape {
            ElementShape::Cube => {
                let mut out = Vec::new();
                for dz in -r..=r {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            out.push([dx, dy, dz]);
                        }
                    }
                }
                out
            }
            ElementShape::Cross => {
                let mut out = vec![[0, 0, 0]];
                for d in 1..=r {
                    for axis in 0..3 {
                        for sign in [-1, 1] {
                            let mut o = [0; 3];
                            o[axis] = sign * d;
                            out.push(o);
                        }
                    }
                }
                out
            }
        }
    }
}

/// `lo <= HU <= hi`, both ends inclusive.
pub fn threshold_range(vol: &CtVolume, lo: f64, hi: f64) -> Result<BinaryMask> {
    if !(lo <= hi) {
        return Err(Error::invalid(format!("threshold range [{lo}, {hi}] is empty")));
    }
    let bits = vol
        .voxels()
        .iter()
        .map(|&v| {
            let v = v as f64;
            lo <= v && v <= hi
        })
        .collect();
    Ok(BinaryMask::from_parts(vol.grid().clone(), bits))
}

/// Voxels with `HU >= t`.
pub fn threshold_at_least(vol: &CtVolume, t: f64) -> BinaryMask {
    let bits = vol.voxels().iter().map(|&v| v as f64 >= t).collect();
    BinaryMask::from_parts(vol.grid().clone(), bits)
}

#[derive(Clone, Copy, PartialEq)]
enum Op {
    Erode,
    Dilate,
}

/// One pass of a 1D box min/max along `axis` with radius `r`.
/// Out-of-bounds samples count as background for erosion and are skipped for
/// dilation.
fn box_pass(bits: &[bool], dims: [usize; 3], axis: usize, r: usize, op: Op) -> Vec<bool> {
    let n = dims[axis];
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let mut out = vec![false; bits.len()];
    let mut line = vec![false; n];
    let [nx, ny, nz] = dims;
    let (outer_a, outer_b) = match axis {
        0 => (ny, nz),
        1 => (nx, nz),
        _ => (nx, ny),
    };
    // prefix count of set voxels along the line
    let mut prefix = vec![0usize; n + 1];
    for b in 0..outer_b {
        for a in 0..outer_a {
            let start = match axis {
                0 => a * nx + b * nx * ny,
                1 => a + b * nx * ny,
                _ => a + b * nx,
            };
            for (i, slot) in line.iter_mut().enumerate() {
                *slot = bits[start + i * stride];
            }
            for i in 0..n {
                prefix[i + 1] = prefix[i] + line[i] as usize;
            }
            for i in 0..n {
                let lo = i.saturating_sub(r);
                let hi = (i + r).min(n - 1);
                let set = prefix[hi + 1] - prefix[lo];
                out[start + i * stride] = match op {
                    Op::Dilate => set > 0,
                    Op::Erode => i >= r && i + r < n && set == 2 * r + 1,
                };
            }
        }
    }
    out
}

fn offset_pass(mask: &BinaryMask, offsets: &[[isize; 3]], op: Op) -> Vec<bool> {
    let grid = mask.grid();
    let [nx, ny, nz] = grid.dims.map(|d| d as isize);
    let bits = mask.bits();
    let mut out = vec![false; bits.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let mut acc = op == Op::Erode;
                for o in offsets {
                    let (px, py, pz) = (x + o[0], y + o[1], z + o[2]);
                    let inside = px >= 0 && py >= 0 && pz >= 0 && px < nx && py < ny && pz < nz;
                    let v = inside
                        && bits[grid.index(px as usize, py as usize, pz as usize)];
                    match op {
                        Op::Erode if !v => {
                            acc = false;
                            break;
                        }
                        Op::Dilate if v => {
                            acc = true;
                            break;
                        }
                        _ => {}
                    }
                }
                out[grid.index(x as usize, y as usize, z as usize)] = acc;
            }
        }
    }
    out
}

fn apply(mask: &BinaryMask, elem: StructuringElement, iters: usize, op: Op) -> BinaryMask {
    let grid = mask.grid().clone();
    let mut bits = mask.bits().to_vec();
    let offsets = match elem.shape {
        ElementShape::Cube => Vec::new(),
        ElementShape::Cross => elem.offsets(),
    };
    for _ in 0..iters {
        bits = match elem.shape {
            ElementShape::Cube => {
                let mut b = bits;
                for axis in 0..3 {
                    b = box_pass(&b, grid.dims, axis, elem.radius, op);
                }
                b
            }
            ElementShape::Cross => {
                let m = BinaryMask::from_parts(grid.clone(), bits);
                offset_pass(&m, &offsets, op)
            }
        };
    }
    BinaryMask::from_parts(grid, bits)
}

/// Erosion repeated `iters` times; voxels outside the grid are background.
pub fn erode(mask: &BinaryMask, elem: StructuringElement, iters: usize) -> BinaryMask {
    apply(mask, elem, iters, Op::Erode)
}

/// Dilation repeated `iters` times; the result is clipped to the grid.
pub fn dilate(mask: &BinaryMask, elem: StructuringElement, iters: usize) -> BinaryMask {
    apply(mask, elem, iters, Op::Dilate)
}

/// Erosion followed by dilation with the same element.
pub fn open(mask: &BinaryMask, elem: StructuringElement, iters: usize) -> BinaryMask {
    dilate(&erode(mask, elem, iters), elem, iters)
}

/// Voxelwise OR of grid-compatible masks.
pub fn union_masks(masks: &[&BinaryMask]) -> Result<BinaryMask> {
    let first = masks
        .first()
        .ok_or_else(|| Error::invalid("union of zero masks"))?;
    let mut bits = first.bits().to_vec();
    for m in &masks[1..] {
        first.grid().ensure_same_dims(m.grid())?;
        for (acc, &b) in bits.iter_mut().zip(m.bits()) {
            *acc |= b;
        }
    }
    Ok(BinaryMask::from_parts(first.grid().clone(), bits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbours.
    Six,
    /// Face, edge and corner neighbours.
    TwentySix,
}

impl Connectivity {
    fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    /// 1-based label, ordered by the raster position of the first voxel.
    pub label: u32,
    pub voxel_count: usize,
    /// Inclusive `[min, max]` corner indices.
    pub bbox: [[usize; 3]; 2],
}

#[derive(Debug, Clone)]
pub struct Labeling {
    /// 0 for background, else the component label.
    pub labels: Vec<u32>,
    pub components: Vec<Component>,
}

/// Label connected foreground regions by breadth-first flood fill.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> Labeling {
    let grid = mask.grid();
    let dims = grid.dims.map(|d| d as isize);
    let bits = mask.bits();
    let offsets = connectivity.offsets();
    let mut labels = vec![0u32; bits.len()];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();

    for seed in 0..bits.len() {
        if !bits[seed] || labels[seed] != 0 {
            continue;
        }
        let label = components.len() as u32 + 1;
        let c = grid.coords(seed);
        let mut comp = Component {
            label,
            voxel_count: 0,
            bbox: [c, c],
        };
        labels[seed] = label;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            let p = grid.coords(i);
            comp.voxel_count += 1;
            for a in 0..3 {
                comp.bbox[0][a] = comp.bbox[0][a].min(p[a]);
                comp.bbox[1][a] = comp.bbox[1][a].max(p[a]);
            }
            for o in &offsets {
                let q = [p[0] as isize + o[0], p[1] as isize + o[1], p[2] as isize + o[2]];
                if (0..3).any(|a| q[a] < 0 || q[a] >= dims[a]) {
                    continue;
                }
                let j = grid.index(q[0] as usize, q[1] as usize, q[2] as usize);
                if bits[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        components.push(comp);
    }
    Labeling { labels, components }
}

pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Component> {
    label_components(mask, connectivity).components
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Population {
    All,
    Nonzero,
}

/// Nearest-rank percentile: the smallest value with at least `p`% of the
/// population at or below it.
pub fn percentile_of(values: &mut [f32], p: f64) -> Result<f32> {
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::invalid(format!("percentile {p} outside [0, 100]")));
    }
    if values.is_empty() {
        return Err(Error::EmptyPopulation("percentile of no values".into()));
    }
    let n = values.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    let k = rank.clamp(1, n) - 1;
    let (_, v, _) = values.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    Ok(*v)
}

pub fn percentile_threshold(prob: &ProbabilityVolume, p: f64, over: Population) -> Result<f32> {
    let mut pop: Vec<f32> = match over {
        Population::All => prob.values().to_vec(),
        Population::Nonzero => prob.values().iter().copied().filter(|&v| v != 0.0).collect(),
    };
    if pop.is_empty() {
        return Err(Error::EmptyPopulation(format!("{over:?} voxels")));
    }
    percentile_of(&mut pop, p)
}

/// Mask bounding the voxels within `margin` of any grid face.
pub fn border_mask(grid: &Grid, margin: usize) -> BinaryMask {
    let [nx, ny, nz] = grid.dims;
    BinaryMask::from_fn(grid.clone(), |x, y, z| {
        x < margin || y < margin || z < margin || x + margin >= nx || y + margin >= ny || z + margin >= nz
    })
}
