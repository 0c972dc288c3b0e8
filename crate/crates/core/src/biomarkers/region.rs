use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::union_masks;
use crate::volume::{BinaryMask, Grid, ProbabilityVolume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LateralRule {
    /// Voxel columns with `x < split` (lower x index).
    Left { split: f64 },
    /// Voxel columns with `x >= split`.
    Right { split: f64 },
    /// Half-open index bands in x and y.
    CentralBand { x: [usize; 2], y: [usize; 2] },
    All,
}

impl LateralRule {
    fn admits(&self, x: usize, y: usize) -> bool {
        match *self {
            LateralRule::Left { split } => (x as f64) < split,
            LateralRule::Right { split } => (x as f64) >= split,
            LateralRule::CentralBand { x: bx, y: by } => {
                x >= bx[0] && x < bx[1] && y >= by[0] && y < by[1]
            }
            LateralRule::All => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub name: String,
    /// Inclusive axial slice interval.
    pub z_range: [usize; 2],
    pub lateral: LateralRule,
}

impl RegionSpec {
    pub fn mask(&self, grid: &Grid) -> Result<BinaryMask> {
        let nz = grid.dims[2];
        if self.z_range[0] > self.z_range[1] || self.z_range[1] >= nz {
            return Err(Error::invalid(format!(
                "region {} z range {:?} outside volume of {nz} slices",
                self.name, self.z_range
            )));
        }
        let [z0, z1] = self.z_range;
        Ok(BinaryMask::from_fn(grid.clone(), |x, y, z| {
            z >= z0 && z <= z1 && self.lateral.admits(x, y)
        }))
    }
}

/// `(Σ P, Σ P / voxel count)` over the region.
pub fn region_aggregate(p: &ProbabilityVolume, region: &RegionSpec) -> Result<(f64, f64)> {
    let mask = region.mask(p.grid())?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (&v, &b) in p.values().iter().zip(mask.bits()) {
        if b {
            sum += v as f64;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyPopulation(format!("region {}", region.name)));
    }
    Ok((sum, sum / count as f64))
}

/// Vertebra masks and the body outline used to place the named regions.
#[derive(Debug, Clone, Copy)]
pub struct Landmarks<'a> {
    pub l3: &'a BinaryMask,
    pub l4: &'a BinaryMask,
    pub l5: &'a BinaryMask,
    pub s1: &'a BinaryMask,
    pub body: &'a BinaryMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regions {
    pub l3s1_left: RegionSpec,
    pub l3s1_right: RegionSpec,
    pub anterior_central: RegionSpec,
    pub l4l5: RegionSpec,
}

fn span(masks: &[&BinaryMask], what: &str) -> Result<[usize; 2]> {
    let u = union_masks(masks)?;
    u.z_extent()
        .map(|(a, b)| [a, b])
        .ok_or_else(|| Error::EmptyPopulation(format!("{what} vertebra masks")))
}

impl Landmarks<'_> {
    pub fn regions(&self) -> Result<Regions> {
        let grid = self.body.grid();
        for m in [self.l3, self.l4, self.l5, self.s1] {
            grid.ensure_same_dims(m.grid())?;
        }
        let l3s1 = span(&[self.l3, self.s1], "L3/S1")?;
        let l4l5 = span(&[self.l4, self.l5], "L4/L5")?;

        let [nx, ny, _] = grid.dims;
        let (mut sx, mut n) = (0.0, 0usize);
        let (mut lo, mut hi) = ([usize::MAX; 2], [0usize; 2]);
        for z in l3s1[0]..=l3s1[1] {
            for y in 0..ny {
                for x in 0..nx {
                    if self.body.get(x, y, z) {
                        sx += x as f64;
                        n += 1;
                        lo = [lo[0].min(x), lo[1].min(y)];
                        hi = [hi[0].max(x), hi[1].max(y)];
                    }
                }
            }
        }
        if n == 0 {
            return Err(Error::EmptyPopulation("body mask within L3-S1".into()));
        }
        let split = sx / n as f64;
        let third = |a: usize| {
            let len = hi[a] - lo[a] + 1;
            [lo[a] + len / 3, lo[a] + len - len / 3]
        };
        Ok(Regions {
            l3s1_left: RegionSpec {
                name: "L3S1_left".into(),
                z_range: l3s1,
                lateral: LateralRule::Left { split },
            },
            l3s1_right: RegionSpec {
                name: "L3S1_right".into(),
                z_range: l3s1,
                lateral: LateralRule::Right { split },
            },
            anterior_central: RegionSpec {
                name: "anterior_central".into(),
                z_range: l3s1,
                lateral: LateralRule::CentralBand {
                    x: third(0),
                    y: third(1),
                },
            },
            l4l5: RegionSpec {
                name: "L4L5".into(),
                z_range: l4l5,
                lateral: LateralRule::All,
            },
        })
    }
}
