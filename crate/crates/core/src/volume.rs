//! Voxel grids and the three volume flavours the pipeline passes around.
//!
//! Voxels are stored x-fastest: `index = x + nx * (y + ny * z)`, the same
//! order NIfTI uses on disk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Affine = [[f64; 4]; 4];

/// Geometry shared by every volume on the same lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    /// Millimetres per voxel along each axis.
    pub spacing: [f64; 3],
    /// Voxel index to world (mm) transform.
    pub affine: Affine,
}

impl Grid {
    /// Grid with a diagonal affine built from `spacing`.
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let mut affine = [[0.0; 4]; 4];
        for a in 0..3 {
            affine[a][a] = spacing[a];
        }
        affine[3][3] = 1.0;
        Self::with_affine(dims, spacing, affine)
    }

    pub fn with_affine(dims: [usize; 3], spacing: [f64; 3], affine: Affine) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("dims must be positive, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::invalid(format!(
                "spacing must be positive and finite, got {spacing:?}"
            )));
        }
        if affine.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("affine contains non-finite entries"));
        }
        Ok(Self {
            dims,
            spacing,
            affine,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    /// Number of voxels in one axial (z) slice.
    #[inline]
    pub fn slice_len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    /// Volume of one voxel in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn ensure_same_dims(&self, other: &Grid) -> Result<()> {
        if self.dims == other.dims {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: self.dims,
                found: other.dims,
            })
        }
    }
}

/// CT intensities in Hounsfield units.
#[derive(Debug, Clone, PartialEq)]
pub struct CtVolume {
    grid: Grid,
    voxels: Vec<f32>,
}

impl CtVolume {
    pub fn new(grid: Grid, voxels: Vec<f32>) -> Result<Self> {
        if voxels.len() != grid.len() {
            return Err(Error::invalid(format!(
                "voxel count {} does not match dims {:?}",
                voxels.len(),
                grid.dims
            )));
        }
        if let Some(i) = voxels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("HU at voxel {i}")));
        }
        Ok(Self { grid, voxels })
    }

    pub fn filled(grid: Grid, hu: f32) -> Self {
        let n = grid.len();
        Self {
            grid,
            voxels: vec![hu; n],
        }
    }

    /// Crate-internal constructor for filters that guarantee finiteness.
    pub(crate) fn from_parts(grid: Grid, voxels: Vec<f32>) -> Self {
        debug_assert_eq!(voxels.len(), grid.len());
        Self { grid, voxels }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[self.grid.index(x, y, z)]
    }

    pub fn into_voxels(self) -> Vec<f32> {
        self.voxels
    }
}

/// One flag per voxel; `true` is inside.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    grid: Grid,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(grid: Grid, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.len() {
            return Err(Error::invalid(format!(
                "mask length {} does not match dims {:?}",
                bits.len(),
                grid.dims
            )));
        }
        Ok(Self { grid, bits })
    }

    pub fn empty(grid: Grid) -> Self {
        let n = grid.len();
        Self {
            grid,
            bits: vec![false; n],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let [nx, ny, nz] = grid.dims;
        let mut bits = Vec::with_capacity(grid.len());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    bits.push(f(x, y, z));
                }
            }
        }
        Self { grid, bits }
    }

    pub(crate) fn from_parts(grid: Grid, bits: Vec<bool>) -> Self {
        debug_assert_eq!(bits.len(), grid.len());
        Self { grid, bits }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[self.grid.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.grid.index(x, y, z);
        self.bits[i] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask::from_parts(self.grid.clone(), self.bits.iter().map(|b| !b).collect())
    }

    /// Voxelwise `self AND NOT other`.
    pub fn minus(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.grid.ensure_same_dims(&other.grid)?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a && !b)
            .collect();
        Ok(BinaryMask::from_parts(self.grid.clone(), bits))
    }

    pub fn intersect(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.grid.ensure_same_dims(&other.grid)?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a && b)
            .collect();
        Ok(BinaryMask::from_parts(self.grid.clone(), bits))
    }

    /// Inclusive z-extent of the set voxels, `None` for an empty mask.
    pub fn z_extent(&self) -> Option<(usize, usize)> {
        let per_slice = self.grid.slice_len();
        let mut lo = None;
        let mut hi = None;
        for (z, slice) in self.bits.chunks(per_slice).enumerate() {
            if slice.iter().any(|&b| b) {
                lo.get_or_insert(z);
                hi = Some(z);
            }
        }
        lo.zip(hi)
    }
}

/// Per-voxel probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    grid: Grid,
    values: Vec<f32>,
}

impl ProbabilityVolume {
    pub fn new(grid: Grid, values: Vec<f32>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "value count {} does not match dims {:?}",
                values.len(),
                grid.dims
            )));
        }
        if let Some(i) = values
            .iter()
            .position(|v| !(v.is_finite() && (0.0..=1.0).contains(v)))
        {
            return Err(Error::invalid(format!(
                "probability {} at voxel {i} outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub(crate) fn from_parts(grid: Grid, values: Vec<f32>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        debug_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.values[self.grid.index(x, y, z)]
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum()
    }
}

/// Window HU into display intensity: `clamp((hu - lo) / (hi - lo), 0, 1)`.
pub fn window_value(hu: f32, lo: f64, hi: f64) -> f32 {
    let t = (hu as f64 - lo) / (hi - lo);
    t.clamp(0.0, 1.0) as f32
}

/// Map a CT volume through an HU display window.
pub fn window_hu(vol: &CtVolume, lo: f64, hi: f64) -> Result<ProbabilityVolume> {
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(Error::invalid(format!(
            "window requires lo < hi, got ({lo}, {hi})"
        )));
    }
    let values = vol
        .voxels()
        .iter()
        .map(|&hu| window_value(hu, lo, hi))
        .collect();
    Ok(ProbabilityVolume::from_parts(vol.grid().clone(), values))
}
