use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::volume::{BinaryMask, CtVolume, Grid};

/// Solid shapes in millimetre coordinates. Voxel `(i, j, k)` has its centre
/// at `(i·sx, j·sy, k·sz)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Sphere {
        center: [f64; 3],
        radius: f64,
        hu: f32,
    },
    /// Finite cylinder around an arbitrary axis direction.
    Cylinder {
        center: [f64; 3],
        axis: [f64; 3],
        radius: f64,
        half_length: f64,
        hu: f32,
    },
    /// Ring `inner <= r <= outer` in the axial plane, `|z - cz| <= half_height`.
    AnnulusSlab {
        center: [f64; 3],
        inner_radius: f64,
        outer_radius: f64,
        half_height: f64,
        hu: f32,
    },
    Box {
        min: [f64; 3],
        max: [f64; 3],
        hu: f32,
    },
}

impl Primitive {
    pub fn hu(&self) -> f32 {
        match *self {
            Primitive::Sphere { hu, .. }
            | Primitive::Cylinder { hu, .. }
            | Primitive::AnnulusSlab { hu, .. }
            | Primitive::Box { hu, .. } => hu,
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        match *self {
            Primitive::Sphere { center, radius, .. } => dist2(p, center) <= radius * radius,
            Primitive::Cylinder {
                center,
                axis,
                radius,
                half_length,
                ..
            } => {
                let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
                let u = axis.map(|a| a / norm);
                let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
                let along = d[0] * u[0] + d[1] * u[1] + d[2] * u[2];
                let radial2 = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) - along * along;
                along.abs() <= half_length && radial2 <= radius * radius
            }
            Primitive::AnnulusSlab {
                center,
                inner_radius,
                outer_radius,
                half_height,
                ..
            } => {
                let r2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                (p[2] - center[2]).abs() <= half_height
                    && r2 >= inner_radius * inner_radius
                    && r2 <= outer_radius * outer_radius
            }
            Primitive::Box { min, max, .. } => (0..3).all(|a| p[a] >= min[a] && p[a] <= max[a]),
        }
    }

    /// Voxels whose centres lie inside the primitive.
    pub fn mask(&self, grid: &Grid) -> BinaryMask {
        let s = grid.spacing;
        BinaryMask::from_fn(grid.clone(), |x, y, z| {
            self.contains([x as f64 * s[0], y as f64 * s[1], z as f64 * s[2]])
        })
    }
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub background_hu: f32,
    /// Later primitives overwrite earlier ones.
    pub primitives: Vec<Primitive>,
}

impl PhantomSpec {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], background_hu: f32) -> Self {
        Self {
            dims,
            spacing,
            background_hu,
            primitives: Vec::new(),
        }
    }

    pub fn with(mut self, p: Primitive) -> Self {
        self.primitives.push(p);
        self
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dims, self.spacing)
    }
}

pub fn make_phantom(spec: &PhantomSpec) -> Result<CtVolume> {
    let grid = spec.grid()?;
    let s = grid.spacing;
    let [nx, ny, nz] = grid.dims;
    let mut voxels = Vec::with_capacity(grid.len());
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = [x as f64 * s[0], y as f64 * s[1], z as f64 * s[2]];
                let hu = spec
                    .primitives
                    .iter()
                    .rev()
                    .find(|prim| prim.contains(p))
                    .map_or(spec.background_hu, Primitive::hu);
                voxels.push(hu);
            }
        }
    }
    CtVolume::new(grid, voxels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::threshold_range;

    #[test]
    fn empty_spec_is_constant() {
        let v = make_phantom(&PhantomSpec::new([4, 5, 6], [1.0; 3], -1000.0)).unwrap();
        assert!(v.voxels().iter().all(|&h| h == -1000.0));
    }

    #[test]
    fn later_primitives_win() {
        let spec = PhantomSpec::new([10, 10, 10], [1.0; 3], 0.0)
            .with(Primitive::Box { min: [0.0; 3], max: [9.0; 3], hu: 10.0 })
            .with(Primitive::Sphere { center: [5.0; 3], radius: 2.0, hu: 20.0 });
        let v = make_phantom(&spec).unwrap();
        assert_eq!(v.get(5, 5, 5), 20.0);
        assert_eq!(v.get(0, 0, 0), 10.0);
    }

    #[test]
    fn sphere_volume_matches_analytic() {
        let r = 12.0;
        let spec = PhantomSpec::new([32, 32, 32], [1.0; 3], 0.0)
            .with(Primitive::Sphere { center: [15.5, 15.3, 15.7], radius: r, hu: 100.0 });
        let v = make_phantom(&spec).unwrap();
        let count = v.voxels().iter().filter(|&&h| h == 100.0).count() as f64;
        let analytic = 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
        assert!((count - analytic).abs() / analytic < 0.03, "{count} vs {analytic}");
    }

    #[test]
    fn annulus_is_recovered_by_threshold() {
        let ring = Primitive::AnnulusSlab {
            center: [20.0, 20.0, 2.0],
            inner_radius: 12.0,
            outer_radius: 17.0,
            half_height: 10.0,
            hu: -80.0,
        };
        let spec = PhantomSpec::new([41, 41, 5], [1.0; 3], -1000.0)
            .with(Primitive::Sphere { center: [20.0, 20.0, 2.0], radius: 17.5, hu: 40.0 })
            .with(ring.clone());
        let v = make_phantom(&spec).unwrap();
        let m = threshold_range(&v, -500.0, -50.0).unwrap();
        assert_eq!(m, ring.mask(v.grid()));
    }
}
