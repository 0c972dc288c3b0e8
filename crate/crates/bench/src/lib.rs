//! Deterministic inputs shared by the benchmarks.

use exactct_core::ml::Dataset;
use exactct_core::synth::{make_phantom, PhantomSpec, Primitive};
use exactct_core::{BinaryMask, CtVolume, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Soft-tissue cube of side `n` with a bright tube along z.
pub fn tube_volume(n: usize) -> CtVolume {
    let c = (n / 2) as f64;
    let spec = PhantomSpec::new([n, n, n], [1.0; 3], 40.0).with(Primitive::Cylinder {
        center: [c, c, c],
        axis: [0.0, 0.0, 1.0],
        radius: 3.0,
        half_length: n as f64,
        hu: 250.0,
    });
    make_phantom(&spec).expect("valid phantom")
}

/// Axial body section: soft tissue, a subcutaneous fat ring and a visceral fat disk.
pub fn fat_volume(n: usize, nz: usize) -> CtVolume {
    let c = (n / 2) as f64;
    let r = c * 0.9;
    let cyl = |radius: f64, hu: f32| Primitive::Cylinder {
        center: [c, c, 0.0],
        axis: [0.0, 0.0, 1.0],
        radius,
        half_length: 2.0 * nz as f64,
        hu,
    };
    let spec = PhantomSpec::new([n, n, nz], [1.0; 3], -1000.0)
        .with(cyl(r, 40.0))
        .with(Primitive::AnnulusSlab {
            center: [c, c, 0.0],
            inner_radius: 0.8 * r,
            outer_radius: 0.95 * r,
            half_height: 2.0 * nz as f64,
            hu: -100.0,
        })
        .with(cyl(0.3 * r, -100.0));
    make_phantom(&spec).expect("valid phantom")
}

pub fn random_mask(n: usize, density: f64, seed: u64) -> BinaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::new([n; 3], [1.0; 3]).expect("valid grid");
    BinaryMask::from_fn(grid, |_, _, _| rng.random::<f64>() < density)
}

/// Bimodal HU samples resembling wall and lumen.
pub fn mixture_samples(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (mu, sd) = if i % 2 == 0 { (80.0, 6.0) } else { (20.0, 6.0) };
            let u: f64 = (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0;
            mu + sd * u
        })
        .collect()
}

/// Linearly separable-ish binary data with `d` features.
pub fn classification_data(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<bool> = x
        .iter()
        .map(|r| r[0] + 0.5 * r[1 % d] + rng.random_range(-0.3..0.3) > 0.0)
        .collect();
    Dataset::new((0..d).map(|j| format!("f{j}")).collect(), x, y).expect("valid dataset")
}
