//! Phantom cohorts with a planted class effect.

use std::path::{Path, PathBuf};

use exactct_core::nifti::write_nifti;
use exactct_core::synth::{add_noise, make_phantom, PhantomSpec, Primitive};
use exactct_core::BinaryMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::manifest::{CaseManifest, MaskPaths};
use crate::table::{write_labels, LabelRow, Split};

pub const AIR_HU: f32 = -1000.0;
pub const TISSUE_HU: f32 = 40.0;
pub const FAT_HU: f32 = -100.0;
pub const WALL_HU: f32 = 110.0;
pub const LUMEN_HU: f32 = 45.0;
pub const BONE_HU: f32 = 400.0;
pub const VESSEL_HU: f32 = 250.0;
pub const CALCIFIED_HU: f32 = 300.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub n: usize,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Visceral-to-subcutaneous area ratio of negative cases.
    pub base_fat_ratio: f64,
    /// Added to the ratio of positive cases.
    pub fat_shift: f64,
    /// Half-width of the uniform per-case ratio jitter.
    pub fat_jitter: f64,
    pub noise_sigma: f64,
    /// Probability that a case carries one calcified node.
    pub calcified_rate: f64,
    pub test_fraction: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n: 20,
            dims: [96, 96, 24],
            spacing: [2.0, 2.0, 5.0],
            base_fat_ratio: 0.25,
            fat_shift: 0.5,
            fat_jitter: 0.05,
            noise_sigma: 4.0,
            calcified_rate: 0.3,
            test_fraction: 0.5,
        }
    }
}

/// One generated case, before it is written to disk.
#[derive(Debug, Clone)]
pub struct SynthCase {
    pub case_id: String,
    pub label: bool,
    pub fat_ratio: f64,
    pub ptb_logit: f64,
    pub phantom: PhantomSpec,
    pub noise_seed: u64,
    pub masks: Vec<(&'static str, Vec<Primitive>)>,
}

fn boxed(min: [f64; 3], max: [f64; 3], hu: f32) -> Primitive {
    Primitive::Box { min, max, hu }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        let field = (self.dims[0] as f64 * self.spacing[0]).min(self.dims[1] as f64 * self.spacing[1]);
        if self.n < 2 || self.dims[2] < 8 || field < 120.0 {
            return Err(CliError::Invalid(
                "cohort needs n >= 2, at least 8 slices and an in-plane field of at least 120 mm".into(),
            ));
        }
        let top = self.base_fat_ratio + self.fat_shift + self.fat_jitter;
        if self.base_fat_ratio - self.fat_jitter <= 0.0 || top > 0.85 {
            return Err(CliError::Invalid("fat ratios must stay within (0, 0.85]".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) || !(0.0..=1.0).contains(&self.calcified_rate) {
            return Err(CliError::Invalid("test_fraction and calcified_rate must be probabilities".into()));
        }
        Ok(())
    }

    /// Inclusive slice ranges of L3, L4, L5 and S1.
    pub fn vertebra_slices(&self) -> [[usize; 2]; 4] {
        let nz = self.dims[2];
        let per = (nz - 4) / 4;
        std::array::from_fn(|i| [2 + i * per, 2 + (i + 1) * per - 1])
    }

    pub fn case(&self, i: usize, seed: u64) -> SynthCase {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let label = i % 2 == 1;
        let [nx, ny, nz] = self.dims;
        let s = self.spacing;
        let c = [(nx - 1) as f64 * s[0] / 2.0, (ny - 1) as f64 * s[1] / 2.0, (nz - 1) as f64 * s[2] / 2.0];
        let k = (nx as f64 * s[0]).min(ny as f64 * s[1]) / 192.0;
        let at = |dx: f64, dy: f64, z: f64| [c[0] + dx * k, c[1] + dy * k, z];
        let zmid = c[2];
        let zlen = nz as f64 * s[2];
        let along_z = |center: [f64; 3], r: f64, hu: f32| Primitive::Cylinder {
            center,
            axis: [0.0, 0.0, 1.0],
            radius: r,
            half_length: zlen,
            hu,
        };

        let r_body = 90.0 * k;
        let r_sub = 78.0 * k;
        let subcut_area = std::f64::consts::PI * (r_body * r_body - r_sub * r_sub);
        let fat_ratio = self.base_fat_ratio
            + if label { self.fat_shift } else { 0.0 }
            + rng.random_range(-self.fat_jitter..=self.fat_jitter);
        let r_visc = (fat_ratio * subcut_area / std::f64::consts::PI).sqrt();

        let body = along_z(at(0.0, 0.0, zmid), r_body, TISSUE_HU);
        let subcut = Primitive::AnnulusSlab {
            center: at(0.0, 0.0, zmid),
            inner_radius: r_sub,
            outer_radius: r_body,
            half_height: zlen,
            hu: FAT_HU,
        };
        let visceral = along_z(at(0.0, 0.0, zmid), r_visc, FAT_HU);
        let gut_c = at(50.0, -22.0, zmid);
        let intestine = along_z(gut_c, 12.0 * k, WALL_HU);
        let lumen = along_z(gut_c, 8.0 * k, LUMEN_HU);

        let levels = self.vertebra_slices();
        let half = s[2] * 0.49;
        let vert: Vec<Primitive> = levels
            .iter()
            .map(|&[a, b]| {
                let lo = at(-15.0, 45.0, a as f64 * s[2] - half);
                let hi = at(15.0, 68.0, b as f64 * s[2] + half);
                boxed(lo, hi, BONE_HU)
            })
            .collect();

        let mut vessels = Vec::new();
        if label {
            let zc = (levels[1][0] + levels[2][1]) as f64 / 2.0 * s[2];
            let half = (levels[2][1] - levels[1][0]) as f64 / 2.0 * s[2];
            vessels.push(Primitive::Cylinder {
                center: at(50.0, -22.0 - 12.0 - 4.0, zc),
                axis: [0.0, 0.0, 1.0],
                radius: 3.0,
                half_length: half,
                hu: VESSEL_HU,
            });
        }

        let mut nodes = Vec::new();
        if rng.random::<f64>() < self.calcified_rate {
            let z = rng.random_range(levels[0][0] + 1..levels[3][1]) as f64 * s[2];
            let dx = rng.random_range(-4.0..4.0);
            let dy = rng.random_range(-4.0..4.0);
            nodes.push(Primitive::Sphere {
                center: at(-45.0 + dx, 10.0 + dy, z),
                radius: 3.0,
                hu: CALCIFIED_HU,
            });
        }

        let ptb_logit = if label { -3.0 } else { -1.0 } + rng.random_range(-1.0..1.0);
        let noise_seed = rng.random();

        let mut phantom = PhantomSpec::new(self.dims, self.spacing, AIR_HU)
            .with(body)
            .with(subcut.clone())
            .with(visceral.clone())
            .with(intestine.clone())
            .with(lumen);
        for p in vert.iter().chain(&vessels).chain(&nodes) {
            phantom = phantom.with(p.clone());
        }

        let masks = vec![
            ("intestine", vec![intestine]),
            ("spine", vert.clone()),
            ("vessels", vessels),
            ("l3", vec![vert[0].clone()]),
            ("l4", vec![vert[1].clone()]),
            ("l5", vec![vert[2].clone()]),
            ("s1", vec![vert[3].clone()]),
            ("body", vec![along_z(at(0.0, 0.0, zmid), r_body, 1.0)]),
            ("visceral_fat", vec![visceral]),
        ];
        SynthCase {
            case_id: format!("case_{i:03}"),
            label,
            fat_ratio,
            ptb_logit,
            phantom,
            noise_seed,
            masks,
        }
    }

    pub fn split_of(&self, i: usize) -> Split {
        let n_train = ((1.0 - self.test_fraction) * self.n as f64).round() as usize;
        if i < n_train {
            Split::Train
        } else {
            Split::Test
        }
    }
}

fn mask_of(prims: &[Primitive], phantom: &PhantomSpec) -> Result<BinaryMask> {
    let grid = phantom.grid()?;
    let s = grid.spacing;
    Ok(BinaryMask::from_fn(grid, |x, y, z| {
        let p = [x as f64 * s[0], y as f64 * s[1], z as f64 * s[2]];
        prims.iter().any(|q| q.contains(p))
    }))
}

/// Write one case directory and return its manifest path.
pub fn write_case(case: &SynthCase, noise_sigma: f64, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let ct = add_noise(&make_phantom(&case.phantom)?, noise_sigma, case.noise_seed)?;
    write_nifti(&ct, dir.join("ct.nii.gz"))?;
    let mut paths = MaskPaths::default();
    for (role, prims) in &case.masks {
        let file = format!("{role}.nii.gz");
        write_nifti(&mask_of(prims, &case.phantom)?, dir.join(&file))?;
        let p = Some(PathBuf::from(&file));
        match *role {
            "intestine" => paths.intestine = p,
            "spine" | "vessels" => paths.organs.push(PathBuf::from(&file)),
            "l3" => paths.l3 = p,
            "l4" => paths.l4 = p,
            "l5" => paths.l5 = p,
            "s1" => paths.s1 = p,
            "body" => paths.body = p,
            "visceral_fat" => paths.visceral_fat = p,
            _ => unreachable!("unknown synthetic role"),
        }
    }
    let manifest = CaseManifest {
        case_id: case.case_id.clone(),
        ct: "ct.nii.gz".into(),
        masks: paths,
        ptb_logit: Some(case.ptb_logit),
        label: Some(case.label),
    };
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

/// Generate a cohort under `out`: one directory per case, `labels.csv` and
/// `manifests.txt`. Returns the manifest paths in case order.
pub fn generate_cohort(spec: &CohortSpec, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    spec.validate()?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let cases: Vec<SynthCase> = (0..spec.n).map(|i| spec.case(i, seed)).collect();
    let paths = cases
        .par_iter()
        .map(|c| write_case(c, spec.noise_sigma, &out.join(&c.case_id)))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<LabelRow> = cases
        .iter()
        .enumerate()
        .map(|(i, c)| LabelRow {
            case_id: c.case_id.clone(),
            label: c.label,
            split: Some(spec.split_of(i)),
        })
        .collect();
    write_labels(&out.join("labels.csv"), &labels)?;
    let list: String = cases.iter().map(|c| format!("{}/manifest.json\n", c.case_id)).collect();
    let lp = out.join("manifests.txt");
    std::fs::write(&lp, list).map_err(|e| CliError::io(&lp, e))?;
    Ok(paths)
}
