//! Acceptance suite. Every criterion runs under its time budget and prints a
//! single PASS or FAIL line; the process exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use exactct_cli::commands::{cmd_explain, cmd_extract, cmd_synth, cmd_thresholds, cmd_train};
use exactct_cli::table::{write_features, write_labels, FeatureTable, LabelRow, Split, MODEL_COLUMNS, THRESHOLD_COLUMNS};
use exactct_cli::Config;
use exactct_core::biomarkers::{
    body_mask, detect_calcified, detect_necrotic, fat_mask, fat_ratio_volume, CalcifiedParams, FeatureVector,
    NecroticParams, FEATURE_NAMES,
};
use exactct_core::gmm::{select_k_by_bic, BicPenalty, FitOptions};
use exactct_core::ml::{
    auc, confusion_metrics, logistic_objective, roc_curve, roc_curve_oriented, train_forest, train_gbm, train_gnb,
    train_svm, youden_threshold, Dataset, ForestParams, GbmParams, SvmParams,
};
use exactct_core::morphology::{dilate, erode, label_components, Connectivity, StructuringElement};
use exactct_core::nifti::{read_nifti, write_nifti_as, Datatype};
use exactct_core::shap::explain_shap;
use exactct_core::synth::{
    add_noise, compose_augment, elastic_deform, make_phantom, rotate_rigid, scale_uniform, translate, AugmentSpec,
    ElasticGrid, PhantomSpec, Primitive, AIR_HU,
};
use exactct_core::vesselness::{frangi_response, refine_probability, vesselness_raw, RefineSchedule, StructureConstant, VesselParams};
use exactct_core::xgb::{best_split, leaf_weight, split_gain, train_xgb, XgbParams};
use exactct_core::{BinaryMask, CtVolume, Grid, ProbabilityVolume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- NIfTI

fn nifti_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut r = rng(100);
    let types = [Datatype::Uint8, Datatype::Int16, Datatype::Float32, Datatype::Float64];
    for i in 0..100 {
        let dims = [r.random_range(1..24), r.random_range(1..24), r.random_range(1..12)];
        let spacing = [r.random_range(0.3..3.0), r.random_range(0.3..3.0), r.random_range(0.5..6.0)];
        let grid = Grid::new(dims, spacing).map_err(|e| e.to_string())?;
        let dtype = types[i % 4];
        let vals: Vec<f32> = (0..grid.len())
            .map(|_| match dtype {
                Datatype::Uint8 => r.random_range(0..=255) as f32,
                Datatype::Int16 => r.random_range(-1024..=3071) as f32,
                _ => r.random_range(-1000.0f32..2000.0),
            })
            .collect();
        let v = CtVolume::new(grid, vals).map_err(|e| e.to_string())?;
        let gz = (i / 4) % 2 == 0;
        let p = dir.path().join(format!("v{i}.nii{}", if gz { ".gz" } else { "" }));
        write_nifti_as(&v, dtype, &p).map_err(|e| e.to_string())?;
        let back = read_nifti(&p).map_err(|e| e.to_string())?;
        ensure!(back.dims() == v.dims(), "volume {i}: dims {:?} vs {:?}", back.dims(), v.dims());
        ensure!(back.voxels() == v.voxels(), "volume {i} ({dtype:?}, gzip {gz}): voxels differ");
    }
    Ok("100 volumes, 4 dtypes, gzip on/off".into())
}

// ----------------------------------------------------------- morphology

fn brute_morph(mask: &BinaryMask, elem: &StructuringElement, erode: bool) -> Vec<bool> {
    let [nx, ny, nz] = mask.dims();
    let offs = elem.offsets();
    let mut out = Vec::with_capacity(mask.bits().len());
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let hit = |o: &[isize; 3]| {
                    let (a, b, c) = (x as isize + o[0], y as isize + o[1], z as isize + o[2]);
                    a >= 0
                        && b >= 0
                        && c >= 0
                        && (a as usize) < nx
                        && (b as usize) < ny
                        && (c as usize) < nz
                        && mask.get(a as usize, b as usize, c as usize)
                };
                out.push(if erode { offs.iter().all(hit) } else { offs.iter().any(hit) });
            }
        }
    }
    out
}

/// Canonical labels: components numbered by first voxel in raster order.
fn flood_labels(mask: &BinaryMask, six: bool) -> Vec<usize> {
    let [nx, ny, nz] = mask.dims();
    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    let mut lab = vec![0usize; nx * ny * nz];
    let mut next = 0;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !mask.get(x, y, z) || lab[idx(x, y, z)] != 0 {
                    continue;
                }
                next += 1;
                lab[idx(x, y, z)] = next;
                let mut stack = vec![(x, y, z)];
                while let Some((a, b, c)) = stack.pop() {
                    for dz in -1i64..=1 {
                        for dy in -1i64..=1 {
                            for dx in -1i64..=1 {
                                let l1 = dx.abs() + dy.abs() + dz.abs();
                                if l1 == 0 || (six && l1 > 1) {
                                    continue;
                                }
                                let (p, q, s) = (a as i64 + dx, b as i64 + dy, c as i64 + dz);
                                if p < 0 || q < 0 || s < 0 || p >= nx as i64 || q >= ny as i64 || s >= nz as i64 {
                                    continue;
                                }
                                let (p, q, s) = (p as usize, q as usize, s as usize);
                                if mask.get(p, q, s) && lab[idx(p, q, s)] == 0 {
                                    lab[idx(p, q, s)] = next;
                                    stack.push((p, q, s));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    lab
}

fn morphology_oracles() -> Outcome {
    let mut r = rng(200);
    let grid = Grid::new([16; 3], [1.0; 3]).unwrap();
    let elems = [
        StructuringElement::cube(1).unwrap(),
        StructuringElement::cross(1).unwrap(),
        StructuringElement::cube(2).unwrap(),
    ];
    for i in 0..200 {
        let density = 0.1 + 0.8 * (i as f64 / 199.0);
        let m = BinaryMask::from_fn(grid.clone(), |_, _, _| r.random::<f64>() < density);
        for e in &elems {
            ensure!(erode(&m, *e, 1).bits() == brute_morph(&m, e, true).as_slice(), "mask {i}: erosion differs");
            ensure!(dilate(&m, *e, 1).bits() == brute_morph(&m, e, false).as_slice(), "mask {i}: dilation differs");
        }
        for (conn, six) in [(Connectivity::Six, true), (Connectivity::TwentySix, false)] {
            let got: Vec<usize> = label_components(&m, conn).labels.iter().map(|&l| l as usize).collect();
            ensure!(got == flood_labels(&m, six), "mask {i}: {conn:?} labels differ");
        }
    }
    Ok("200 masks of 16^3, 3 elements, 6/26-connectivity".into())
}

// ------------------------------------------------------------------ GMM

const MIXTURE: [(f64, f64, usize); 4] = [(80.0, 1.5, 3500), (20.0, 1.5, 3500), (-100.0, 15.0, 2000), (0.0, 150.0, 1000)];

fn gmm_bic() -> Outcome {
    let total: usize = MIXTURE.iter().map(|m| m.2).sum();
    let heavy: Vec<f64> = MIXTURE
        .iter()
        .filter(|m| m.2 as f64 / total as f64 > 0.3)
        .map(|m| m.0)
        .collect();
    let ks: Vec<usize> = (1..=6).collect();
    let mut hits = 0;
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut r = rng(1000 + seed);
        let xs: Vec<f64> = MIXTURE
            .iter()
            .flat_map(|&(mu, sd, n)| {
                let d = Normal::new(mu, sd).unwrap();
                (0..n).map(|_| d.sample(&mut r)).collect::<Vec<_>>()
            })
            .collect();
        let m = select_k_by_bic(&xs, &ks, seed, &FitOptions::default(), BicPenalty::Parameters)
            .map_err(|e| e.to_string())?;
        for w in m.trace.windows(2) {
            ensure!(w[1] >= w[0] - 1e-9 * w[0].abs(), "seed {seed}: log-likelihood fell {} -> {}", w[0], w[1]);
        }
        if m.k == 4 {
            hits += 1;
        }
        for &mu in &heavy {
            let err = m.means.iter().map(|v| (v - mu).abs()).fold(f64::INFINITY, f64::min);
            worst = worst.max(err);
        }
    }
    ensure!(hits >= 95, "k=4 chosen in {hits}/100 runs");
    ensure!(worst <= 0.15, "worst heavy-mode mean error {worst:.4}");
    Ok(format!("k=4 in {hits}/100, worst heavy-mode error {worst:.4}"))
}

// ----------------------------------------------------------- vesselness

fn rot90(v: &[f32], n: usize, nz: usize) -> Vec<f32> {
    let mut out = vec![0.0; v.len()];
    for z in 0..nz {
        for y in 0..n {
            for x in 0..n {
                out[x + n * (y + n * z)] = v[y + n * ((n - 1 - x) + n * z)];
            }
        }
    }
    out
}

fn vesselness() -> Outcome {
    let n = 41;
    let params = VesselParams::default();
    let c = (n / 2) as f64;
    let cyl = make_phantom(&PhantomSpec::new([n, n, 24], [1.0; 3], 0.0).with(Primitive::Cylinder {
        center: [c, c, 11.5],
        axis: [0.0, 0.0, 1.0],
        radius: 3.0,
        half_length: 100.0,
        hu: 300.0,
    }))
    .unwrap();
    let rc = vesselness_raw(&cyl, &params).map_err(|e| e.to_string())?;
    let axis = cyl.grid().index(n / 2, n / 2, 12);
    let best = rc.best_scale[axis] as usize;
    let target = (0..params.scales.len())
        .min_by(|&a, &b| (params.scales[a] - 3.0).abs().total_cmp(&(params.scales[b] - 3.0).abs()))
        .unwrap();
    ensure!(best.abs_diff(target) <= 1, "peak scale index {best}, expected {target}");

    let fixed = VesselParams { c: StructureConstant::Fixed(rc.c), ..params.clone() };
    let plate = make_phantom(&PhantomSpec::new([n, n, 24], [1.0; 3], 0.0).with(Primitive::Box {
        min: [17.0, -1.0, -1.0],
        max: [23.0, 100.0, 100.0],
        hu: 300.0,
    }))
    .unwrap();
    let rp = vesselness_raw(&plate, &fixed).map_err(|e| e.to_string())?;
    let ratio = rc.values[axis] / rp.values[axis];
    ensure!(ratio >= 5.0, "cylinder/plate ratio {ratio}");

    let g = Grid::new([12, 12, 9], [0.8, 0.8, 1.7]).unwrap();
    let mut r = rng(400);
    let v = CtVolume::new(g.clone(), (0..g.len()).map(|_| r.random_range(-100.0f32..300.0)).collect()).unwrap();
    let rv = CtVolume::new(g.clone(), rot90(v.voxels(), 12, 9)).unwrap();
    let a = frangi_response(&v, &params).map_err(|e| e.to_string())?;
    let b = frangi_response(&rv, &params).map_err(|e| e.to_string())?;
    ensure!(rot90(a.values(), 12, 9) == b.values(), "quarter-turn equivariance broken");

    let g = Grid::new([9, 8, 7], [1.0; 3]).unwrap();
    let p = ProbabilityVolume::new(g.clone(), (0..g.len()).map(|_| r.random::<f32>()).collect()).unwrap();
    let out = refine_probability(&p, &RefineSchedule::constant(0.0, 1)).map_err(|e| e.to_string())?;
    let [nx, ny, nz] = g.dims;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let mut m = 0.0f32;
                for (a, b, c) in (z.saturating_sub(1)..=(z + 1).min(nz - 1))
                    .flat_map(|c| (y.saturating_sub(1)..=(y + 1).min(ny - 1)).map(move |b| (b, c)))
                    .flat_map(|(b, c)| (x.saturating_sub(1)..=(x + 1).min(nx - 1)).map(move |a| (a, b, c)))
                {
                    m = m.max(p.get(a, b, c));
                }
                ensure!(out.get(x, y, z) == m, "refinement differs from max filter at ({x},{y},{z})");
            }
        }
    }
    Ok(format!("peak scale {best} (target {target}), cylinder/plate {ratio:.1}"))
}

// ------------------------------------------------------------ fat ratio

fn fat_phantom(visceral: bool) -> CtVolume {
    let n = 121;
    let c = 60.0;
    let mut spec = PhantomSpec::new([n, n, 9], [1.0; 3], -1000.0)
        .with(Primitive::Cylinder { center: [c, c, 4.0], axis: [0.0, 0.0, 1.0], radius: 55.0, half_length: 50.0, hu: 40.0 })
        .with(Primitive::AnnulusSlab { center: [c, c, 4.0], inner_radius: 40.0, outer_radius: 50.0, half_height: 50.0, hu: -80.0 });
    if visceral {
        spec = spec.with(Primitive::Cylinder { center: [c, c, 4.0], axis: [0.0, 0.0, 1.0], radius: 10.0, half_length: 50.0, hu: -80.0 });
    }
    make_phantom(&spec).unwrap()
}

fn fat_ratio() -> Outcome {
    let vol = fat_phantom(true);
    let (fm, body) = (fat_mask(&vol), body_mask(&vol));
    let a = fat_ratio_volume(&fm, &body, [3, 5], 360).map_err(|e| e.to_string())?;
    let b = fat_ratio_volume(&fm, &body, [3, 5], 720).map_err(|e| e.to_string())?;
    let want = 1000.0 / 900.0 - 1.0;
    let rel = (a.fat_ratio - want).abs() / want;
    ensure!(rel < 0.03, "fat ratio {} vs {want} ({:.2}%)", a.fat_ratio, 100.0 * rel);
    let mut worst = 0.0f64;
    for (sa, sb) in a.slices.iter().zip(&b.slices) {
        worst = worst.max((sa.a_subcut - sb.a_subcut).abs() / sa.a_subcut);
    }
    ensure!(worst < 0.01, "doubling rays moved A_subcut by {:.3}%", 100.0 * worst);
    let pure = fat_phantom(false);
    let z = fat_ratio_volume(&fat_mask(&pure), &body_mask(&pure), [3, 5], 360).map_err(|e| e.to_string())?;
    ensure!(z.fat_ratio == 0.0, "pure annulus ratio {}", z.fat_ratio);
    Ok(format!("ratio {:.4} (target {want:.4}), ray doubling {:.3}%", a.fat_ratio, 100.0 * worst))
}

// ------------------------------------------------------------ nodes

fn node_contracts() -> Outcome {
    let mut r = rng(600);
    let g = Grid::new([10, 10, 10], [1.0; 3]).unwrap();
    let cp = CalcifiedParams { edge_margin: 1, ..Default::default() };
    let np = NecroticParams { erosion_iters: 0, dilation_radius: 0, ..Default::default() };
    let mut flagged = 0usize;
    for probe in 0..10_000 {
        let vals: Vec<f32> = (0..g.len()).map(|_| r.random_range(-200.0f32..600.0)).collect();
        let vol = CtVolume::new(g.clone(), vals).unwrap();
        let lo: [usize; 3] = [0; 3].map(|_| r.random_range(0..8));
        let hi: [usize; 3] = [0, 1, 2].map(|a| r.random_range(lo[a]..10));
        let organ = BinaryMask::from_fn(g.clone(), |x, y, z| {
            (lo[0]..=hi[0]).contains(&x) && (lo[1]..=hi[1]).contains(&y) && (lo[2]..=hi[2]).contains(&z)
        });
        let fat = BinaryMask::from_fn(g.clone(), |_, _, _| r.random::<f64>() < 0.2);
        let c = detect_calcified(&vol, &[&organ], &cp).map_err(|e| e.to_string())?;
        let grown = dilate(&organ, StructuringElement::cube(cp.dilation_radius).unwrap(), 1);
        for (i, (&m, &d)) in c.mask.bits().iter().zip(grown.bits()).enumerate() {
            ensure!(!(m && d), "probe {probe}: calcified voxel {i} inside the dilated organ");
        }
        flagged += c.mask.count();
        let n = detect_necrotic(&vol, &[&organ], &fat, &np).map_err(|e| e.to_string())?;
        for (i, (&m, &f)) in n.mask.bits().iter().zip(fat.bits()).enumerate() {
            ensure!(!(m && f), "probe {probe}: necrotic voxel {i} inside visceral fat");
        }
    }
    ensure!(flagged > 0, "probes never flagged anything");

    let mut spec = PhantomSpec::new([64, 64, 40], [1.0; 3], 40.0)
        .with(Primitive::Box { min: [5.0; 3], max: [25.0, 58.0, 34.0], hu: 60.0 })
        .with(Primitive::Sphere { center: [15.0, 30.0, 20.0], radius: 3.0, hu: 400.0 });
    for (i, rad) in [2.5, 3.5, 4.5].iter().enumerate() {
        spec = spec.with(Primitive::Sphere { center: [45.0, 15.0 + 16.0 * i as f64, 20.0], radius: *rad, hu: 300.0 });
    }
    let vol = make_phantom(&spec).unwrap();
    let organ = Primitive::Box { min: [5.0; 3], max: [25.0, 58.0, 34.0], hu: 0.0 }.mask(vol.grid());
    let calc = detect_calcified(&vol, &[&organ], &CalcifiedParams::default()).map_err(|e| e.to_string())?;
    ensure!(calc.components.len() == 3, "calcified phantom: {} nodes, expected 3", calc.components.len());

    let spec = PhantomSpec::new([48, 48, 48], [1.0; 3], 45.0)
        .with(Primitive::Sphere { center: [18.0, 24.0, 24.0], radius: 4.5, hu: 15.0 })
        .with(Primitive::Sphere { center: [32.0, 24.0, 24.0], radius: 4.5, hu: 15.0 });
    let vol = make_phantom(&spec).unwrap();
    let organ = Primitive::Box { min: [10.0; 3], max: [38.0; 3], hu: 0.0 }.mask(vol.grid());
    let none = BinaryMask::empty(vol.grid().clone());
    let nec = detect_necrotic(&vol, &[&organ], &none, &NecroticParams::default()).map_err(|e| e.to_string())?;
    ensure!(nec.components.len() == 2, "necrotic phantom: {} nodes, expected 2", nec.components.len());
    Ok(format!("10^4 probes ({flagged} flagged voxels), node counts 3 and 2"))
}

// -------------------------------------------------------------- metrics

fn random_scores(r: &mut ChaCha8Rng, n: usize, levels: u32) -> (Vec<f64>, Vec<bool>) {
    loop {
        let s: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64 / 7.0).collect();
        let y: Vec<bool> = s.iter().map(|v| r.random::<f64>() < 0.3 + 0.05 * v).collect();
        if y.iter().any(|&b| b) && y.iter().any(|&b| !b) {
            return (s, y);
        }
    }
}

fn mann_whitney(s: &[f64], y: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (a, &la) in s.iter().zip(y) {
        for (b, &lb) in s.iter().zip(y) {
            if la && !lb {
                den += 1.0;
                num += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
    }
    num / den
}

/// Exhaustive threshold sweep in the curve's orientation; ties keep the higher TPR.
fn youden_sweep(s: &[f64], y: &[bool], flipped: bool) -> (f64, f64) {
    let o: Vec<f64> = s.iter().map(|v| if flipped { -v } else { *v }).collect();
    let mut ts = o.clone();
    ts.sort_by(|a, b| b.total_cmp(a));
    ts.dedup();
    let p = y.iter().filter(|&&b| b).count() as i64;
    let n = y.len() as i64 - p;
    let mut best: Option<(i64, i64, f64)> = None;
    for t in ts {
        let tp = o.iter().zip(y).filter(|(v, &l)| l && **v >= t).count() as i64;
        let fp = o.iter().zip(y).filter(|(v, &l)| !l && **v >= t).count() as i64;
        let j = tp * n - fp * p;
        if best.is_none_or(|(bj, btp, _)| j > bj || (j == bj && tp > btp)) {
            best = Some((j, tp, t));
        }
    }
    let (j, _, t) = best.unwrap();
    (if flipped { -t } else { t }, j as f64 / (p * n) as f64)
}

fn metrics() -> Outcome {
    let mut r = rng(700);
    let mut worst = 0.0f64;
    for set in 0..1000 {
        let n = r.random_range(4..120);
        let (s, y) = random_scores(&mut r, n, 1 + (set % 30) as u32);
        let raw = roc_curve_oriented(&s, &y, false).map_err(|e| e.to_string())?;
        let err = (auc(&raw) - mann_whitney(&s, &y)).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-12, "set {set}: AUC off by {err:e}");
        let c = roc_curve(&s, &y).map_err(|e| e.to_string())?;
        let yj = youden_threshold(&c);
        let (t, j) = youden_sweep(&s, &y, c.flipped);
        ensure!(yj.threshold == t && yj.j == j, "set {set}: Youden ({}, {}) vs sweep ({t}, {j})", yj.threshold, yj.j);
    }
    // TP=3, FP=1, TN=2, FN=2.
    let pred = [true, true, true, true, false, false, false, false];
    let lab = [true, true, true, false, false, false, true, true];
    let m = confusion_metrics(&pred, &lab).map_err(|e| e.to_string())?;
    let want = (3.0 * 2.0 - 1.0 * 2.0) / ((4.0 * 5.0 * 3.0 * 4.0) as f64).sqrt();
    ensure!(m.mcc == want, "MCC {} vs {want}", m.mcc);
    let y4 = [true, false, true, false];
    let inv = [false, true, false, true];
    ensure!(confusion_metrics(&y4, &y4).unwrap().mcc == 1.0, "perfect MCC");
    ensure!(confusion_metrics(&inv, &y4).unwrap().mcc == -1.0, "inverted MCC");
    ensure!(confusion_metrics(&[true; 4], &y4).unwrap().mcc == 0.0, "degenerate MCC");
    Ok(format!("1000 score sets, worst AUC error {worst:e}"))
}

// ---------------------------------------------------------- classifiers

fn random_dataset(seed: u64, n: usize, d: usize) -> Dataset {
    let mut r = rng(seed);
    let w: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
    loop {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|j| r.random_range(-2.0..2.0) * (j + 1) as f64 + j as f64).collect())
            .collect();
        let y: Vec<bool> = x
            .iter()
            .map(|row| row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + r.random_range(-1.0..1.0) > 0.0)
            .collect();
        if y.iter().filter(|&&b| b).count() >= 2 && y.iter().filter(|&&b| !b).count() >= 2 {
            return Dataset::new((0..d).map(|j| format!("f{j}")).collect(), x, y).unwrap();
        }
    }
}

fn classifiers() -> Outcome {
    let d = random_dataset(800, 40, 4);
    let mut r = rng(801);
    let mut worst_fd = 0.0f64;
    for _ in 0..20 {
        let w: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        let b = r.random_range(-1.0..1.0);
        let (_, gw, gb) = logistic_objective(&d.x, &d.y, &w, b, 0.3);
        for j in 0..=4 {
            let f = |delta: f64| {
                let (mut w2, mut b2) = (w.clone(), b);
                if j < 4 {
                    w2[j] += delta;
                } else {
                    b2 += delta;
                }
                logistic_objective(&d.x, &d.y, &w2, b2, 0.3).0
            };
            let h = 1e-6;
            let fd = (f(h) - f(-h)) / (2.0 * h);
            let an = if j < 4 { gw[j] } else { gb };
            let rel = (fd - an).abs() / an.abs().max(1.0);
            worst_fd = worst_fd.max(rel);
            ensure!(rel <= 1e-5, "gradient component {j}: {fd} vs {an}");
        }
    }

    // Points 2 and 8 standardise to -1 and +1; the maximum-margin separator is (x - 5) / 3.
    let two = Dataset::new(vec!["x".into()], vec![vec![2.0], vec![8.0]], vec![false, true]).unwrap();
    let svm = train_svm(&two, &SvmParams { c: 10.0, ..Default::default() }).map_err(|e| e.to_string())?;
    for x in [2.0, 5.0, 8.0, 11.0, -4.0] {
        let got = svm.score(&[x]).map_err(|e| e.to_string())?;
        let want = (x - 5.0) / 3.0;
        ensure!((got - want).abs() <= 1e-3, "SVM margin at {x}: {got} vs {want}");
    }

    let gd = Dataset::new(
        vec!["a".into(), "b".into()],
        vec![vec![1.0, 2.0], vec![3.0, 2.5], vec![2.0, 4.0], vec![6.0, 1.0], vec![7.0, 0.0], vec![8.0, 1.5], vec![6.5, 2.0]],
        vec![false, false, false, true, true, true, true],
    )
    .unwrap();
    let gnb = train_gnb(&gd).map_err(|e| e.to_string())?;
    let hand = |x: &[f64]| -> [f64; 2] {
        let lj: Vec<f64> = [false, true]
            .iter()
            .map(|&c| {
                let rows: Vec<&Vec<f64>> = gd.x.iter().zip(&gd.y).filter(|(_, &l)| l == c).map(|(r, _)| r).collect();
                let n = rows.len() as f64;
                let mut s = (n / gd.len() as f64).ln();
                for j in 0..2 {
                    let mu = rows.iter().map(|r| r[j]).sum::<f64>() / n;
                    let var = rows.iter().map(|r| (r[j] - mu) * (r[j] - mu)).sum::<f64>() / n;
                    s += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x[j] - mu) * (x[j] - mu) / (2.0 * var);
                }
                s
            })
            .collect();
        let z = (lj[0].exp() + lj[1].exp()).ln();
        [lj[0] - z, lj[1] - z]
    };
    for x in [[1.0, 1.0], [4.5, 2.0], [7.0, 3.0], [0.0, -1.0]] {
        let got = gnb.log_posterior(&x).map_err(|e| e.to_string())?;
        let want = hand(&x);
        for c in 0..2 {
            ensure!((got[c] - want[c]).abs() <= 1e-12, "GNB log posterior at {x:?}: {got:?} vs {want:?}");
        }
    }

    let fd = random_dataset(802, 80, 5);
    let fp = ForestParams { seed: 17, ..Default::default() };
    let f1 = serde_json::to_vec(&train_forest(&fd, &fp).map_err(|e| e.to_string())?).unwrap();
    let f2 = serde_json::to_vec(&train_forest(&fd, &fp).map_err(|e| e.to_string())?).unwrap();
    ensure!(f1 == f2, "forest training is not deterministic");
    let g1 = serde_json::to_vec(&train_gbm(&fd, &GbmParams::default()).map_err(|e| e.to_string())?).unwrap();
    let g2 = serde_json::to_vec(&train_gbm(&fd, &GbmParams::default()).map_err(|e| e.to_string())?).unwrap();
    ensure!(g1 == g2, "GBM training is not deterministic");
    Ok(format!("worst gradient relative error {worst_fd:.1e}"))
}

// ------------------------------------------------------------------ XGB

fn xgb_data(seed: u64, n: usize, d: usize) -> Dataset {
    let mut r = rng(seed);
    loop {
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random_range(0..20) as f64 * 0.5).collect()).collect();
        let y: Vec<bool> = x
            .iter()
            .map(|row| row[0] - if d > 1 { row[1] } else { 5.0 } + r.random_range(-3.0..3.0) > 0.0)
            .collect();
        if y.iter().any(|&b| b) && y.iter().any(|&b| !b) {
            return Dataset::new((0..d).map(|j| format!("f{j}")).collect(), x, y).unwrap();
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn xgboost() -> Outcome {
    ensure!(leaf_weight(-1.0, 0.5, 1.0) == 1.0 / 1.5, "leaf weight -(-1)/(0.5+1)");
    ensure!(leaf_weight(3.0, 2.0, 0.0) == -1.5, "leaf weight -3/2");
    let want = 0.5 * (4.0 / 2.0 + 9.0 / 3.0 - 1.0 / 4.0) - 0.5;
    ensure!((split_gain(-2.0, 1.0, 3.0, 2.0, 1.0, 0.5) - want).abs() <= 1e-12, "split gain hand case");
    let want = 0.5 * (0.25 / 1.25 + 0.64 / 2.8 - 0.09 / 3.05);
    ensure!((split_gain(0.5, 0.25, -0.8, 1.8, 1.0, 0.0) - want).abs() <= 1e-12, "split gain second hand case");

    let params = XgbParams::default();
    for seed in 0..20 {
        let d = xgb_data(900 + seed, 50, 5);
        let mut r = rng(950 + seed);
        let m: Vec<f64> = (0..50).map(|_| r.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = m.iter().zip(&d.y).map(|(&v, &l)| sigmoid(v) - if l { 1.0 } else { 0.0 }).collect();
        let h: Vec<f64> = m.iter().map(|&v| sigmoid(v) * (1.0 - sigmoid(v))).collect();
        let rows: Vec<usize> = (0..50).collect();
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..5 {
            let mut vals: Vec<f64> = d.x.iter().map(|row| row[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..50 {
                    if d.x[i][f] < t {
                        gl += g[i];
                        hl += h[i];
                    } else {
                        gr += g[i];
                        hr += h[i];
                    }
                }
                let gain = 0.5 * (gl * gl / (hl + 1.0) + gr * gr / (hr + 1.0) - (gl + gr).powi(2) / (hl + hr + 1.0));
                if best.is_none_or(|b| gain > b.2 + 1e-12) {
                    best = Some((f, t, gain));
                }
            }
        }
        let (bf, bt, bg) = best.unwrap();
        let s = best_split(&d.x, &g, &h, &rows, &params).ok_or("no split found")?;
        ensure!(
            s.feature == bf && s.threshold == bt && (s.gain - bg).abs() <= 1e-9,
            "dataset {seed}: split ({}, {}, {}) vs oracle ({bf}, {bt}, {bg})",
            s.feature,
            s.threshold,
            s.gain
        );
    }

    for seed in 0..10 {
        let d = xgb_data(980 + seed, 80, 4);
        let e = train_xgb(&d, &XgbParams { gamma: 0.0, ..Default::default() }).map_err(|e| e.to_string())?;
        for w in e.trace.windows(2) {
            ensure!(w[1] <= w[0] + 1e-12, "dataset {seed}: training logloss rose {} -> {}", w[0], w[1]);
        }
    }
    Ok("hand formulas, 20 split oracles, 10 monotone traces".into())
}

// ----------------------------------------------------------------- SHAP

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, m - 1);
            out.push(q);
        }
    }
    out
}

fn permutation_shap(f: &dyn Fn(&[f64]) -> f64, x: &[f64], bg: &[Vec<f64>]) -> Vec<f64> {
    let m = x.len();
    let value = |set: &[bool]| {
        bg.iter()
            .map(|b| f(&(0..m).map(|j| if set[j] { x[j] } else { b[j] }).collect::<Vec<_>>()))
            .sum::<f64>()
            / bg.len() as f64
    };
    let perms = permutations(m);
    let mut phi = vec![0.0; m];
    for p in &perms {
        let mut set = vec![false; m];
        let mut prev = value(&set);
        for &j in p {
            set[j] = true;
            let v = value(&set);
            phi[j] += v - prev;
            prev = v;
        }
    }
    phi.iter().map(|v| v / perms.len() as f64).collect()
}

fn shap() -> Outcome {
    let mut r = rng(1100);
    let mut worst_acc = 0.0f64;
    let mut worst_perm = 0.0f64;
    let mut explained = 0;
    for k in 0..50u64 {
        let m = 1 + (k % 5) as usize;
        let mut d = xgb_data(1200 + k, 40, m);
        // The last feature is constant during training, so no tree can use it.
        let dead = m > 1 && k % 3 == 0;
        if dead {
            d.x.iter_mut().for_each(|row| row[m - 1] = 1.0);
        }
        let params = XgbParams { rounds: r.random_range(1..12), max_depth: r.random_range(1..4), ..Default::default() };
        let e = train_xgb(&d, &params).map_err(|e| e.to_string())?;
        let bg = &d.x[..8];
        for x in &d.x[8..12] {
            let mut x = x.clone();
            if dead {
                x[m - 1] = 7.0;
            }
            let ex = explain_shap(&e, &x, bg).map_err(|e| e.to_string())?;
            let fx = e.margin(&x).map_err(|e| e.to_string())?;
            let acc = (ex.reconstructed() - fx).abs();
            worst_acc = worst_acc.max(acc);
            ensure!(acc <= 1e-9, "ensemble {k}: local accuracy off by {acc:e}");
            let oracle = permutation_shap(&|z: &[f64]| e.margin(z).unwrap(), &x, bg);
            for j in 0..m {
                let diff = (ex.phi[j] - oracle[j]).abs();
                worst_perm = worst_perm.max(diff);
                ensure!(diff <= 1e-9, "ensemble {k}, feature {j}: {} vs {}", ex.phi[j], oracle[j]);
            }
            if dead {
                ensure!(ex.phi[m - 1] == 0.0, "ensemble {k}: unused feature got {}", ex.phi[m - 1]);
            }
            explained += 1;
        }
    }
    Ok(format!("{explained} explanations, worst accuracy {worst_acc:.1e}, worst oracle gap {worst_perm:.1e}"))
}

// -------------------------------------------------------- augmentations

fn augmentations() -> Outcome {
    let mut r = rng(1300);
    let n = 9;
    let g = Grid::new([n, n, n], [1.0; 3]).unwrap();
    let v = CtVolume::new(g.clone(), (0..g.len()).map(|_| r.random_range(-1000.0f32..1500.0)).collect()).unwrap();
    ensure!(rotate_rigid(&v, [0.0; 3], None) == v, "zero rotation");
    ensure!(scale_uniform(&v, 1.0, None).unwrap() == v, "unit scale");
    ensure!(translate(&v, [0.0; 3]) == v, "zero translation");
    ensure!(compose_augment(&v, &AugmentSpec::default()).unwrap() == v, "default augmentation");
    ensure!(add_noise(&v, 0.0, 42).unwrap() == v, "zero noise");
    let phi = ElasticGrid::covering(v.grid(), [3.0; 3]);
    ensure!(elastic_deform(&v, &phi).unwrap() == v, "zero elastic field");

    let rot = rotate_rigid(&v, [0.0, 0.0, std::f64::consts::FRAC_PI_2], None);
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                ensure!(rot.get(x, y, z) == v.get(y, n - 1 - x, z), "quarter turn differs at ({x},{y},{z})");
            }
        }
    }
    for _ in 0..20 {
        let d = [0; 3].map(|_| r.random_range(-4i64..=4));
        let t = translate(&v, d.map(|c| c as f64));
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let s = [x as i64 - d[0], y as i64 - d[1], z as i64 - d[2]];
                    let want = if s.iter().all(|&c| (0..n as i64).contains(&c)) {
                        v.get(s[0] as usize, s[1] as usize, s[2] as usize)
                    } else {
                        AIR_HU
                    };
                    ensure!(t.get(x, y, z) == want, "shift {d:?} differs at ({x},{y},{z})");
                }
            }
        }
    }
    Ok("identities, quarter turn, 20 integer shifts".into())
}

// ----------------------------------------------------------- end to end

fn class_means(t: &FeatureTable, labels: &[LabelRow], col: &[f64]) -> (f64, f64) {
    let (mut s, mut c) = ([0.0; 2], [0.0; 2]);
    for (id, v) in t.ids.iter().zip(col) {
        let l = labels.iter().find(|l| &l.case_id == id).unwrap();
        if l.split == Some(Split::Train) {
            s[l.label as usize] += v;
            c[l.label as usize] += 1.0;
        }
    }
    (s[0] / c[0], s[1] / c[1])
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let mut cfg = Config::default();
    cfg.synth.n = 20;
    cmd_synth(&cfg, &root.join("cohort")).map_err(|e| e.to_string())?;
    let labels_path = root.join("cohort/labels.csv");
    let feats = root.join("features.csv");
    cmd_extract(&cfg, &[root.join("cohort/manifests.txt")], &feats).map_err(|e| e.to_string())?;
    let rows = cmd_thresholds(&feats, &labels_path, &root.join("thresholds.csv")).map_err(|e| e.to_string())?;
    let fr = rows.iter().find(|r| r.feature == "fat_ratio").ok_or("no fat_ratio row")?;
    let a = fr.auc.ok_or("fat_ratio AUC undefined")?;
    ensure!(a >= 0.9, "fat_ratio AUC {a}");
    let table = FeatureTable::read(&feats).map_err(|e| e.to_string())?;
    let labels = exactct_cli::table::read_labels(&labels_path).map_err(|e| e.to_string())?;
    let (m0, m1) = class_means(&table, &labels, &table.column("fat_ratio").map_err(|e| e.to_string())?);
    let (lo, hi) = (m0.min(m1), m0.max(m1));
    ensure!(fr.threshold > lo && fr.threshold < hi, "threshold {} outside class means ({m0}, {m1})", fr.threshold);
    cmd_train(&cfg, "xgb", &feats, &labels_path, &root.join("xgb.json"), &root.join("report.csv"))
        .map_err(|e| e.to_string())?;
    let s = cmd_explain(&root.join("xgb.json"), &feats, Some(&labels_path), None, &root.join("shap.csv"))
        .map_err(|e| e.to_string())?;
    let top = &table.names[s.ranking[0]];
    ensure!(top == "fat_ratio", "top SHAP feature is {top}");
    Ok(format!("fat_ratio AUC {a:.3}, threshold {:.4} between {lo:.4} and {hi:.4}, top feature {top}", fr.threshold))
}

fn csv_header(p: &Path) -> Result<Vec<String>, String> {
    let mut r = csv::Reader::from_path(p).map_err(|e| e.to_string())?;
    Ok(r.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect())
}

fn report_shapes() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let mut r = rng(1400);
    let rows: Vec<FeatureVector> = (0..24)
        .map(|i| {
            let shift = if i % 2 == 1 { 0.5 } else { 0.0 };
            let v: Vec<f64> = (0..FEATURE_NAMES.len()).map(|_| 0.5 * r.random::<f64>() + shift).collect();
            FeatureVector::from_values(format!("c{i:02}"), &v).unwrap()
        })
        .collect();
    let labels: Vec<LabelRow> = (0..24)
        .map(|i| LabelRow {
            case_id: format!("c{i:02}"),
            label: i % 2 == 1,
            split: Some(if i < 16 { Split::Train } else { Split::Test }),
        })
        .collect();
    let (fp, lp) = (root.join("f.csv"), root.join("l.csv"));
    write_features(&fp, &rows).map_err(|e| e.to_string())?;
    write_labels(&lp, &labels).map_err(|e| e.to_string())?;
    cmd_thresholds(&fp, &lp, &root.join("t.csv")).map_err(|e| e.to_string())?;
    let want: Vec<String> = std::iter::once("Feature").chain(THRESHOLD_COLUMNS).map(String::from).collect();
    let got = csv_header(&root.join("t.csv"))?;
    ensure!(got == want, "threshold columns {got:?}");
    ensure!(
        got[1..] == ["AUC", "Threshold", "Specificity", "Sensitivity", "MCC", "Accuracy", "Balanced Accuracy"],
        "threshold metric columns {got:?}"
    );
    let cfg = Config::default();
    for kind in ["logistic", "svm", "gnb", "forest", "gbm", "xgb"] {
        let rp = root.join(format!("{kind}.csv"));
        cmd_train(&cfg, kind, &fp, &lp, &root.join(format!("{kind}.json")), &rp).map_err(|e| e.to_string())?;
        let got = csv_header(&rp)?;
        ensure!(got[0] == "Model" && got[1..] == MODEL_COLUMNS, "{kind} report columns {got:?}");
        ensure!(
            got[1..] == ["Accuracy", "Balanced Accuracy", "Recall", "Specificity", "PPV", "F1", "MCC", "AUC"],
            "{kind} metric columns {got:?}"
        );
    }
    Ok("threshold report and six model reports".into())
}

// --------------------------------------------------------------- driver

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { name: "nifti round-trip", budget: secs(10), run: nifti_round_trip },
        Criterion { name: "morphology oracles", budget: secs(30), run: morphology_oracles },
        Criterion { name: "gmm bic selection", budget: secs(60), run: gmm_bic },
        Criterion { name: "vesselness", budget: secs(60), run: vesselness },
        Criterion { name: "fat ratio", budget: secs(20), run: fat_ratio },
        Criterion { name: "calcified/necrotic contracts", budget: secs(20), run: node_contracts },
        Criterion { name: "metrics", budget: secs(30), run: metrics },
        Criterion { name: "classifiers", budget: secs(60), run: classifiers },
        Criterion { name: "xgboost", budget: secs(60), run: xgboost },
        Criterion { name: "shap", budget: secs(90), run: shap },
        Criterion { name: "augmentations", budget: secs(30), run: augmentations },
        Criterion { name: "end-to-end pipeline", budget: secs(300), run: end_to_end },
        Criterion { name: "report shapes", budget: secs(60), run: report_shapes },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let dt = t0.elapsed();
        let out = match out {
            Ok(d) if dt > c.budget => Err(format!("{d}; over the {}s budget", c.budget.as_secs())),
            o => o,
        };
        let (tag, detail) = match &out {
            Ok(d) => ("PASS", d),
            Err(e) => ("FAIL", e),
        };
        println!("{tag} {:<30} {:>7.2}s  {detail}", c.name, dt.as_secs_f64());
        if out.is_err() {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
