use exactct_core::biomarkers::{detect_calcified, CalcifiedParams};
use exactct_core::gmm::{fit_gmm, select_k_by_bic, BicPenalty, FitOptions};
use exactct_core::ml::{auc, roc_curve};
use exactct_core::morphology::{dilate, erode, union_masks, StructuringElement};
use exactct_core::shap::explain_shap;
use exactct_core::synth::{compose_augment, translate, AugmentSpec};
use exactct_core::tree::{Node, Tree};
use exactct_core::vesselness::{refine_probability, wall_distance_weight, DistanceParams, RefineSchedule};
use exactct_core::volume::window_hu;
use exactct_core::xgb::XgbEnsemble;
use exactct_core::{BinaryMask, CtVolume, Grid, ProbabilityVolume};
use proptest::prelude::*;

const N: usize = 8;

fn grid() -> Grid {
    Grid::new([N, N, N], [1.0, 1.0, 2.0]).unwrap()
}

fn mask_strategy() -> impl Strategy<Value = BinaryMask> {
    prop::collection::vec(any::<bool>(), N * N * N).prop_map(|b| BinaryMask::new(grid(), b).unwrap())
}

fn prob_strategy() -> impl Strategy<Value = ProbabilityVolume> {
    prop::collection::vec(0.0f32..=1.0, N * N * N).prop_map(|v| ProbabilityVolume::new(grid(), v).unwrap())
}

fn vol_strategy() -> impl Strategy<Value = CtVolume> {
    prop::collection::vec(-1000.0f32..1500.0, N * N * N).prop_map(|v| CtVolume::new(grid(), v).unwrap())
}

fn elem_strategy() -> impl Strategy<Value = StructuringElement> {
    (any::<bool>(), 1usize..3).prop_map(|(c, r)| if c { StructuringElement::cube(r).unwrap() } else { StructuringElement::cross(r).unwrap() })
}

fn subset(a: &BinaryMask, b: &BinaryMask) -> bool {
    a.bits().iter().zip(b.bits()).all(|(&x, &y)| !x || y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn windowing_is_monotone_and_bounded(a in -3000.0f32..3000.0, b in -3000.0f32..3000.0, lo in -1000.0f64..0.0, w in 1.0f64..500.0) {
        let g = Grid::new([2, 1, 1], [1.0; 3]).unwrap();
        let v = CtVolume::new(g, vec![a.min(b), a.max(b)]).unwrap();
        let out = window_hu(&v, lo, lo + w).unwrap();
        let o = out.values();
        prop_assert!(o[0] <= o[1]);
        prop_assert!(o.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn morphology_order_properties(m in mask_strategy(), extra in mask_strategy(), e in elem_strategy()) {
        let big = union_masks(&[&m, &extra]).unwrap();
        prop_assert!(subset(&m, &dilate(&m, e, 1)));
        prop_assert!(subset(&erode(&m, e, 1), &m));
        prop_assert!(subset(&dilate(&m, e, 1), &dilate(&big, e, 1)));
        prop_assert!(subset(&erode(&m, e, 1), &erode(&big, e, 1)));
    }

    #[test]
    fn erosion_is_dual_to_dilation_away_from_borders(m in mask_strategy(), e in elem_strategy()) {
        let lhs = erode(&m, e, 1).complement();
        let rhs = dilate(&m.complement(), e, 1);
        let r = e.radius;
        for z in r..N - r {
            for y in r..N - r {
                for x in r..N - r {
                    prop_assert_eq!(lhs.get(x, y, z), rhs.get(x, y, z));
                }
            }
        }
    }

    #[test]
    fn union_laws(a in mask_strategy(), b in mask_strategy(), c in mask_strategy()) {
        let ab = union_masks(&[&a, &b]).unwrap();
        let ba = union_masks(&[&b, &a]).unwrap();
        prop_assert_eq!(ab.bits(), ba.bits());
        let l = union_masks(&[&ab, &c]).unwrap();
        let bc = union_masks(&[&b, &c]).unwrap();
        let r = union_masks(&[&a, &bc]).unwrap();
        prop_assert_eq!(l.bits(), r.bits());
        let aa = union_masks(&[&a, &a]).unwrap();
        prop_assert_eq!(aa.bits(), a.bits());
    }

    #[test]
    fn identity_augment_and_integer_shift(v in vol_strategy(), dx in -3i32..=3, dy in -3i32..=3, dz in -2i32..=2) {
        let id = compose_augment(&v, &AugmentSpec::default()).unwrap();
        prop_assert_eq!(id.voxels(), v.voxels());
        let s = translate(&v, [dx as f64, dy as f64, 2.0 * dz as f64]);
        for z in 0..N {
            for y in 0..N {
                for x in 0..N {
                    let (sx, sy, sz) = (x as i32 - dx, y as i32 - dy, z as i32 - dz);
                    let inside = (0..N as i32).contains(&sx) && (0..N as i32).contains(&sy) && (0..N as i32).contains(&sz);
                    let want = if inside { v.get(sx as usize, sy as usize, sz as usize) } else { -1000.0 };
                    prop_assert_eq!(s.get(x, y, z), want);
                }
            }
        }
    }

    #[test]
    fn refinement_is_bounded_and_monotone(p in prob_strategy(), bump in prob_strategy(), lambda in 0.0f64..=1.0, k in 1usize..4) {
        let q: Vec<f32> = p.values().iter().zip(bump.values()).map(|(a, b)| a.max(*b)).collect();
        let q = ProbabilityVolume::new(grid(), q).unwrap();
        let s = RefineSchedule::constant(lambda, k);
        let rp = refine_probability(&p, &s).unwrap();
        let rq = refine_probability(&q, &s).unwrap();
        for (a, b) in rp.values().iter().zip(rq.values()) {
            prop_assert!((0.0..=1.0).contains(a));
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn distance_weight_never_exceeds_input(p in prob_strategy(), wall in prob_strategy(), gut in mask_strategy(), sigma in 1.0f64..12.0) {
        let params = DistanceParams { sigma_mm: sigma, ..Default::default() };
        let out = wall_distance_weight(&p, &wall, &gut, &params).unwrap();
        for ((o, i), &g) in out.values().iter().zip(p.values()).zip(gut.bits()) {
            prop_assert!(o <= i);
            if g {
                prop_assert_eq!(*o, 0.0);
            }
        }
    }

    #[test]
    fn calcified_never_flags_dilated_organs(v in vol_strategy(), organ in mask_strategy(), r in 1usize..3) {
        let params = CalcifiedParams { dilation_radius: r, edge_margin: 0, ..Default::default() };
        let res = detect_calcified(&v, &[&organ], &params).unwrap();
        let grown = dilate(&organ, StructuringElement::cube(r).unwrap(), 1);
        for (&f, &o) in res.mask.bits().iter().zip(grown.bits()) {
            prop_assert!(!(f && o));
        }
    }

    #[test]
    fn auc_invariant_to_monotone_transforms(
        s in prop::collection::vec(-5.0f64..5.0, 4..80),
        seed in any::<u64>(),
        a in 0.1f64..4.0,
    ) {
        let y: Vec<bool> = (0..s.len()).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
        prop_assume!(y.iter().any(|&b| b) && y.iter().any(|&b| !b));
        let t: Vec<f64> = s.iter().map(|v| (a * v).exp() + v.powi(3)).collect();
        let base = auc(&roc_curve(&s, &y).unwrap());
        prop_assert!((auc(&roc_curve(&t, &y).unwrap()) - base).abs() <= 1e-12);
        prop_assert!(base >= 0.5);
    }

    #[test]
    fn shap_local_accuracy(
        leaves in prop::collection::vec(-2.0f64..2.0, 6),
        feats in prop::collection::vec(0usize..4, 3),
        x in prop::collection::vec(-1.0f64..1.0, 4),
        bg in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..6),
    ) {
        let trees = (0..3)
            .map(|t| Tree {
                nodes: vec![
                    Node::Split { feature: feats[t], threshold: 0.0, left: 1, right: 2, cover: 1.0 },
                    Node::Leaf { value: leaves[2 * t], cover: 0.5 },
                    Node::Leaf { value: leaves[2 * t + 1], cover: 0.5 },
                ],
            })
            .collect();
        let e = XgbEnsemble { base_score: 0.1, trees, n_features: 4, trace: vec![] };
        let ex = explain_shap(&e, &x, &bg).unwrap();
        prop_assert!((ex.reconstructed() - e.margin(&x).unwrap()).abs() <= 1e-9);
        for j in 0..4 {
            if !feats.contains(&j) {
                prop_assert_eq!(ex.phi[j], 0.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn gmm_properties(seed in 0u64..1000, perm_seed in any::<u64>()) {
        let mut samples: Vec<f64> = (0..300)
            .map(|i| {
                let u = ((i as u64).wrapping_mul(2654435761).wrapping_add(seed) % 1000) as f64 / 1000.0;
                if i % 2 == 0 { 10.0 + 4.0 * u } else { 60.0 + 4.0 * u }
            })
            .collect();
        let m = fit_gmm(&samples, 2, seed, &FitOptions::default()).unwrap();
        for w in m.trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9);
        }
        for &x in samples.iter().step_by(17) {
            let r: f64 = m.responsibilities(x).iter().sum();
            prop_assert!((r - 1.0).abs() < 1e-12);
        }
        let a = select_k_by_bic(&samples, &[1, 2, 3], seed, &FitOptions::default(), BicPenalty::Parameters).unwrap();
        let n = samples.len();
        for i in (1..n).rev() {
            let j = (perm_seed.wrapping_mul(i as u64 + 7) >> 7) as usize % (i + 1);
            samples.swap(i, j);
        }
        let b = select_k_by_bic(&samples, &[1, 2, 3], seed, &FitOptions::default(), BicPenalty::Parameters).unwrap();
        prop_assert_eq!(a.k, b.k);
        prop_assert_eq!(a.means, b.means);
    }
}
