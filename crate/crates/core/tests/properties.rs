mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Matrix3;
use nrrep::evaluation::greedy_assignment;
use nrrep::geometry::CriterionVariant;
use nrrep::io::summarize_normalized;
use nrrep::masks::Field;
use nrrep::matching::{is_correct, nn_ratio_match_descriptors};
use nrrep::{
    accumulate, count_keypoints, duplicate_set, ellipse_radii, find_correspondences,
    max_distance_curve, normalize_region, overlap_error, reproject_region, Correspondence,
    CriterionConfig, DescriptorMaskConfig, DomainRect, EllipticalRegion, Homography,
};
use proptest::prelude::*;

fn region_strategy(lo: f64, hi: f64) -> impl Strategy<Value = EllipticalRegion> {
    (lo..hi, lo..hi, 0.3f64..12.0, 0.3f64..12.0, 0.0..PI).prop_map(|(x, y, r1, r2, t)| {
        let (c, s) = (t.cos(), t.sin());
        let (l1, l2) = (r1 * r1, r2 * r2);
        EllipticalRegion::new(
            [x, y],
            c * c * l1 + s * s * l2,
            c * s * (l1 - l2),
            s * s * l1 + c * c * l2,
        )
        .unwrap()
    })
}

fn homography_strategy() -> impl Strategy<Value = Homography> {
    (
        -0.5f64..0.5,
        0.7f64..1.4,
        0.7f64..1.4,
        -0.2f64..0.2,
        -20.0f64..20.0,
        -20.0f64..20.0,
        -3e-4f64..3e-4,
        -3e-4f64..3e-4,
    )
        .prop_map(|(t, sx, sy, k, tx, ty, p, q)| {
            let (c, s) = (t.cos(), t.sin());
            Homography::new(Matrix3::new(
                sx * c,
                -sy * s + k,
                tx,
                sx * s,
                sy * c,
                ty,
                p,
                q,
                1.0,
            ))
            .unwrap()
        })
}

fn close(x: f64, y: f64, rel: f64) -> bool {
    (x - y).abs() <= rel * x.abs().max(y.abs()).max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn overlap_error_is_symmetric(a in region_strategy(0.0, 30.0), b in region_strategy(0.0, 30.0)) {
        prop_assert_eq!(overlap_error(&a, &b).unwrap(), overlap_error(&b, &a).unwrap());
    }

    #[test]
    fn overlap_error_of_a_region_with_itself_is_zero(a in region_strategy(0.0, 100.0)) {
        prop_assert_eq!(overlap_error(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn far_apart_regions_have_error_one(a in region_strategy(0.0, 10.0), shift in 40.0f64..500.0) {
        let c = a.center();
        let b = a.with_center([c.x + shift, c.y - shift]);
        prop_assert_eq!(overlap_error(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn overlap_error_is_scale_invariant(
        a in region_strategy(0.0, 20.0),
        b in region_strategy(0.0, 20.0),
        s in 0.1f64..10.0,
    ) {
        let scale = |r: &EllipticalRegion| {
            let c = r.center();
            r.with_center([c.x * s, c.y * s]).scaled(s).unwrap()
        };
        let before = overlap_error(&a, &b).unwrap();
        let after = overlap_error(&scale(&a), &scale(&b)).unwrap();
        prop_assert!((before - after).abs() <= 4e-3, "{before} vs {after}");
    }

    #[test]
    fn normalize_is_idempotent_and_keeps_eccentricity(a in region_strategy(0.0, 100.0), kappa in 1.0f64..60.0) {
        let once = normalize_region(&a, kappa).unwrap();
        let twice = normalize_region(&once, kappa).unwrap();
        let (e1, e2) = (once.entries(), twice.entries());
        prop_assert!(close(e1.0, e2.0, 1e-9) && close(e1.2, e2.2, 1e-9));
        prop_assert!((e1.1 - e2.1).abs() <= 1e-9 * e1.0.max(e1.2));
        let (r0, r1) = ellipse_radii(&a).unwrap();
        let (n0, n1) = ellipse_radii(&once).unwrap();
        prop_assert!(close(r0 / r1, n0 / n1, 1e-9));
    }

    #[test]
    fn reprojection_round_trips(a in region_strategy(50.0, 400.0), h in homography_strategy()) {
        let back = reproject_region(&reproject_region(&a, &h).unwrap(), &h.inverse().unwrap()).unwrap();
        prop_assert!((a.center() - back.center()).norm() <= 1e-6);
        let (x, y) = (a.entries(), back.entries());
        let scale = x.0.max(x.2);
        prop_assert!((x.0 - y.0).abs() <= 1e-6 * scale);
        prop_assert!((x.1 - y.1).abs() <= 1e-6 * scale);
        prop_assert!((x.2 - y.2).abs() <= 1e-6 * scale);
    }

    #[test]
    fn d_max_grows_with_epsilon(r in 0.5f64..80.0, e1 in 0.02f64..0.9, e2 in 0.02f64..0.9) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        for variant in [CriterionVariant::Original, CriterionVariant::Normalized] {
            let d_lo = max_distance_curve(r, &CriterionConfig::new(variant, lo, 30.0).unwrap()).unwrap();
            let d_hi = max_distance_curve(r, &CriterionConfig::new(variant, hi, 30.0).unwrap()).unwrap();
            prop_assert!(d_lo <= d_hi + 2e-3, "{variant:?}: {d_lo} > {d_hi}");
        }
    }

    #[test]
    fn original_d_max_is_linear_in_r(r in 0.5f64..50.0, eps in 0.05f64..0.8) {
        let cfg = CriterionConfig::new(CriterionVariant::Original, eps, 30.0).unwrap();
        let ratio = max_distance_curve(2.0 * r, &cfg).unwrap() / max_distance_curve(r, &cfg).unwrap();
        prop_assert!((ratio - 2.0).abs() <= 1e-2, "ratio {ratio}");
    }
}

fn mask_domain() -> DomainRect {
    DomainRect::new(160, 160).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn max_field_never_exceeds_sum_field(regions in prop::collection::vec(region_strategy(0.0, 160.0), 1..12)) {
        let map = accumulate(&regions, &DescriptorMaskConfig::surf(), &mask_domain());
        for (m, s) in map.field(Field::Max).iter().zip(map.field(Field::Sum)) {
            prop_assert!(m <= s);
        }
        let (k, k_nr) = count_keypoints(&map);
        prop_assert!(k_nr <= k + 1e-9);
    }

    #[test]
    fn adding_a_detection_adds_one_to_k(
        regions in prop::collection::vec(region_strategy(60.0, 100.0), 0..8),
        extra in region_strategy(60.0, 100.0),
    ) {
        let cfg = DescriptorMaskConfig::mser();
        let before = count_keypoints(&accumulate(&regions, &cfg, &mask_domain()));
        let mut more = regions.clone();
        more.push(extra);
        let after = count_keypoints(&accumulate(&more, &cfg, &mask_domain()));
        prop_assert!((after.0 - before.0 - 1.0).abs() <= 1e-6);
        prop_assert!(after.1 >= before.1 - 1e-12);
    }

    #[test]
    fn duplicating_detections_leaves_max_field_unchanged(regions in prop::collection::vec(region_strategy(0.0, 160.0), 1..10)) {
        let cfg = DescriptorMaskConfig::sift();
        let once = accumulate(&regions, &cfg, &mask_domain());
        let doubled: Vec<_> = regions.iter().chain(&regions).copied().collect();
        let twice = accumulate(&doubled, &cfg, &mask_domain());
        prop_assert_eq!(once.field(Field::Max), twice.field(Field::Max));
    }

    #[test]
    fn k_nr_ignores_order(regions in prop::collection::vec(region_strategy(0.0, 160.0), 1..10), seed in any::<u64>()) {
        let cfg = DescriptorMaskConfig::brisk();
        let mut shuffled = regions.clone();
        let mut rng = common::rng(seed);
        for k in (1..shuffled.len()).rev() {
            shuffled.swap(k, rand::Rng::random_range(&mut rng, 0..=k));
        }
        let a = accumulate(&regions, &cfg, &mask_domain());
        let b = accumulate(&shuffled, &cfg, &mask_domain());
        prop_assert_eq!(a.field(Field::Max), b.field(Field::Max));
    }

    #[test]
    fn single_interior_detection_counts_one(r in region_strategy(70.0, 90.0)) {
        let (k, k_nr) = count_keypoints(&accumulate(&[r], &DescriptorMaskConfig::sift(), &mask_domain()));
        prop_assert!((k - 1.0).abs() <= 1e-6 && (k_nr - 1.0).abs() <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn correspondences_are_one_to_one(
        a in prop::collection::vec(region_strategy(0.0, 60.0), 0..15),
        b in prop::collection::vec(region_strategy(0.0, 60.0), 0..15),
    ) {
        let pairs = find_correspondences(&a, &b, &Homography::identity(), &CriterionConfig::default());
        let mut seen_a = vec![false; a.len()];
        let mut seen_b = vec![false; b.len()];
        for p in &pairs {
            prop_assert!(!seen_a[p.index_a] && !seen_b[p.index_b]);
            seen_a[p.index_a] = true;
            seen_b[p.index_b] = true;
        }
    }

    #[test]
    fn larger_epsilon_never_loses_pairs(
        a in prop::collection::vec(region_strategy(0.0, 60.0), 1..12),
        b in prop::collection::vec(region_strategy(0.0, 60.0), 1..12),
        e1 in 0.05f64..0.95,
        e2 in 0.05f64..0.95,
    ) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let h = Homography::identity();
        let n_lo = find_correspondences(&a, &b, &h, &CriterionConfig::new(CriterionVariant::Original, lo, 30.0).unwrap()).len();
        let n_hi = find_correspondences(&a, &b, &h, &CriterionConfig::new(CriterionVariant::Original, hi, 30.0).unwrap()).len();
        prop_assert!(n_lo <= n_hi, "{n_lo} pairs at {lo}, {n_hi} at {hi}");
    }

    #[test]
    fn greedy_ignores_candidate_order(
        errors in prop::collection::vec((0usize..6, 0usize..6, 0u8..4), 0..30),
        seed in any::<u64>(),
    ) {
        let mut candidates: Vec<Correspondence> = errors
            .iter()
            .map(|&(i, j, e)| Correspondence { index_a: i, index_b: j, overlap_error: e as f64 * 0.1 })
            .collect();
        candidates.sort_by_key(|c| (c.index_a, c.index_b));
        candidates.dedup_by(|x, y| (x.index_a, x.index_b) == (y.index_a, y.index_b));
        let mut shuffled = candidates.clone();
        let mut rng = common::rng(seed);
        for k in (1..shuffled.len()).rev() {
            shuffled.swap(k, rand::Rng::random_range(&mut rng, 0..=k));
        }
        prop_assert_eq!(greedy_assignment(candidates, 6, 6), greedy_assignment(shuffled, 6, 6));
    }

    #[test]
    fn matching_ignores_b_permutation(
        a in prop::collection::vec(prop::collection::vec(0u8..4, 4), 1..20),
        b in prop::collection::vec(prop::collection::vec(0u8..4, 4), 2..20),
        seed in any::<u64>(),
    ) {
        let to_f = |v: &Vec<Vec<u8>>| -> Vec<Vec<f64>> {
            v.iter().map(|d| d.iter().map(|&x| x as f64).collect()).collect()
        };
        let (a, b) = (to_f(&a), to_f(&b));
        let mut perm: Vec<usize> = (0..b.len()).collect();
        let mut rng = common::rng(seed);
        for k in (1..perm.len()).rev() {
            perm.swap(k, rand::Rng::random_range(&mut rng, 0..=k));
        }
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&j| b[j].clone()).collect();
        let direct = nn_ratio_match_descriptors(&a, &b, 0.6).unwrap();
        let shuffled = nn_ratio_match_descriptors(&a, &permuted, 0.6).unwrap();
        // Same queries matched, at the same distances, to descriptors with the same value.
        prop_assert_eq!(direct.len(), shuffled.len());
        for (x, y) in direct.iter().zip(&shuffled) {
            prop_assert_eq!(x.index_a, y.index_a);
            prop_assert_eq!(x.distance.to_bits(), y.distance.to_bits());
            prop_assert_eq!(x.nn_ratio.to_bits(), y.nn_ratio.to_bits());
            prop_assert_eq!(&b[x.index_b], &permuted[y.index_b]);
        }
    }

    #[test]
    fn correctness_endpoints(err in 0.0f64..=1.0) {
        prop_assert!(is_correct(err, 1.0));
        prop_assert_eq!(is_correct(err, 0.0), err == 0.0);
    }

    #[test]
    fn summary_ignores_affine_rescaling(
        values in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..5),
        scale in 0.01f64..100.0,
        shift in -50.0f64..50.0,
    ) {
        let table = |f: &dyn Fn(f64) -> f64| -> BTreeMap<String, BTreeMap<String, f64>> {
            values
                .iter()
                .enumerate()
                .map(|(s, col)| {
                    let col = col.iter().enumerate().map(|(d, &v)| (format!("det{d}"), f(v))).collect();
                    (format!("seq{s}"), col)
                })
                .collect()
        };
        let plain = summarize_normalized(&table(&|v| v)).unwrap();
        let moved = summarize_normalized(&table(&|v| v * scale + shift)).unwrap();
        for (d, v) in &plain {
            prop_assert!((v - moved[d]).abs() <= 1e-9, "{d}: {v} vs {}", moved[d]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn duplication_doubles_pairs_and_keeps_rep(seed in 0u64..1000) {
        let (a, b, h) = common::synthetic_pair(seed, 25, 160);
        let cfg = CriterionConfig::default();
        let base = find_correspondences(&a.detections, &b.detections, &h, &cfg);
        let a2 = duplicate_set(&a, 2).unwrap();
        let b2 = duplicate_set(&b, 2).unwrap();
        let dup = find_correspondences(&a2.detections, &b2.detections, &h, &cfg);
        prop_assert_eq!(dup.len(), 2 * base.len());
    }
}
