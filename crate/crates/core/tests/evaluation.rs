mod common;

use common::oracles;
use dcne::evalbench::{
    binarize, complexity, evaluate_class, holdout_split, iou, normalize_to_uint8, q_f_at_threshold, q_f_class,
    q_f_instance, select_threshold, EvalConfig, FeatureMask, ImageEval,
};
use dcne::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Tensor {
    let data = (0..h * w)
        .map(|_| match rng.gen_range(0..4) {
            0 => 0.0,
            1 => rng.gen_range(-1.0..1.0),
            _ => rng.gen_range(0.0..5.0),
        })
        .collect();
    Tensor::new(vec![h, w], data).unwrap()
}

fn random_mask(rng: &mut ChaCha8Rng, id: &str, f: usize, h: usize, w: usize) -> FeatureMask {
    let p = rng.gen_range(0.05..0.6);
    let grid = (0..h * w).map(|_| if rng.gen_bool(p) { 255 } else { 0 }).collect();
    FeatureMask::new(id, f, h, w, grid).unwrap()
}

#[test]
fn per_instance_scores_match_loop_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = EvalConfig::default();
    for case in 0..1000 {
        let (h, w) = (rng.gen_range(1..=12), rng.gen_range(1..=12));
        let maps: Vec<Tensor> = (0..rng.gen_range(1..=5)).map(|_| random_map(&mut rng, h, w)).collect();
        let grids: Vec<_> = maps.iter().map(normalize_to_uint8).collect();
        let mask = random_mask(&mut rng, "x", 0, h, w);
        let mut best_any = 0.0f64;
        for &t in &cfg.thresholds {
            let expected = maps.iter().map(|m| oracles::iou_reference(m, &mask, t)).fold(0.0, f64::max);
            let got = q_f_at_threshold(&grids, &mask, t).unwrap();
            assert!((got - expected).abs() < 1e-12, "case {case} t {t}: {got} vs {expected}");
            best_any = best_any.max(expected);
        }
        assert!((q_f_instance(&grids, &mask, &cfg).unwrap() - best_any).abs() < 1e-12);
    }
}

#[test]
fn normalization_spans_full_range() {
    let g = normalize_to_uint8(&Tensor::new(vec![1, 4], vec![-2.0, 0.0, 1.0, 2.0]).unwrap());
    assert_eq!(g.data, vec![0, 128, 191, 255]);
    let flat = normalize_to_uint8(&Tensor::new(vec![2, 2], vec![3.0; 4]).unwrap());
    assert_eq!(flat.data, vec![0; 4]);
    // Binarization is strict: 255 > 250 but 0 is never above any threshold.
    assert_eq!(binarize(&g, 0).bits, vec![false, true, true, true]);
    assert_eq!(binarize(&g, 250).bits, vec![false, false, false, true]);
}

#[test]
fn iou_of_empty_grids_is_zero_and_shapes_must_match() {
    let g = binarize(&normalize_to_uint8(&Tensor::new(vec![2, 2], vec![0.0; 4]).unwrap()), 0);
    assert_eq!(iou(&g, &g).unwrap(), 0.0);
    let other = binarize(&normalize_to_uint8(&Tensor::new(vec![1, 4], vec![0.0; 4]).unwrap()), 0);
    assert!(iou(&g, &other).is_err());
}

fn random_class(rng: &mut ChaCha8Rng, n: usize, features: usize) -> Vec<ImageEval> {
    (0..n)
        .map(|i| {
            let id = format!("img{i:03}");
            let maps: Vec<Tensor> = (0..rng.gen_range(1..=4)).map(|_| random_map(rng, 8, 8)).collect();
            let mut masks = Vec::new();
            for f in 0..features {
                if rng.gen_bool(0.8) {
                    masks.push(random_mask(rng, &id, f, 8, 8));
                }
            }
            ImageEval::from_tensors(&id, &maps, masks)
        })
        .collect()
}

#[test]
fn threshold_search_matches_grid_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let cfg = EvalConfig::default();
    for _ in 0..100 {
        let n = rng.gen_range(2..=8);
        let images = random_class(&mut rng, n, 2);
        if images.iter().all(|i| i.masks.is_empty()) {
            continue;
        }
        let scores: Vec<(u8, f64)> = cfg
            .thresholds
            .iter()
            .map(|&t| {
                let vals: Vec<f64> = images
                    .iter()
                    .flat_map(|img| img.masks.iter().map(move |m| q_f_at_threshold(&img.maps, m, t).unwrap()))
                    .collect();
                (t, vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect();
        let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let expected = scores.iter().find(|s| s.1 == best).unwrap().0;
        assert_eq!(select_threshold(&images, &cfg).unwrap(), expected);
    }
}

#[test]
fn absent_features_do_not_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let images = random_class(&mut rng, 10, 3);
    for f in 0..3 {
        let present: Vec<&ImageEval> = images.iter().filter(|i| i.mask(f).is_some()).collect();
        let expected =
            present.iter().map(|i| q_f_at_threshold(&i.maps, i.mask(f).unwrap(), 50).unwrap()).sum::<f64>() / present.len() as f64;
        assert!((q_f_class(&images, f, 50).unwrap() - expected).abs() < 1e-12);
    }
    let none: Vec<ImageEval> = images.iter().map(|i| ImageEval { masks: vec![], ..i.clone() }).collect();
    assert!(q_f_class(&none, 0, 50).is_err());
}

#[test]
fn holdout_is_a_seeded_partition() {
    for n in 2..40 {
        for seed in 0..5 {
            let cfg = EvalConfig { seed, ..Default::default() };
            let (h, s) = holdout_split(n, &cfg).unwrap();
            let expected = ((0.2 * n as f64).round() as usize).clamp(1, n - 1);
            assert_eq!(h.len(), expected);
            let mut all: Vec<usize> = h.iter().chain(&s).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            assert_eq!(holdout_split(n, &cfg).unwrap(), (h, s));
        }
    }
    assert!(holdout_split(1, &EvalConfig::default()).is_err());
}

#[test]
fn exact_single_map_scores_one_with_complexity_per_image() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let images: Vec<ImageEval> = (0..10)
        .map(|i| {
            let id = format!("img{i}");
            let mask = random_mask(&mut rng, &id, 0, 6, 6);
            let map = Tensor::new(vec![6, 6], mask.grid.iter().map(|&v| v as f64 / 255.0).collect()).unwrap();
            ImageEval::from_tensors(&id, &[map], vec![mask])
        })
        .collect();
    let report = evaluate_class("exact", "c", &["f".into()], &images, &EvalConfig::default()).unwrap();
    assert_eq!(report.features[0].q_f, Some(1.0));
    assert_eq!(report.complexity_total, 10);
    assert_eq!(report.complexity_per_image, 1.0);
    assert_eq!(complexity(&images), 10);
    assert_eq!(report.holdout_images.len() + report.scoring_images.len(), 10);
}

#[test]
fn invalid_masks_and_configs_are_rejected() {
    assert!(FeatureMask::new("x", 0, 2, 2, vec![0, 255, 7, 0]).is_err());
    assert!(FeatureMask::new("x", 0, 2, 2, vec![0, 255, 0]).is_err());
    for cfg in [
        EvalConfig { thresholds: vec![], ..Default::default() },
        EvalConfig { thresholds: vec![50, 25], ..Default::default() },
        EvalConfig { holdout_fraction: 1.0, ..Default::default() },
    ] {
        assert!(cfg.validate().is_err());
    }
}
