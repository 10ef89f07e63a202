mod common;

use common::oracles;
use dcne::cluster::{
    build_tensor, cluster_tensor, dbscan, similarity_block, DbscanParams, RowRef, DEFAULT_EPSILON, DEFAULT_MIN_POINTS, NOISE,
};
use dcne::factorize::ConciseSet;
use dcne::relprop::{AttributionMap, Condition, ExplanationSet};
use dcne::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn dbscan_matches_reference_labelling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let points = oracles::random_points(&mut rng);
        let (eps, min_points) = if case % 2 == 0 {
            (DEFAULT_EPSILON, DEFAULT_MIN_POINTS)
        } else {
            (rng.gen_range(0.3..3.0), rng.gen_range(1..=8))
        };
        let got = dbscan(&oracles::to_tensor(&points), eps, min_points).unwrap();
        assert_eq!(got, oracles::dbscan_reference(&points, eps, min_points), "case {case}");
    }
}

#[test]
fn core_partition_survives_row_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let points = oracles::random_points(&mut rng);
        let n = points.len();
        let base = dbscan(&oracles::to_tensor(&points), DEFAULT_EPSILON, DEFAULT_MIN_POINTS).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| points[i].clone()).collect();
        let moved = dbscan(&oracles::to_tensor(&shuffled), DEFAULT_EPSILON, DEFAULT_MIN_POINTS).unwrap();
        let core = oracles::dbscan_core(&points, DEFAULT_EPSILON, DEFAULT_MIN_POINTS);
        for a in 0..n {
            // Noise stays noise regardless of order.
            assert_eq!(base[perm[a]] == NOISE, moved[a] == NOISE);
            for b in 0..n {
                if core[perm[a]] && core[perm[b]] {
                    assert_eq!(base[perm[a]] == base[perm[b]], moved[a] == moved[b]);
                }
            }
        }
    }
}

#[test]
fn boundary_distance_counts_as_neighbor() {
    // Four points at the origin and one exactly at distance 1.
    let mut pts = vec![vec![0.0, 0.0]; 4];
    pts.push(vec![0.6, 0.8]);
    assert_eq!(dbscan(&oracles::to_tensor(&pts), 1.0, 5).unwrap(), vec![0; 5]);
    assert_eq!(dbscan(&oracles::to_tensor(&pts), 0.99, 5).unwrap(), vec![NOISE; 5]);
}

#[test]
fn rejects_bad_parameters() {
    let t = oracles::to_tensor(&[vec![0.0]]);
    assert!(dbscan(&t, 0.0, 5).is_err());
    assert!(dbscan(&t, 1.0, 0).is_err());
    assert!(dbscan(&Tensor::new(vec![3], vec![0.0; 3]).unwrap(), 1.0, 1).is_err());
}

/// 4x4 map with ones on the given cells.
fn map(cells: &[usize]) -> Tensor {
    let mut v = vec![0.0; 16];
    for &c in cells {
        v[c] = 1.0;
    }
    Tensor::new(vec![4, 4], v).unwrap()
}

const LEFT: [usize; 4] = [0, 4, 8, 12];
const RIGHT: [usize; 4] = [3, 7, 11, 15];
const TOP: [usize; 2] = [1, 2];
const BOTTOM: [usize; 2] = [13, 14];

#[test]
fn same_concept_at_different_positions_clusters_together() {
    // Concept 0 is read by neuron 0, concept 1 by neuron 1; neurons 2 and 3
    // respond to unrelated structure. Odd images are mirrored and list their
    // concise maps in reverse order.
    let mut blocks = Vec::new();
    for i in 0..6 {
        let (a, b) = if i % 2 == 0 { (&LEFT, &RIGHT) } else { (&RIGHT, &LEFT) };
        let id = format!("img{i}");
        let base = [map(a), map(b), map(&TOP), map(&BOTTOM)];
        let ex = ExplanationSet {
            image_id: id.clone(),
            maps: base
                .iter()
                .enumerate()
                .map(|(k, m)| AttributionMap {
                    condition: Condition::new(1, k),
                    values: m.clone(),
                })
                .collect(),
        };
        let mut concise = vec![map(a), map(b)];
        if i % 2 == 1 {
            concise.reverse();
        }
        let cs = ConciseSet {
            image_id: id,
            maps: concise,
            mixing: Tensor::new(vec![4, 2], vec![1.0; 8]).unwrap(),
        };
        blocks.push(similarity_block(&cs, &ex).unwrap());
    }
    let tensor = build_tensor(blocks).unwrap();
    let report = cluster_tensor(&tensor, DbscanParams::default()).unwrap();
    assert_eq!(report.clusters.len(), 2);
    assert_eq!(report.noise_count(), 0);
    let concept_of = |r: &RowRef| {
        let odd = r.image_id.ends_with(['1', '3', '5']);
        r.map_index ^ odd as usize
    };
    for c in &report.clusters {
        assert_eq!(c.members.len(), 6);
        let first = concept_of(&c.members[0]);
        assert!(c.members.iter().all(|m| concept_of(m) == first));
        let images: std::collections::BTreeSet<_> = c.members.iter().map(|m| &m.image_id).collect();
        assert_eq!(images.len(), 6);
    }
}
