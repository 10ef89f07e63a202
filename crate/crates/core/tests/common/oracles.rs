//! Brute-force references shared by the oracle tests and the acceptance run.

use dcne::cluster::NOISE;
use dcne::evalbench::FeatureMask;
use dcne::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Reference labelling: core points form connected components (numbered by
/// their smallest core index), each border point takes the smallest id among
/// its core neighbors.
pub fn dbscan_reference(points: &[Vec<f64>], eps: f64, min_points: usize) -> Vec<i64> {
    let n = points.len();
    let close = |i: usize, j: usize| {
        let d: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        d <= eps
    };
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| close(i, j)).count() >= min_points).collect();
    let mut comp = vec![usize::MAX; n];
    for i in 0..n {
        if core[i] && comp[i] == usize::MAX {
            let mut stack = vec![i];
            comp[i] = i;
            while let Some(p) = stack.pop() {
                for q in 0..n {
                    if core[q] && comp[q] == usize::MAX && close(p, q) {
                        comp[q] = i;
                        stack.push(q);
                    }
                }
            }
        }
    }
    let mut roots: Vec<usize> = (0..n).filter(|&i| core[i] && comp[i] == i).collect();
    roots.sort_unstable();
    let id_of = |root: usize| roots.iter().position(|&r| r == root).unwrap() as i64;
    (0..n)
        .map(|i| {
            if core[i] {
                id_of(comp[i])
            } else {
                (0..n)
                    .filter(|&j| core[j] && close(i, j))
                    .map(|j| id_of(comp[j]))
                    .min()
                    .unwrap_or(NOISE)
            }
        })
        .collect()
}

pub fn random_points(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rng.gen_range(1..=200);
    let dim = rng.gen_range(1..=6);
    let centers: Vec<Vec<f64>> = (0..rng.gen_range(1..=5))
        .map(|_| (0..dim).map(|_| rng.gen_range(-6.0..6.0)).collect())
        .collect();
    let spread = rng.gen_range(0.2..2.0);
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.1) {
                (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect()
            } else {
                let c = &centers[rng.gen_range(0..centers.len())];
                c.iter().map(|x| x + rng.gen_range(-spread..spread)).collect()
            }
        })
        .collect()
}

pub fn to_tensor(points: &[Vec<f64>]) -> Tensor {
    let dim = points[0].len();
    Tensor::new(vec![points.len(), dim], points.concat()).unwrap()
}

pub fn dbscan_core(points: &[Vec<f64>], eps: f64, min_points: usize) -> Vec<bool> {
    (0..points.len())
        .map(|i| {
            points
                .iter()
                .filter(|q| points[i].iter().zip(*q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= eps * eps)
                .count()
                >= min_points
        })
        .collect()
}

/// Loop reference for normalize, binarize and IoU at one threshold.
pub fn iou_reference(map: &Tensor, mask: &FeatureMask, t: u8) -> f64 {
    let v = map.data();
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut inter, mut union) = (0, 0);
    for (i, &x) in v.iter().enumerate() {
        let q = if hi > lo { ((x - lo) / (hi - lo) * 255.0).round() } else { 0.0 };
        let a = q > t as f64;
        let b = mask.grid[i] == 255;
        inter += (a && b) as u32;
        union += (a || b) as u32;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}
