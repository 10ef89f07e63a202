//! Class-level concepts: concise maps are described by their cosine
//! similarity to every neuron map of the explanation set, which makes them
//! comparable across images; DBSCAN then groups the resulting rows.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalbench::{binarize, iou, normalize_to_uint8, FeatureMask};
use crate::factorize::ConciseSet;
use crate::relprop::{Condition, ExplanationSet};
use crate::tensor::Tensor;

pub const DEFAULT_EPSILON: f64 = 1.4;
pub const DEFAULT_MIN_POINTS: usize = 5;

/// Label of a point that belongs to no cluster.
pub const NOISE: i64 = -1;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityBlock {
    pub image_id: String,
    /// Shape `(|E_s(x)|, |E(x)|)`.
    pub matrix: Tensor,
    pub conditions: Vec<Condition>,
}

/// Cosine similarity; zero when either vector is all zeros.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
}

/// `A(x)`: cosine of every concise map against every base map.
pub fn similarity_block(cs: &ConciseSet, ex: &ExplanationSet) -> Result<SimilarityBlock> {
    if cs.image_id != ex.image_id {
        return Err(Error::Config(format!(
            "concise set of {} paired with explanation set of {}",
            cs.image_id, ex.image_id
        )));
    }
    let base = ex.maps.first().ok_or(Error::Empty("explanation set has no maps"))?;
    for m in cs.maps.iter().chain(ex.maps.iter().map(|m| &m.values)) {
        if m.shape() != base.values.shape() {
            return Err(Error::Shape {
                expected: base.values.shape().to_vec(),
                actual: m.shape().to_vec(),
            });
        }
    }
    let mut data = Vec::with_capacity(cs.len() * ex.len());
    for concise in &cs.maps {
        for b in &ex.maps {
            data.push(cosine(concise.data(), b.values.data()));
        }
    }
    Ok(SimilarityBlock {
        image_id: cs.image_id.clone(),
        matrix: Tensor::from_parts(vec![cs.len(), ex.len()], data),
        conditions: ex.conditions(),
    })
}

/// Identifies one flattened row: concise map `map_index` of `image_id`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowRef {
    pub image_id: String,
    pub map_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTensor {
    pub blocks: Vec<SimilarityBlock>,
    /// Shape `(Σ|E_s(x)|, |E|)`; block rows stacked in image order.
    pub flattened: Tensor,
    pub rows: Vec<RowRef>,
}

impl SimilarityTensor {
    pub fn row_of(&self, r: &RowRef) -> Option<usize> {
        self.rows.iter().position(|x| x == r)
    }
}

/// Stacks per-image blocks. All blocks must share the same condition list.
pub fn build_tensor(blocks: Vec<SimilarityBlock>) -> Result<SimilarityTensor> {
    let first = blocks.first().ok_or(Error::Empty("no similarity blocks"))?;
    let cols = first.matrix.shape()[1];
    let conditions = first.conditions.clone();
    let mut data = Vec::new();
    let mut rows = Vec::new();
    for b in &blocks {
        if b.matrix.shape()[1] != cols {
            return Err(Error::Shape {
                expected: vec![b.matrix.shape()[0], cols],
                actual: b.matrix.shape().to_vec(),
            });
        }
        if b.conditions != conditions {
            return Err(Error::Config(format!(
                "image {} uses a different condition list; cluster with class-mean selection",
                b.image_id
            )));
        }
        data.extend_from_slice(b.matrix.data());
        rows.extend((0..b.matrix.shape()[0]).map(|i| RowRef {
            image_id: b.image_id.clone(),
            map_index: i,
        }));
    }
    let flattened = Tensor::from_parts(vec![rows.len(), cols], data);
    Ok(SimilarityTensor {
        blocks,
        flattened,
        rows,
    })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// DBSCAN over the rows of `points` with Euclidean distance.
///
/// A point is core when at least `min_points` points (itself included) lie
/// within `epsilon`. Clusters are numbered in discovery order while scanning
/// rows top to bottom; a border point reachable from several clusters joins
/// the first one discovered.
pub fn dbscan(points: &Tensor, epsilon: f64, min_points: usize) -> Result<Vec<i64>> {
    let &[n, _] = points.shape() else {
        return Err(Error::Config("dbscan expects a matrix of points".into()));
    };
    if n == 0 {
        return Err(Error::Empty("dbscan needs at least one point"));
    }
    if !(epsilon > 0.0) || min_points == 0 {
        return Err(Error::Config(format!(
            "dbscan needs epsilon > 0 and min_points >= 1 (got {epsilon}, {min_points})"
        )));
    }
    let eps2 = epsilon * epsilon;
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| squared_distance(points.row(i), points.row(j)) <= eps2)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_points).collect();

    const UNVISITED: i64 = i64::MIN;
    let mut labels = vec![UNVISITED; n];
    let mut next_cluster = 0i64;
    let mut queue = VecDeque::new();
    for p in 0..n {
        if labels[p] != UNVISITED {
            continue;
        }
        if !core[p] {
            labels[p] = NOISE;
            continue;
        }
        let id = next_cluster;
        next_cluster += 1;
        labels[p] = id;
        queue.push_back(p);
        while let Some(q) = queue.pop_front() {
            for &r in &neighbors[q] {
                if labels[r] == UNVISITED || labels[r] == NOISE {
                    let fresh = labels[r] == UNVISITED;
                    labels[r] = id;
                    if fresh && core[r] {
                        queue.push_back(r);
                    }
                }
            }
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub epsilon: f64,
    pub min_points: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            min_points: DEFAULT_MIN_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster_id: i64,
    /// Members ordered by distance to the cluster centroid, nearest first.
    pub members: Vec<RowRef>,
    /// Mean IoU per feature; `None` when no member image has that mask.
    pub feature_scores: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub parameters: DbscanParams,
    pub rows: Vec<RowRef>,
    pub labels: Vec<i64>,
    pub clusters: Vec<ClusterSummary>,
    /// Binarization threshold used for the feature scores, if scored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u8>,
}

impl ClusterReport {
    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }
}

/// Runs DBSCAN on the flattened tensor and groups members per cluster.
pub fn cluster_tensor(tensor: &SimilarityTensor, params: DbscanParams) -> Result<ClusterReport> {
    let labels = dbscan(&tensor.flattened, params.epsilon, params.min_points)?;
    let cols = tensor.flattened.shape()[1];
    let count = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0)) as usize;
    let mut clusters = Vec::with_capacity(count);
    for id in 0..count as i64 {
        let idx: Vec<usize> = (0..labels.len()).filter(|&r| labels[r] == id).collect();
        let mut centroid = vec![0.0; cols];
        for &r in &idx {
            for (c, v) in centroid.iter_mut().zip(tensor.flattened.row(r)) {
                *c += v / idx.len() as f64;
            }
        }
        let mut by_distance: Vec<(f64, usize)> = idx
            .iter()
            .map(|&r| (squared_distance(tensor.flattened.row(r), &centroid), r))
            .collect();
        by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        clusters.push(ClusterSummary {
            cluster_id: id,
            members: by_distance.iter().map(|&(_, r)| tensor.rows[r].clone()).collect(),
            feature_scores: Vec::new(),
        });
    }
    Ok(ClusterReport {
        parameters: params,
        rows: tensor.rows.clone(),
        labels,
        clusters,
        threshold: None,
    })
}

/// Mean IoU of each cluster's binarized member maps against each feature.
///
/// Members whose image lacks feature `f` are skipped for that feature; a
/// feature with no scoreable member is reported as `None`.
pub fn cluster_feature_score(
    report: &ClusterReport,
    concise_sets: &BTreeMap<String, ConciseSet>,
    masks: &BTreeMap<String, Vec<FeatureMask>>,
    feature_count: usize,
    threshold: u8,
) -> Result<Vec<Vec<Option<f64>>>> {
    let mut scores = Vec::with_capacity(report.clusters.len());
    for cluster in &report.clusters {
        let mut sums = vec![(0.0, 0usize); feature_count];
        for member in &cluster.members {
            let cs = concise_sets.get(&member.image_id).ok_or_else(|| {
                Error::Config(format!("no concise set for image {}", member.image_id))
            })?;
            let map = cs.maps.get(member.map_index).ok_or_else(|| {
                Error::Config(format!("image {} has no concise map {}", member.image_id, member.map_index))
            })?;
            let binary = binarize(&normalize_to_uint8(map), threshold);
            for mask in masks.get(&member.image_id).into_iter().flatten() {
                if mask.feature_index >= feature_count {
                    continue;
                }
                let score = iou(&binary, &mask.binary())?;
                let slot = &mut sums[mask.feature_index];
                slot.0 += score;
                slot.1 += 1;
            }
        }
        scores.push(
            sums.into_iter()
                .map(|(s, n)| (n > 0).then(|| s / n as f64))
                .collect(),
        );
    }
    Ok(scores)
}

/// Fills `feature_scores` of every cluster in place.
pub fn score_report(
    report: &mut ClusterReport,
    concise_sets: &BTreeMap<String, ConciseSet>,
    masks: &BTreeMap<String, Vec<FeatureMask>>,
    feature_count: usize,
    threshold: u8,
) -> Result<()> {
    let scores = cluster_feature_score(report, concise_sets, masks, feature_count, threshold)?;
    for (cluster, s) in report.clusters.iter_mut().zip(scores) {
        cluster.feature_scores = s;
    }
    report.threshold = Some(threshold);
    Ok(())
}
