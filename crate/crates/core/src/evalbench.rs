//! Scoring attribution maps against binary feature masks.
//!
//! Maps are min-max normalized to `u8`, binarized with a strict `> t`, and
//! compared to masks by IoU. Per image and feature the best map counts; the
//! threshold is either searched per image or fixed per (method, class) from a
//! held-out split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorize::ConciseSet;
use crate::relprop::ExplanationSet;
use crate::tensor::Tensor;

pub const DEFAULT_THRESHOLDS: [u8; 7] = [0, 25, 50, 100, 150, 200, 250];
pub const DEFAULT_HOLDOUT_FRACTION: f64 = 0.2;

/// Expert mask `V_f(x)`: 0 outside the feature, 255 inside.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMask {
    pub image_id: String,
    pub feature_index: usize,
    pub height: usize,
    pub width: usize,
    pub grid: Vec<u8>,
}

impl FeatureMask {
    pub fn new(image_id: &str, feature_index: usize, height: usize, width: usize, grid: Vec<u8>) -> Result<Self> {
        if grid.len() != height * width {
            return Err(Error::Shape {
                expected: vec![height, width],
                actual: vec![grid.len()],
            });
        }
        if grid.iter().any(|&v| v != 0 && v != 255) {
            return Err(Error::Format(format!(
                "mask {image_id}/{feature_index} is not binary (values must be 0 or 255)"
            )));
        }
        Ok(Self {
            image_id: image_id.to_string(),
            feature_index,
            height,
            width,
            grid,
        })
    }

    pub fn binary(&self) -> BinaryGrid {
        BinaryGrid {
            height: self.height,
            width: self.width,
            bits: self.grid.iter().map(|&v| v != 0).collect(),
        }
    }
}

/// Attribution map rescaled to `0..=255`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid8 {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryGrid {
    pub height: usize,
    pub width: usize,
    pub bits: Vec<bool>,
}

impl BinaryGrid {
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Per-map min-max scaling with round-half-up; a constant map becomes zeros.
pub fn normalize_to_uint8(map: &Tensor) -> Grid8 {
    let (height, width) = match map.shape() {
        &[h, w] => (h, w),
        other => (1, other.iter().product()),
    };
    let (lo, hi) = (map.min(), map.max());
    let data = if !(hi > lo) {
        vec![0; map.len()]
    } else {
        let span = hi - lo;
        map.data()
            .iter()
            .map(|&v| ((v - lo) / span * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
            .collect()
    };
    Grid8 {
        height,
        width,
        data,
    }
}

/// `grid > t`, taken strictly.
pub fn binarize(grid: &Grid8, t: u8) -> BinaryGrid {
    BinaryGrid {
        height: grid.height,
        width: grid.width,
        bits: grid.data.iter().map(|&v| v > t).collect(),
    }
}

/// `|a ∧ b| / |a ∨ b|`, or 0 when the union is empty.
pub fn iou(a: &BinaryGrid, b: &BinaryGrid) -> Result<f64> {
    if (a.height, a.width) != (b.height, b.width) || a.bits.len() != b.bits.len() {
        return Err(Error::Shape {
            expected: vec![a.height, a.width],
            actual: vec![b.height, b.width],
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub thresholds: Vec<u8>,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            holdout_fraction: DEFAULT_HOLDOUT_FRACTION,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::Config("threshold list is empty".into()));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("thresholds must be strictly increasing".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config(format!(
                "holdout fraction {} must lie in (0, 1)",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

/// `Q_f(E(x), t)`: best IoU of any binarized map against the mask.
pub fn q_f_at_threshold(maps: &[Grid8], mask: &FeatureMask, t: u8) -> Result<f64> {
    if maps.is_empty() {
        return Err(Error::Empty("explanation set has no maps"));
    }
    let target = mask.binary();
    let mut best = 0.0f64;
    for m in maps {
        best = best.max(iou(&binarize(m, t), &target)?);
    }
    Ok(best)
}

/// `Q_f(E(x))`: `Q_f(E(x), t)` maximized over the configured thresholds.
pub fn q_f_instance(maps: &[Grid8], mask: &FeatureMask, cfg: &EvalConfig) -> Result<f64> {
    let mut best = 0.0f64;
    for &t in &cfg.thresholds {
        best = best.max(q_f_at_threshold(maps, mask, t)?);
    }
    Ok(best)
}

/// One image's maps (already normalized) and the masks visible in it.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEval {
    pub image_id: String,
    pub maps: Vec<Grid8>,
    pub masks: Vec<FeatureMask>,
}

impl ImageEval {
    pub fn from_tensors(image_id: &str, maps: &[Tensor], masks: Vec<FeatureMask>) -> Self {
        Self {
            image_id: image_id.to_string(),
            maps: maps.iter().map(normalize_to_uint8).collect(),
            masks,
        }
    }

    pub fn mask(&self, feature: usize) -> Option<&FeatureMask> {
        self.masks.iter().find(|m| m.feature_index == feature)
    }
}

/// Seeded split of image indices into (held-out, scoring). The held-out part
/// holds `round(fraction * n)` images, at least one and leaving at least one.
pub fn holdout_split(n: usize, cfg: &EvalConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    cfg.validate()?;
    if n < 2 {
        return Err(Error::Empty("a held-out split needs at least two images"));
    }
    let k = ((cfg.holdout_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut holdout = idx[..k].to_vec();
    let mut scoring = idx[k..].to_vec();
    holdout.sort_unstable();
    scoring.sort_unstable();
    Ok((holdout, scoring))
}

/// Mean IoU over every (image, visible feature) pair at threshold `t`.
pub fn mean_iou_at(images: &[ImageEval], t: u8) -> Result<Option<f64>> {
    let (mut sum, mut n) = (0.0, 0usize);
    for img in images {
        for mask in &img.masks {
            sum += q_f_at_threshold(&img.maps, mask, t)?;
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Threshold from `cfg.thresholds` with the best held-out mean IoU; ties go
/// to the smaller threshold.
pub fn select_threshold(holdout: &[ImageEval], cfg: &EvalConfig) -> Result<u8> {
    cfg.validate()?;
    if holdout.is_empty() {
        return Err(Error::Empty("held-out subset is empty"));
    }
    let mut best: Option<(u8, f64)> = None;
    for &t in &cfg.thresholds {
        let score = mean_iou_at(holdout, t)?
            .ok_or(Error::Empty("held-out subset has no visible feature masks"))?;
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((t, score));
        }
    }
    Ok(best.unwrap().0)
}

/// `Q_f(E)`: mean of `Q_f(E(x), t)` over images where feature `f` is
/// visible; the others count toward neither sum nor denominator.
pub fn q_f_class(images: &[ImageEval], feature: usize, t: u8) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for img in images {
        if let Some(mask) = img.mask(feature) {
            sum += q_f_at_threshold(&img.maps, mask, t)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("no image has a mask for this feature"));
    }
    Ok(sum / n as f64)
}

/// Anything that contributes attribution maps to an explanation.
pub trait MapCollection {
    fn map_count(&self) -> usize;
}

impl MapCollection for ExplanationSet {
    fn map_count(&self) -> usize {
        self.maps.len()
    }
}

impl MapCollection for ConciseSet {
    fn map_count(&self) -> usize {
        self.maps.len()
    }
}

impl MapCollection for ImageEval {
    fn map_count(&self) -> usize {
        self.maps.len()
    }
}

/// `|E|`: total number of maps a reader has to inspect.
pub fn complexity<C: MapCollection>(collection: &[C]) -> usize {
    collection.iter().map(MapCollection::map_count).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature_index: usize,
    pub name: String,
    /// `None` when no scoring image shows the feature.
    pub q_f: Option<f64>,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFeatureRow {
    pub image_id: String,
    pub feature_index: usize,
    /// IoU at the selected (method, class) threshold.
    pub iou_at_threshold: f64,
    /// Best IoU over all configured thresholds.
    pub best_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEval {
    pub method: String,
    pub class_id: String,
    pub threshold: u8,
    pub holdout_images: Vec<String>,
    pub scoring_images: Vec<String>,
    pub features: Vec<FeatureScore>,
    pub per_image: Vec<ImageFeatureRow>,
    pub complexity_total: usize,
    pub complexity_per_image: f64,
}

impl ClassEval {
    /// Mean of the defined per-feature scores.
    pub fn mean_q(&self) -> Option<f64> {
        mean(self.features.iter().filter_map(|f| f.q_f))
    }
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Full benchmark for one method on one class: held-out threshold search,
/// then per-feature scores on the remaining images.
pub fn evaluate_class(
    method: &str,
    class_id: &str,
    feature_names: &[String],
    images: &[ImageEval],
    cfg: &EvalConfig,
) -> Result<ClassEval> {
    let (hold_idx, score_idx) = holdout_split(images.len(), cfg)?;
    let holdout: Vec<ImageEval> = hold_idx.iter().map(|&i| images[i].clone()).collect();
    let scoring: Vec<ImageEval> = score_idx.iter().map(|&i| images[i].clone()).collect();
    let threshold = select_threshold(&holdout, cfg)?;

    let features = feature_names
        .iter()
        .enumerate()
        .map(|(f, name)| {
            let present = scoring.iter().filter(|img| img.mask(f).is_some()).count();
            let q_f = if present == 0 {
                None
            } else {
                Some(q_f_class(&scoring, f, threshold)?)
            };
            Ok(FeatureScore {
                feature_index: f,
                name: name.clone(),
                q_f,
                images: present,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_image = Vec::new();
    for img in &scoring {
        for mask in &img.masks {
            per_image.push(ImageFeatureRow {
                image_id: img.image_id.clone(),
                feature_index: mask.feature_index,
                iou_at_threshold: q_f_at_threshold(&img.maps, mask, threshold)?,
                best_iou: q_f_instance(&img.maps, mask, cfg)?,
            });
        }
    }
    let total = complexity(images);
    Ok(ClassEval {
        method: method.to_string(),
        class_id: class_id.to_string(),
        threshold,
        holdout_images: holdout.iter().map(|i| i.image_id.clone()).collect(),
        scoring_images: scoring.iter().map(|i| i.image_id.clone()).collect(),
        features,
        per_image,
        complexity_total: total,
        complexity_per_image: total as f64 / images.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    /// Mean over every (class, feature) score, each weighted equally.
    pub mean_over_features: Option<f64>,
    /// Mean of per-class means, each class weighted equally.
    pub mean_over_classes: Option<f64>,
    /// Mean over every scored (image, feature) row.
    pub mean_over_images: Option<f64>,
    pub complexity_per_image: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub classes: Vec<ClassEval>,
    pub summary: Vec<MethodSummary>,
}

impl EvalReport {
    pub fn new(config: EvalConfig, classes: Vec<ClassEval>) -> Self {
        let mut methods: Vec<String> = classes.iter().map(|c| c.method.clone()).collect();
        methods.dedup();
        methods.sort();
        methods.dedup();
        let summary = methods
            .into_iter()
            .map(|method| {
                let rows: Vec<&ClassEval> = classes.iter().filter(|c| c.method == method).collect();
                let total_maps: usize = rows.iter().map(|c| c.complexity_total).sum();
                let total_images: usize = rows
                    .iter()
                    .map(|c| c.holdout_images.len() + c.scoring_images.len())
                    .sum();
                MethodSummary {
                    mean_over_features: mean(rows.iter().flat_map(|c| c.features.iter().filter_map(|f| f.q_f))),
                    mean_over_classes: mean(rows.iter().filter_map(|c| c.mean_q())),
                    mean_over_images: mean(
                        rows.iter().flat_map(|c| c.per_image.iter().map(|r| r.iou_at_threshold)),
                    ),
                    complexity_per_image: if total_images == 0 {
                        0.0
                    } else {
                        total_maps as f64 / total_images as f64
                    },
                    method,
                }
            })
            .collect();
        Self {
            config,
            classes,
            summary,
        }
    }

    pub fn summary_for(&self, method: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    /// One row per (method, class, feature), plus the selected threshold and
    /// per-image complexity.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method",
            "class",
            "feature_index",
            "feature",
            "q_f",
            "images",
            "threshold",
            "complexity",
        ])?;
        for c in &self.classes {
            for f in &c.features {
                w.write_record([
                    c.method.clone(),
                    c.class_id.clone(),
                    f.feature_index.to_string(),
                    f.name.clone(),
                    f.q_f.map_or_else(String::new, |q| format!("{q:.6}")),
                    f.images.to_string(),
                    c.threshold.to_string(),
                    format_count(c.complexity_per_image),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub(crate) fn format_count(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as u64)
    } else {
        format!("{v:.3}")
    }
}
