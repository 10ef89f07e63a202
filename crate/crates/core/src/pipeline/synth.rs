//! Synthetic stand-in dataset: colored shapes planted on a noisy gray
//! background, per-feature masks, and a detector network whose weights are
//! set analytically so that each class is recognized from its own colors.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{ClassEntry, DatasetManifest, ImageEntry};
use crate::error::{Error, Result};
use crate::io::{write_pgm, write_ppm, GrayImage, RgbImage};
use crate::net::{save_network_file, Conv2d, Dense, LayerSpec, NetworkSpec, Pool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Square,
    Disk,
    /// Axis-aligned bar, orientation drawn per instance.
    Bar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFeature {
    pub name: String,
    pub shape: Shape,
    /// RGB in `[0, 1]`.
    pub color: [f64; 3],
    /// Inclusive extent range in pixels (side, diameter or bar length).
    pub size_range: [usize; 2],
    /// Blobs per image; all share one mask.
    #[serde(default = "one")]
    pub count: usize,
    /// Probability that the feature appears in an image.
    #[serde(default = "always")]
    pub presence: f64,
    /// Class-score weight of this feature's detectors.
    #[serde(default = "always")]
    pub salience: f64,
}

fn one() -> usize {
    1
}

fn always() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClass {
    pub class_id: String,
    pub features: Vec<PlantedFeature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub image_size: usize,
    pub images_per_class: usize,
    pub seed: u64,
    pub classes: Vec<SyntheticClass>,
    /// First-layer detector copies per color.
    #[serde(default = "default_copies")]
    pub detectors_per_color: usize,
    /// Second-layer channels combining first-layer detectors.
    #[serde(default = "default_concepts")]
    pub concept_channels: usize,
    /// Per-channel uniform pixel noise amplitude.
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_copies() -> usize {
    16
}

fn default_concepts() -> usize {
    272
}

fn default_noise() -> f64 {
    0.04
}

const BACKGROUND: f64 = 0.5;
const POOL: usize = 4;
const PLACEMENT_ATTEMPTS: usize = 200;
/// Detector activation threshold as a fraction of the squared weight norm.
const DETECTOR_MARGIN: f64 = 0.6;

impl Default for SyntheticSpec {
    fn default() -> Self {
        let feature = |name: &str, shape, color, size_range, salience| PlantedFeature {
            name: name.into(),
            shape,
            color,
            size_range,
            count: 1,
            presence: 0.9,
            salience,
        };
        Self {
            image_size: 32,
            images_per_class: 20,
            seed: 7,
            detectors_per_color: default_copies(),
            concept_channels: default_concepts(),
            noise: default_noise(),
            classes: vec![
                SyntheticClass {
                    class_id: "alpha".into(),
                    features: vec![
                        feature("red patch", Shape::Square, [0.9, 0.1, 0.1], [6, 9], 1.0),
                        feature("blue stripe", Shape::Bar, [0.1, 0.1, 0.9], [8, 12], 0.5),
                    ],
                },
                SyntheticClass {
                    class_id: "beta".into(),
                    features: vec![
                        feature("green disk", Shape::Disk, [0.1, 0.9, 0.1], [7, 9], 1.0),
                        feature("yellow bar", Shape::Bar, [0.9, 0.9, 0.1], [8, 12], 0.5),
                    ],
                },
            ],
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("synthetic spec: {msg}")));
        if self.classes.is_empty() || self.images_per_class == 0 {
            return bad("needs at least one class and one image per class".into());
        }
        if self.image_size < 2 * POOL || !self.image_size.is_multiple_of(POOL) {
            return bad(format!("image size must be a multiple of {POOL} and at least {}", 2 * POOL));
        }
        if self.detectors_per_color == 0 || self.concept_channels == 0 {
            return bad("detector and concept channel counts must be positive".into());
        }
        let mut ids = BTreeSet::new();
        for class in &self.classes {
            if !ids.insert(&class.class_id) {
                return bad(format!("duplicate class id {}", class.class_id));
            }
            if class.features.is_empty() {
                return bad(format!("class {} has no features", class.class_id));
            }
            for f in &class.features {
                let [lo, hi] = f.size_range;
                if lo < 2 || lo > hi || hi + 2 > self.image_size {
                    return bad(format!("feature {} has size range {:?}", f.name, f.size_range));
                }
                if f.count == 0 || !(0.0..=1.0).contains(&f.presence) || f.salience <= 0.0 {
                    return bad(format!("feature {} needs count >= 1, presence in [0,1], salience > 0", f.name));
                }
                if f.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                    return bad(format!("feature {} color outside [0, 1]", f.name));
                }
            }
        }
        // Every detector must stay silent on the background and on every
        // other palette color.
        let palette = self.palette();
        for (i, a) in palette.iter().enumerate() {
            let w = detector_direction(a.color);
            let norm2 = dot(&w, &w);
            if norm2 < 0.05 {
                return bad(format!("color of {} is too close to the background", a.name));
            }
            for (j, b) in palette.iter().enumerate() {
                if i != j {
                    let response = dot(&w, &detector_direction(b.color));
                    if response > 0.75 * DETECTOR_MARGIN * norm2 {
                        return bad(format!(
                            "colors of {} and {} are not separable",
                            a.name, b.name
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// One entry per feature in (class, feature) order.
    fn palette(&self) -> Vec<PaletteEntry> {
        self.classes
            .iter()
            .enumerate()
            .flat_map(|(c, class)| {
                class.features.iter().enumerate().map(move |(f, feat)| PaletteEntry {
                    class: c,
                    feature: f,
                    name: feat.name.clone(),
                    color: feat.color,
                    salience: feat.salience,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct PaletteEntry {
    class: usize,
    feature: usize,
    name: String,
    color: [f64; 3],
    salience: f64,
}

fn detector_direction(color: [f64; 3]) -> [f64; 3] {
    color.map(|c| c - BACKGROUND)
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

/// Builds the detector network. Layers:
/// `conv1x1(3→P·copies) → relu → conv1x1(→concepts) → relu → avgpool → flatten → dense(→classes)`.
pub fn build_detector_network(spec: &SyntheticSpec) -> Result<NetworkSpec> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_cafe);
    let palette = spec.palette();
    let copies = spec.detectors_per_color;
    let c0 = palette.len() * copies;

    // Color detectors: w·(x − 0.5) > margin·|w|² with jittered gain.
    let mut w0 = Vec::with_capacity(c0 * 3);
    let mut b0 = Vec::with_capacity(c0);
    for entry in &palette {
        let dir = detector_direction(entry.color);
        let norm2 = dot(&dir, &dir);
        for _ in 0..copies {
            let gain = rng.gen_range(0.8..1.2);
            let margin = rng.gen_range(0.5..0.7);
            let w = dir.map(|d| d * gain);
            w0.extend(w.iter().map(|&v| round_f32(v)));
            b0.push(round_f32(-gain * (BACKGROUND * dir.iter().sum::<f64>() + margin * norm2)));
        }
    }

    // Concept channels: round-robin over colors; every eighth channel also
    // picks up the next feature of the same class.
    let c2 = spec.concept_channels;
    let mut w2 = vec![0.0; c2 * c0];
    let mut concept_colors: Vec<Vec<usize>> = Vec::with_capacity(c2);
    for k in 0..c2 {
        let primary = k % palette.len();
        let mut colors = vec![primary];
        if k % 8 == 7 {
            let class = palette[primary].class;
            let n_feat = spec.classes[class].features.len();
            if n_feat > 1 {
                let partner_feature = (palette[primary].feature + 1) % n_feat;
                let partner = palette
                    .iter()
                    .position(|p| p.class == class && p.feature == partner_feature)
                    .unwrap();
                colors.push(partner);
            }
        }
        for &color in &colors {
            let mut any = false;
            for copy in 0..copies {
                if rng.gen_bool(0.6) || (!any && copy == copies - 1) {
                    w2[k * c0 + color * copies + copy] = round_f32(rng.gen_range(0.5..1.5));
                    any = true;
                }
            }
        }
        concept_colors.push(colors);
    }

    let side = spec.image_size / POOL;
    let plane = side * side;
    let classes = spec.classes.len();
    let mut wd = vec![0.0; classes * c2 * plane];
    for c in 0..classes {
        for (k, colors) in concept_colors.iter().enumerate() {
            let jitter = rng.gen_range(0.8..1.2);
            let weight: f64 = colors
                .iter()
                .map(|&p| {
                    let e = &palette[p];
                    if e.class == c {
                        e.salience
                    } else {
                        -0.5 * e.salience
                    }
                })
                .sum::<f64>()
                * jitter
                / plane as f64;
            let start = (c * c2 + k) * plane;
            wd[start..start + plane].fill(round_f32(weight));
        }
    }

    let size = spec.image_size;
    NetworkSpec::new(
        [3, size, size],
        vec![
            LayerSpec::Conv2d(Conv2d {
                in_channels: 3,
                out_channels: c0,
                kernel: (1, 1),
                stride: 1,
                padding: 0,
                weights: w0,
                bias: b0,
            }),
            LayerSpec::Relu,
            LayerSpec::Conv2d(Conv2d {
                in_channels: c0,
                out_channels: c2,
                kernel: (1, 1),
                stride: 1,
                padding: 0,
                weights: w2,
                bias: vec![0.0; c2],
            }),
            LayerSpec::Relu,
            LayerSpec::AvgPool2d(Pool {
                size: POOL,
                stride: POOL,
            }),
            LayerSpec::Flatten,
            LayerSpec::Dense(Dense {
                in_features: c2 * plane,
                out_features: classes,
                weights: wd,
                bias: vec![0.0; classes],
            }),
        ],
    )
}

/// One generated image with its masks (`None` where the feature is absent).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImage {
    pub image_id: String,
    pub class_index: usize,
    pub image: RgbImage,
    pub masks: Vec<Option<GrayImage>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    pub network: NetworkSpec,
    pub images: Vec<SyntheticImage>,
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    y0: usize,
    x0: usize,
    h: usize,
    w: usize,
}

impl Rect {
    /// True when the rectangles, grown by a one-pixel gap, intersect.
    fn touches(&self, o: &Rect) -> bool {
        self.y0 < o.y0 + o.h + 1 && o.y0 < self.y0 + self.h + 1 && self.x0 < o.x0 + o.w + 1 && o.x0 < self.x0 + self.w + 1
    }
}

fn draw_shape(shape: Shape, extent: usize, vertical: bool) -> (usize, usize, Vec<bool>) {
    match shape {
        Shape::Square => (extent, extent, vec![true; extent * extent]),
        Shape::Disk => {
            let r = extent as f64 / 2.0;
            let c = (extent as f64 - 1.0) / 2.0;
            let cells = (0..extent * extent)
                .map(|i| {
                    let (y, x) = ((i / extent) as f64, (i % extent) as f64);
                    (y - c).powi(2) + (x - c).powi(2) <= r * r
                })
                .collect();
            (extent, extent, cells)
        }
        Shape::Bar => {
            let thick = (extent / 4).max(2);
            if vertical {
                (extent, thick, vec![true; extent * thick])
            } else {
                (thick, extent, vec![true; extent * thick])
            }
        }
    }
}

/// Generates images, masks and the detector network; fully determined by
/// `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let network = build_detector_network(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let size = spec.image_size;
    let mut images = Vec::new();
    for (ci, class) in spec.classes.iter().enumerate() {
        for n in 0..spec.images_per_class {
            let image_id = format!("{}_{n:03}", class.class_id);
            let mut present: Vec<bool> = class
                .features
                .iter()
                .map(|f| rng.gen_bool(f.presence))
                .collect();
            if !present.iter().any(|&p| p) {
                let pick = rng.gen_range(0..present.len());
                present[pick] = true;
            }

            let mut pixels = vec![0.0; 3 * size * size];
            for v in pixels.iter_mut() {
                *v = BACKGROUND + rng.gen_range(-spec.noise..=spec.noise);
            }
            let mut placed: Vec<Rect> = Vec::new();
            let mut masks = Vec::with_capacity(class.features.len());
            for (fi, feature) in class.features.iter().enumerate() {
                if !present[fi] {
                    masks.push(None);
                    continue;
                }
                let mut mask = vec![0u8; size * size];
                for _ in 0..feature.count {
                    let extent = rng.gen_range(feature.size_range[0]..=feature.size_range[1]);
                    let vertical = rng.gen_bool(0.5);
                    let (h, w, cells) = draw_shape(feature.shape, extent, vertical);
                    let mut spot = None;
                    for _ in 0..PLACEMENT_ATTEMPTS {
                        let rect = Rect {
                            y0: rng.gen_range(1..=size - h - 1),
                            x0: rng.gen_range(1..=size - w - 1),
                            h,
                            w,
                        };
                        if placed.iter().all(|p| !p.touches(&rect)) {
                            spot = Some(rect);
                            break;
                        }
                    }
                    let rect = spot.ok_or_else(|| {
                        Error::Config(format!(
                            "could not place feature `{}` ({h}x{w}) in image {image_id} without \
                             overlapping {} earlier blobs after {PLACEMENT_ATTEMPTS} attempts; \
                             reduce feature sizes or counts, or enlarge the image",
                            feature.name,
                            placed.len()
                        ))
                    })?;
                    placed.push(rect);
                    for (i, &on) in cells.iter().enumerate() {
                        if !on {
                            continue;
                        }
                        let (y, x) = (rect.y0 + i / w, rect.x0 + i % w);
                        mask[y * size + x] = 255;
                        for c in 0..3 {
                            pixels[(c * size + y) * size + x] =
                                feature.color[c] + rng.gen_range(-spec.noise..=spec.noise);
                        }
                    }
                }
                masks.push(Some(GrayImage {
                    width: size,
                    height: size,
                    data: mask,
                }));
            }
            let tensor = crate::Tensor::new(vec![3, size, size], pixels)?;
            images.push(SyntheticImage {
                image_id,
                class_index: ci,
                image: RgbImage::from_tensor(&tensor)?,
                masks,
            });
        }
    }
    Ok(SyntheticDataset {
        spec: spec.clone(),
        network,
        images,
    })
}

impl SyntheticDataset {
    pub fn manifest(&self) -> DatasetManifest {
        let classes = self
            .spec
            .classes
            .iter()
            .enumerate()
            .map(|(ci, class)| ClassEntry {
                class_id: class.class_id.clone(),
                label: Some(ci),
                features: class.features.iter().map(|f| f.name.clone()).collect(),
                images: self
                    .images
                    .iter()
                    .filter(|img| img.class_index == ci)
                    .map(|img| ImageEntry {
                        image_id: img.image_id.clone(),
                        image: format!("images/{}.ppm", img.image_id),
                        masks: img
                            .masks
                            .iter()
                            .enumerate()
                            .map(|(fi, m)| m.as_ref().map(|_| format!("masks/{}_f{fi}.pgm", img.image_id)))
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        DatasetManifest {
            network: Some("network.json".into()),
            classes,
        }
    }

    /// Writes `manifest.json`, `images/`, `masks/`, `network.json` and
    /// `network.bin` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<DatasetManifest> {
        let manifest = self.manifest();
        for img in &self.images {
            write_ppm(&dir.join(format!("images/{}.ppm", img.image_id)), &img.image)?;
            for (fi, mask) in img.masks.iter().enumerate() {
                if let Some(mask) = mask {
                    write_pgm(&dir.join(format!("masks/{}_f{fi}.pgm", img.image_id)), mask)?;
                }
            }
        }
        save_network_file(&self.network, &dir.join("network.json"))?;
        manifest.save(&dir.join("manifest.json"))?;
        let spec = serde_json::to_vec_pretty(&self.spec)?;
        crate::io::write_bytes(&dir.join("synth_spec.json"), &spec)?;
        Ok(manifest)
    }
}
