//! The `dcne` subcommands as library functions. Each one computes in
//! parallel over images and then writes its artifacts from a single thread
//! in a fixed order, so outputs do not depend on the thread count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::explain::{ClassMaps, ExplainConfig, ImageExplanation};
use super::layout::{
    image_dir, read_maps, relative, write_maps, IndexEntry, RunIndex, CONCISE_FILE, MAP_EXTENSION,
};
use super::manifest::{Dataset, LoadedClass};
use super::render::{overlay, strip};
use super::synth::{generate, SyntheticDataset, SyntheticSpec};
use crate::cluster::{build_tensor, cluster_tensor, score_report, similarity_block, ClusterReport, DbscanParams};
use crate::error::{Error, Result};
use crate::evalbench::{evaluate_class, EvalConfig, EvalReport, FeatureMask, ImageEval};
use crate::factorize::ConciseSet;
use crate::io::{read_concise_set, write_bytes, write_concise_set, write_ppm, RgbImage};
use crate::net::NetworkSpec;
use crate::relprop::SelectionMode;
use crate::Tensor;

pub const DCNE_METHOD: &str = "dcne";

pub fn crp_method(n: usize) -> String {
    format!("crp-{n}")
}

fn class_inputs(class: &LoadedClass) -> Vec<(String, Tensor)> {
    class
        .images
        .iter()
        .map(|img| (img.image_id.clone(), img.image.to_tensor()))
        .collect()
}

fn class_evals(class: &LoadedClass, maps: impl Fn(usize) -> Vec<Tensor>) -> Vec<ImageEval> {
    class
        .images
        .iter()
        .enumerate()
        .map(|(i, img)| ImageEval::from_tensors(&img.image_id, &maps(i), img.masks.clone()))
        .collect()
}

fn selected_classes<'a>(dataset: &'a Dataset, class: Option<&str>) -> Result<Vec<&'a LoadedClass>> {
    match class {
        Some(id) => Ok(vec![dataset.class(id)?]),
        None => Ok(dataset.classes.iter().collect()),
    }
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("plain data serializes")
}

/// Writes one image's base set, top-`z` baseline, concise set and overlays.
fn write_explanation(
    out: &Path,
    class_id: &str,
    image: &RgbImage,
    ex: &ImageExplanation,
    index: &mut RunIndex,
) -> Result<()> {
    let n = ex.base.len();
    let z = ex.concise.len();
    let mut groups = vec![(crp_method(n), &ex.base)];
    if z != n {
        groups.push((crp_method(z), &ex.top));
    }
    for (method, set) in groups {
        let dir = image_dir(out, &method, class_id, &ex.image_id);
        let maps: Vec<Tensor> = set.maps.iter().map(|m| m.values.clone()).collect();
        let paths = write_maps(&dir, &maps)?;
        index.entries.push(IndexEntry {
            method,
            class_id: class_id.into(),
            image_id: ex.image_id.clone(),
            target: ex.target,
            predicted: ex.predicted,
            maps: paths.iter().map(|p| relative(out, p)).collect(),
            conditions: set.conditions().iter().map(ToString::to_string).collect(),
            extra: Vec::new(),
        });
    }

    let dir = image_dir(out, DCNE_METHOD, class_id, &ex.image_id);
    let paths = write_maps(&dir, &ex.concise.maps)?;
    let concise_path = dir.join(CONCISE_FILE);
    write_concise_set(&concise_path, &ex.concise)?;
    let mut extra = vec![relative(out, &concise_path)];
    for (i, map) in ex.concise.maps.iter().enumerate() {
        let path = dir.join(format!("overlay_{i:03}.ppm"));
        write_ppm(&path, &overlay(image, map)?)?;
        extra.push(relative(out, &path));
    }
    index.entries.push(IndexEntry {
        method: DCNE_METHOD.into(),
        class_id: class_id.into(),
        image_id: ex.image_id.clone(),
        target: ex.target,
        predicted: ex.predicted,
        maps: paths.iter().map(|p| relative(out, p)).collect(),
        conditions: Vec::new(),
        extra,
    });
    Ok(())
}

#[derive(Serialize)]
struct ExplainParameters<'a> {
    config: &'a ExplainConfig,
    classes: Vec<&'a str>,
}

/// Explains every image of the manifest (or of one class) against its class
/// label and writes the per-method directories plus `index.json`.
pub fn cmd_explain_dataset(
    net: &NetworkSpec,
    dataset: &Dataset,
    class: Option<&str>,
    cfg: &ExplainConfig,
    out: &Path,
) -> Result<RunIndex> {
    let classes = selected_classes(dataset, class)?;
    let mut index = RunIndex::new(
        "explain",
        to_json(&ExplainParameters {
            config: cfg,
            classes: classes.iter().map(|c| c.class_id.as_str()).collect(),
        }),
    );
    for class in classes {
        let maps = ClassMaps::compute(net, &class_inputs(class), Some(class.label))?;
        let results = maps.explain(cfg)?;
        for (img, ex) in class.images.iter().zip(&results) {
            write_explanation(out, &class.class_id, &img.image, ex, &mut index)?;
        }
    }
    index.write(out)?;
    Ok(index)
}

/// Explains standalone images, each against `target` or its predicted class.
/// Results land under the pseudo-class `images`.
pub fn cmd_explain_images(
    net: &NetworkSpec,
    images: &[(String, RgbImage)],
    target: Option<usize>,
    cfg: &ExplainConfig,
    out: &Path,
) -> Result<RunIndex> {
    let mut index = RunIndex::new(
        "explain",
        to_json(&ExplainParameters {
            config: cfg,
            classes: vec!["images"],
        }),
    );
    for (id, image) in images {
        let maps = ClassMaps::compute(net, &[(id.clone(), image.to_tensor())], target)?;
        let ex = maps.explain(cfg)?.remove(0);
        write_explanation(out, "images", image, &ex, &mut index)?;
    }
    index.write(out)?;
    Ok(index)
}

/// Scores method output directories (`<dir>/<class>/<image>/*.f32`) against
/// the manifest masks. Every missing directory or map is reported.
pub fn cmd_evaluate(dataset: &Dataset, method_dirs: &[PathBuf], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    if method_dirs.is_empty() {
        return Err(Error::Config("no method directories given".into()));
    }
    let mut names = BTreeMap::new();
    for dir in method_dirs {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| Error::Config(format!("cannot name method directory {}", dir.display())))?;
        if let Some(prev) = names.insert(name.clone(), dir) {
            return Err(Error::Config(format!(
                "method name {name} used by both {} and {}",
                prev.display(),
                dir.display()
            )));
        }
    }

    let mut problems = Vec::new();
    let mut loaded: Vec<(String, &LoadedClass, Vec<Vec<Tensor>>)> = Vec::new();
    for (name, dir) in &names {
        for class in &dataset.classes {
            let mut per_image = Vec::with_capacity(class.images.len());
            for img in &class.images {
                let d = dir.join(&class.class_id).join(&img.image_id);
                match read_maps(&d) {
                    Ok(maps) if maps.is_empty() => {
                        problems.push(format!("{}: no .{MAP_EXTENSION} maps", d.display()))
                    }
                    Ok(maps) => {
                        let (h, w) = (img.image.height, img.image.width);
                        if let Some(bad) = maps.iter().find(|m| m.shape() != [h, w]) {
                            problems.push(format!(
                                "{}: map shape {:?} does not match image {h}x{w}",
                                d.display(),
                                bad.shape()
                            ));
                        }
                        per_image.push(maps);
                    }
                    Err(e) => problems.push(e.to_string()),
                }
            }
            loaded.push((name.clone(), class, per_image));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Config(format!(
            "{} missing or invalid method output(s):\n  {}",
            problems.len(),
            problems.join("\n  ")
        )));
    }

    let classes = loaded
        .iter()
        .map(|(name, class, maps)| {
            let images = class_evals(class, |i| maps[i].clone());
            evaluate_class(name, &class.class_id, &class.features, &images, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::new(cfg.clone(), classes))
}

pub fn write_eval_report(report: &EvalReport, out: &Path) -> Result<()> {
    write_bytes(&out.join("report.json"), &serde_json::to_vec_pretty(report)?)?;
    write_bytes(&out.join("report.csv"), report.to_csv()?.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterizeConfig {
    pub explain: ExplainConfig,
    pub dbscan: DbscanParams,
    pub eval: EvalConfig,
    /// Members shown per cluster montage.
    pub montage_members: usize,
}

impl Default for ClusterizeConfig {
    fn default() -> Self {
        Self {
            explain: ExplainConfig::default(),
            dbscan: DbscanParams::default(),
            eval: EvalConfig::default(),
            montage_members: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassClusters {
    pub class_id: String,
    pub features: Vec<String>,
    pub report: ClusterReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Explains, builds the similarity tensor, clusters with DBSCAN and scores
/// each cluster against the feature masks at the class's DCNE threshold.
/// Writes `clusters/<class>/report.json` and one montage per cluster.
pub fn cmd_clusterize(
    net: &NetworkSpec,
    dataset: &Dataset,
    class: Option<&str>,
    cfg: &ClusterizeConfig,
    out: &Path,
) -> Result<Vec<ClassClusters>> {
    if cfg.explain.mode != SelectionMode::ClassMean {
        return Err(Error::Config(
            "clustering needs one condition list per class; use --mode class-mean".into(),
        ));
    }
    let mut outcomes = Vec::new();
    for class in selected_classes(dataset, class)? {
        let maps = ClassMaps::compute(net, &class_inputs(class), Some(class.label))?;
        let results = maps.explain(&cfg.explain)?;
        let mut warnings = Vec::new();
        let rows = results.len() * cfg.explain.factorization.components;
        if rows < cfg.dbscan.min_points {
            warnings.push(format!(
                "class {}: {rows} rows but min_points = {}; every row will be noise",
                class.class_id, cfg.dbscan.min_points
            ));
        }
        let blocks = results
            .iter()
            .map(|ex| similarity_block(&ex.concise, &ex.base))
            .collect::<Result<Vec<_>>>()?;
        let tensor = build_tensor(blocks)?;
        let mut report = cluster_tensor(&tensor, cfg.dbscan)?;

        let evals = class_evals(class, |i| results[i].concise.maps.clone());
        let threshold = evaluate_class(DCNE_METHOD, &class.class_id, &class.features, &evals, &cfg.eval)?.threshold;
        let concise: BTreeMap<String, ConciseSet> =
            results.iter().map(|ex| (ex.image_id.clone(), ex.concise.clone())).collect();
        let masks: BTreeMap<String, Vec<FeatureMask>> = class
            .images
            .iter()
            .map(|img| (img.image_id.clone(), img.masks.clone()))
            .collect();
        score_report(&mut report, &concise, &masks, class.features.len(), threshold)?;
        if report.clusters.is_empty() {
            warnings.push(format!("class {}: no clusters found", class.class_id));
        }

        let dir = out.join("clusters").join(&class.class_id);
        let images: BTreeMap<&str, &RgbImage> =
            class.images.iter().map(|img| (img.image_id.as_str(), &img.image)).collect();
        for cluster in &report.clusters {
            let mut tiles = Vec::new();
            for member in cluster.members.iter().take(cfg.montage_members) {
                let image = images[member.image_id.as_str()];
                tiles.push(image.clone());
                tiles.push(overlay(image, &concise[&member.image_id].maps[member.map_index])?);
            }
            write_ppm(&dir.join(format!("cluster_{:02}.ppm", cluster.cluster_id)), &strip(&tiles)?)?;
        }
        let outcome = ClassClusters {
            class_id: class.class_id.clone(),
            features: class.features.clone(),
            report,
            warnings,
        };
        write_bytes(&dir.join("report.json"), &serde_json::to_vec_pretty(&outcome)?)?;
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub component_counts: Vec<usize>,
    pub base_sizes: Vec<usize>,
    pub mode: SelectionMode,
    pub seed: u64,
    pub max_iterations: usize,
    pub convergence_tolerance: f64,
    pub eval: EvalConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let explain = ExplainConfig::default();
        Self {
            component_counts: vec![explain.factorization.components],
            base_sizes: vec![explain.base_size],
            mode: explain.mode,
            seed: explain.factorization.seed,
            max_iterations: explain.factorization.max_iterations,
            convergence_tolerance: explain.factorization.convergence_tolerance,
            eval: EvalConfig::default(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.component_counts.is_empty() || self.base_sizes.is_empty() {
            return Err(Error::Config("sweep needs at least one component count and base size".into()));
        }
        if self.component_counts.contains(&0) || self.base_sizes.contains(&0) {
            return Err(Error::Config("sweep values must be positive".into()));
        }
        let bad: Vec<String> = self
            .cells()
            .filter(|(z, n)| z > n)
            .map(|(z, n)| format!("z={z} > n={n}"))
            .collect();
        if !bad.is_empty() {
            return Err(Error::Config(format!(
                "component count exceeds base size in cell(s): {}",
                bad.join(", ")
            )));
        }
        self.eval.validate()
    }

    /// Cells in row order: base size outer, component count inner.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.base_sizes
            .iter()
            .flat_map(move |&n| self.component_counts.iter().map(move |&z| (z, n)))
    }

    fn explain_config(&self, z: usize, n: usize) -> ExplainConfig {
        let mut cfg = ExplainConfig {
            mode: self.mode,
            base_size: n,
            ..Default::default()
        };
        cfg.factorization.components = z;
        cfg.factorization.seed = self.seed;
        cfg.factorization.max_iterations = self.max_iterations;
        cfg.factorization.convergence_tolerance = self.convergence_tolerance;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub class_id: String,
    pub components: usize,
    pub base_size: usize,
    /// Mean of the per-feature scores of this class.
    pub mean_iou: Option<f64>,
    pub feature_scores: Vec<Option<f64>>,
    pub threshold: u8,
    pub complexity_per_image: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["class", "components", "base_size", "mean_iou", "threshold", "complexity"])?;
        for r in &self.rows {
            w.write_record([
                r.class_id.clone(),
                r.components.to_string(),
                r.base_size.to_string(),
                r.mean_iou.map(|v| format!("{v:.6}")).unwrap_or_default(),
                r.threshold.to_string(),
                format!("{}", r.complexity_per_image),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        write_bytes(&out.join("sweep.json"), &serde_json::to_vec_pretty(self)?)?;
        write_bytes(&out.join("sweep.csv"), self.to_csv()?.as_bytes())
    }
}

/// Mean DCNE score per class for every (z, n) cell. Conditional maps are
/// computed once per class and reused across cells.
pub fn cmd_sweep(net: &NetworkSpec, dataset: &Dataset, class: Option<&str>, spec: &SweepSpec) -> Result<SweepTable> {
    spec.validate()?;
    let mut rows = Vec::new();
    for class in selected_classes(dataset, class)? {
        let maps = ClassMaps::compute(net, &class_inputs(class), Some(class.label))?;
        for (z, n) in spec.cells() {
            let results = maps.explain(&spec.explain_config(z, n))?;
            let evals = class_evals(class, |i| results[i].concise.maps.clone());
            let eval = evaluate_class(DCNE_METHOD, &class.class_id, &class.features, &evals, &spec.eval)?;
            rows.push(SweepRow {
                class_id: class.class_id.clone(),
                components: z,
                base_size: n,
                mean_iou: eval.mean_q(),
                feature_scores: eval.features.iter().map(|f| f.q_f).collect(),
                threshold: eval.threshold,
                complexity_per_image: eval.complexity_per_image,
            });
        }
    }
    Ok(SweepTable {
        spec: spec.clone(),
        rows,
    })
}

/// Generates the synthetic suite into `out`.
pub fn cmd_synth(spec: &SyntheticSpec, out: &Path) -> Result<SyntheticDataset> {
    let data = generate(spec)?;
    data.write(out)?;
    Ok(data)
}

/// Overlays each raw map (`.f32`) or every component of a concise set
/// (`.dcs`) on `image`, writing `<stem>_overlay[_NNN].ppm` into `out`.
pub fn cmd_render(image: &RgbImage, inputs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for input in inputs {
        let stem = input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "map".into());
        let is_concise = input.extension().is_some_and(|e| e == "dcs");
        if is_concise {
            let cs = read_concise_set(input)?;
            for (i, map) in cs.maps.iter().enumerate() {
                let path = out.join(format!("{stem}_overlay_{i:03}.ppm"));
                write_ppm(&path, &overlay(image, map)?)?;
                written.push(path);
            }
        } else {
            let map = crate::io::read_attribution(input)?;
            let path = out.join(format!("{stem}_overlay.ppm"));
            write_ppm(&path, &overlay(image, &map)?)?;
            written.push(path);
        }
    }
    Ok(written)
}
