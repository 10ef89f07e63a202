//! Python bindings. Grids travel as nested lists of floats; reports come
//! back as JSON text for `json.loads`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use dcne::cluster::DbscanParams;
use dcne::evalbench::EvalConfig;
use dcne::factorize::{FactorizationConfig, Solver};
use dcne::net::NetworkSpec;
use dcne::pipeline::{ClassMaps, ClusterizeConfig, Dataset, ExplainConfig, SweepSpec, SyntheticSpec};
use dcne::relprop::SelectionMode;
use dcne::Tensor;

fn py_err(e: dcne::Error) -> PyErr {
    match e {
        dcne::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows differ in length"));
    }
    let n = rows.len();
    Tensor::new(vec![n, cols], rows.concat()).map_err(py_err)
}

fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    let cols = t.shape()[t.rank() - 1];
    t.data().chunks(cols.max(1)).map(<[f64]>::to_vec).collect()
}

fn image(planes: Vec<Vec<Vec<f64>>>) -> PyResult<Tensor> {
    let c = planes.len();
    let h = planes.first().map_or(0, Vec::len);
    let w = planes.first().and_then(|p| p.first()).map_or(0, Vec::len);
    if planes.iter().any(|p| p.len() != h || p.iter().any(|r| r.len() != w)) {
        return Err(PyValueError::new_err("image must be a (channels, height, width) nested list"));
    }
    let data: Vec<f64> = planes.into_iter().flatten().flatten().collect();
    Tensor::new(vec![c, h, w], data).map_err(py_err)
}

fn selection_mode(mode: &str) -> PyResult<SelectionMode> {
    match mode {
        "per-image-sum" => Ok(SelectionMode::PerImageSum),
        "class-mean" => Ok(SelectionMode::ClassMean),
        other => Err(PyValueError::new_err(format!(
            "mode must be per-image-sum or class-mean, got {other}"
        ))),
    }
}

fn explain_config(components: usize, base_size: usize, seed: u64, mode: &str) -> PyResult<ExplainConfig> {
    let mut cfg = ExplainConfig {
        mode: selection_mode(mode)?,
        base_size,
        ..Default::default()
    };
    cfg.factorization.components = components;
    cfg.factorization.seed = seed;
    Ok(cfg)
}

fn load_dataset(manifest: PathBuf) -> PyResult<(Dataset, NetworkSpec)> {
    let dataset = Dataset::load(&manifest).map_err(py_err)?;
    let path = dataset
        .network_path()
        .ok_or_else(|| PyValueError::new_err("manifest lists no network"))?;
    let net = dcne::net::load_network_file(&path).map_err(py_err)?;
    Ok((dataset, net))
}

/// A validated sequential network.
#[pyclass(frozen)]
struct Network {
    inner: NetworkSpec,
}

#[pymethods]
impl Network {
    /// Loads a network JSON document and its weight sidecar.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: dcne::net::load_network_file(&path).map_err(py_err)?,
        })
    }

    /// The detector network of the built-in synthetic suite.
    #[staticmethod]
    #[pyo3(signature = (seed = None))]
    fn synthetic(seed: Option<u64>) -> PyResult<Self> {
        let mut spec = SyntheticSpec::default();
        if let Some(s) = seed {
            spec.seed = s;
        }
        Ok(Self {
            inner: dcne::pipeline::build_detector_network(&spec).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        dcne::net::save_network_file(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn input_shape(&self) -> (usize, usize, usize) {
        let [c, h, w] = self.inner.input_shape();
        (c, h, w)
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn condition_count(&self) -> usize {
        self.inner.condition_count()
    }

    fn logits(&self, image: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<f64>> {
        let trace = dcne::net::forward(&self.inner, &self::image(image)?).map_err(py_err)?;
        Ok(trace.logits().data().to_vec())
    }

    fn predict(&self, image: Vec<Vec<Vec<f64>>>) -> PyResult<usize> {
        let trace = dcne::net::forward(&self.inner, &self::image(image)?).map_err(py_err)?;
        Ok(trace.predicted_class())
    }

    /// Concise explanation of one image. Returns a dict with `target`,
    /// `conditions` (base set), `concise_maps` (z grids) and `mixing`
    /// (n x z weights).
    #[pyo3(signature = (image, components = 10, base_size = 300, seed = 0, target = None))]
    fn explain<'py>(
        &self,
        py: Python<'py>,
        image: Vec<Vec<Vec<f64>>>,
        components: usize,
        base_size: usize,
        seed: u64,
        target: Option<usize>,
    ) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let x = self::image(image)?;
        let cfg = explain_config(components, base_size, seed, "per-image-sum")?;
        let ex = ClassMaps::compute(&self.inner, &[("image".into(), x)], target)
            .and_then(|m| m.explain(&cfg))
            .map_err(py_err)?
            .remove(0);
        let out = pyo3::types::PyDict::new(py);
        out.set_item("target", ex.target)?;
        out.set_item("predicted", ex.predicted)?;
        out.set_item(
            "conditions",
            ex.base.conditions().iter().map(|c| (c.layer_index, c.channel_index)).collect::<Vec<_>>(),
        )?;
        out.set_item("concise_maps", ex.concise.maps.iter().map(rows_of).collect::<Vec<_>>())?;
        out.set_item("mixing", rows_of(&ex.concise.mixing))?;
        out.set_item("iterations", ex.stats.iterations)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(input_shape={:?}, layers={}, conditions={})",
            self.inner.input_shape(),
            self.inner.layers().len(),
            self.inner.condition_count()
        )
    }
}

/// Factorizes a non-negative matrix; returns `(W, H, objective_trace)`.
#[pyfunction]
#[pyo3(signature = (m, components, seed = 0, max_iterations = 200, tolerance = 1e-4, solver = "coordinate-descent"))]
fn nnmf(
    m: Vec<Vec<f64>>,
    components: usize,
    seed: u64,
    max_iterations: usize,
    tolerance: f64,
    solver: &str,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
    let solver = match solver {
        "coordinate-descent" => Solver::CoordinateDescent,
        "multiplicative" => Solver::Multiplicative,
        other => {
            return Err(PyValueError::new_err(format!(
                "solver must be coordinate-descent or multiplicative, got {other}"
            )))
        }
    };
    let cfg = FactorizationConfig {
        components,
        max_iterations,
        convergence_tolerance: tolerance,
        seed,
        solver,
    };
    let f = dcne::factorize::nnmf(&matrix(m)?, &cfg).map_err(py_err)?;
    Ok((rows_of(&f.w), rows_of(&f.h), f.objective_trace))
}

/// DBSCAN labels; noise is -1.
#[pyfunction]
#[pyo3(signature = (points, epsilon = dcne::cluster::DEFAULT_EPSILON, min_points = dcne::cluster::DEFAULT_MIN_POINTS))]
fn dbscan(points: Vec<Vec<f64>>, epsilon: f64, min_points: usize) -> PyResult<Vec<i64>> {
    dcne::cluster::dbscan(&matrix(points)?, epsilon, min_points).map_err(py_err)
}

/// Min-max normalizes a grid to integers in `[0, 255]`.
#[pyfunction]
fn normalize_to_uint8(map: Vec<Vec<f64>>) -> PyResult<Vec<Vec<u8>>> {
    let g = dcne::evalbench::normalize_to_uint8(&matrix(map)?);
    Ok(g.data.chunks(g.width.max(1)).map(<[u8]>::to_vec).collect())
}

/// IoU between `map > threshold` (after normalization) and a 0/255 mask.
#[pyfunction]
fn iou(map: Vec<Vec<f64>>, mask: Vec<Vec<u8>>, threshold: u8) -> PyResult<f64> {
    let g = dcne::evalbench::normalize_to_uint8(&matrix(map)?);
    let (h, w) = (mask.len(), mask.first().map_or(0, Vec::len));
    let mask = dcne::evalbench::FeatureMask::new("mask", 0, h, w, mask.concat()).map_err(py_err)?;
    dcne::evalbench::iou(&dcne::evalbench::binarize(&g, threshold), &mask.binary()).map_err(py_err)
}

/// Writes the synthetic suite to `out`; returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out, seed = None, images_per_class = None))]
fn synth(out: PathBuf, seed: Option<u64>, images_per_class: Option<usize>) -> PyResult<String> {
    let mut spec = SyntheticSpec::default();
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(n) = images_per_class {
        spec.images_per_class = n;
    }
    dcne::pipeline::cmd_synth(&spec, &out).map_err(py_err)?;
    Ok(out.join("manifest.json").to_string_lossy().into_owned())
}

/// Explains every manifest image into `out`; returns the index as JSON.
#[pyfunction]
#[pyo3(signature = (manifest, out, components = 10, base_size = 300, seed = 0, mode = "class-mean"))]
fn explain_dataset(
    py: Python<'_>,
    manifest: PathBuf,
    out: PathBuf,
    components: usize,
    base_size: usize,
    seed: u64,
    mode: &str,
) -> PyResult<String> {
    let (dataset, net) = load_dataset(manifest)?;
    let cfg = explain_config(components, base_size, seed, mode)?;
    let index = py
        .detach(|| dcne::pipeline::cmd_explain_dataset(&net, &dataset, None, &cfg, &out))
        .map_err(py_err)?;
    json(&index)
}

/// Scores method directories; writes report.json/.csv and returns the
/// report as JSON.
#[pyfunction]
#[pyo3(signature = (manifest, methods, out, seed = 0))]
fn evaluate(py: Python<'_>, manifest: PathBuf, methods: Vec<PathBuf>, out: PathBuf, seed: u64) -> PyResult<String> {
    let dataset = Dataset::load(&manifest).map_err(py_err)?;
    let cfg = EvalConfig {
        seed,
        ..Default::default()
    };
    let report = py
        .detach(|| {
            let report = dcne::pipeline::cmd_evaluate(&dataset, &methods, &cfg)?;
            dcne::pipeline::write_eval_report(&report, &out)?;
            Ok(report)
        })
        .map_err(py_err)?;
    json(&report)
}

/// Clusters concise maps per class; returns the per-class reports as JSON.
#[pyfunction]
#[pyo3(signature = (manifest, out, components = 10, base_size = 300, seed = 0, epsilon = dcne::cluster::DEFAULT_EPSILON, min_points = dcne::cluster::DEFAULT_MIN_POINTS))]
fn clusterize(
    py: Python<'_>,
    manifest: PathBuf,
    out: PathBuf,
    components: usize,
    base_size: usize,
    seed: u64,
    epsilon: f64,
    min_points: usize,
) -> PyResult<String> {
    let (dataset, net) = load_dataset(manifest)?;
    let cfg = ClusterizeConfig {
        explain: explain_config(components, base_size, seed, "class-mean")?,
        dbscan: DbscanParams { epsilon, min_points },
        eval: EvalConfig {
            seed,
            ..Default::default()
        },
        ..Default::default()
    };
    let outcomes = py
        .detach(|| dcne::pipeline::cmd_clusterize(&net, &dataset, None, &cfg, &out))
        .map_err(py_err)?;
    json(&outcomes)
}

/// Mean IoU per (z, n) cell and class; returns the table as JSON.
#[pyfunction]
#[pyo3(signature = (manifest, components, base_sizes, seed = 0))]
fn sweep(py: Python<'_>, manifest: PathBuf, components: Vec<usize>, base_sizes: Vec<usize>, seed: u64) -> PyResult<String> {
    let (dataset, net) = load_dataset(manifest)?;
    let spec = SweepSpec {
        component_counts: components,
        base_sizes,
        seed,
        ..Default::default()
    };
    let table = py
        .detach(|| dcne::pipeline::cmd_sweep(&net, &dataset, None, &spec))
        .map_err(py_err)?;
    json(&table)
}

#[pymodule]
#[pyo3(name = "dcne")]
fn dcne_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Network>()?;
    m.add_function(wrap_pyfunction!(nnmf, m)?)?;
    m.add_function(wrap_pyfunction!(dbscan, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_to_uint8, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(explain_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(clusterize, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
