//! Concise maps by non-negative matrix factorization of an explanation set.
//!
//! Each of the `|E(x)|` maps becomes one row of `M` (length `h*w`). We fit
//! `M ≈ W H` with `W: |E(x)| x z` and `H: z x d` on the Frobenius objective,
//! then reshape the rows of `H` back to image grids.
//!
//! Two solvers alternate between `H` and `W` steps. Coordinate descent
//! (hierarchical ALS: exact non-negative minimization over one row of `H` or
//! one column of `W` at a time) is the default; Lee–Seung multiplicative
//! updates are kept as an option. Both never increase the objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relprop::{Condition, ExplanationSet};
use crate::tensor::Tensor;

/// Keeps multiplicative updates defined on zero rows and columns. It enters
/// both numerator and denominator, which preserves the majorization argument
/// behind monotone descent.
const UPDATE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FlattenedExplanation {
    /// Shape `(|E(x)|, h*w)`, all entries non-negative.
    pub matrix: Tensor,
    pub source_conditions: Vec<Condition>,
    pub height: usize,
    pub width: usize,
}

/// Sweeps over the rows of `H` (or columns of `W`) per half-step of
/// coordinate descent. The Gram matrices are reused, so extra sweeps are
/// cheap next to the `WᵀM` and `MHᵀ` products.
const CD_SWEEPS: usize = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    #[default]
    CoordinateDescent,
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorizationConfig {
    pub components: usize,
    pub max_iterations: usize,
    /// Stop once the relative objective change falls below this.
    pub convergence_tolerance: f64,
    pub seed: u64,
    #[serde(default)]
    pub solver: Solver,
}

impl Default for FactorizationConfig {
    fn default() -> Self {
        Self {
            components: 10,
            max_iterations: 200,
            convergence_tolerance: 1e-4,
            seed: 0,
            solver: Solver::CoordinateDescent,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    /// Shape `(rows, z)`.
    pub w: Tensor,
    /// Shape `(z, d)`.
    pub h: Tensor,
    /// `‖M − WH‖²` at initialization followed by one entry per iteration.
    pub objective_trace: Vec<f64>,
}

impl Factorization {
    pub fn iterations(&self) -> usize {
        self.objective_trace.len() - 1
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConciseSet {
    pub image_id: String,
    /// `z` grids of shape `(h, w)`: the rows of `H`.
    pub maps: Vec<Tensor>,
    /// `W`, shape `(|E(x)|, z)`.
    pub mixing: Tensor,
}

impl ConciseSet {
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

/// Stacks maps row-wise in pixel order, clamping negative relevance to zero.
pub fn flatten(ex: &ExplanationSet) -> Result<FlattenedExplanation> {
    let first = ex.maps.first().ok_or(Error::Empty("explanation set has no maps"))?;
    let (height, width) = (first.height(), first.width());
    let d = height * width;
    let mut data = Vec::with_capacity(ex.maps.len() * d);
    for map in &ex.maps {
        if map.values.shape() != [height, width] {
            return Err(Error::Shape {
                expected: vec![height, width],
                actual: map.values.shape().to_vec(),
            });
        }
        data.extend(map.values.data().iter().map(|&v| v.max(0.0)));
    }
    Ok(FlattenedExplanation {
        matrix: Tensor::from_parts(vec![ex.maps.len(), d], data),
        source_conditions: ex.conditions(),
        height,
        width,
    })
}

fn check_input(m: &Tensor, cfg: &FactorizationConfig) -> Result<(usize, usize)> {
    let &[rows, d] = m.shape() else {
        return Err(Error::Config("factorization input must be a matrix".into()));
    };
    if m.data().iter().any(|&v| v < 0.0) {
        return Err(Error::Config("factorization input has negative entries".into()));
    }
    let z = cfg.components;
    if z == 0 || z > rows.min(d) {
        return Err(Error::Config(format!(
            "components {z} must lie in 1..={}",
            rows.min(d)
        )));
    }
    if cfg.max_iterations == 0 {
        return Err(Error::Config("max_iterations must be at least 1".into()));
    }
    Ok((rows, d))
}

/// Seeded initial factors: uniform on (0, 1], scaled by `sqrt(mean(M) / z)`
/// so that `WH` starts at the magnitude of `M`.
pub fn initial_factors(m: &Tensor, cfg: &FactorizationConfig) -> Result<(Tensor, Tensor)> {
    let (rows, d) = check_input(m, cfg)?;
    let z = cfg.components;
    let mean = m.sum() / m.len() as f64;
    let scale = (mean / z as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n).map(|_| (1.0 - rng.gen::<f64>()) * scale).collect()
    };
    let w = draw(rows * z);
    let h = draw(z * d);
    Ok((
        Tensor::from_parts(vec![rows, z], w),
        Tensor::from_parts(vec![z, d], h),
    ))
}

pub fn nnmf(m: &Tensor, cfg: &FactorizationConfig) -> Result<Factorization> {
    let (w, h) = initial_factors(m, cfg)?;
    nnmf_from(m, w, h, cfg)
}

/// Runs the updates from caller-supplied starting factors.
pub fn nnmf_from(m: &Tensor, w: Tensor, h: Tensor, cfg: &FactorizationConfig) -> Result<Factorization> {
    let (rows, d) = check_input(m, cfg)?;
    let z = cfg.components;
    if w.shape() != [rows, z] || h.shape() != [z, d] {
        return Err(Error::Shape {
            expected: vec![rows, z, d],
            actual: [w.shape(), h.shape()].concat(),
        });
    }
    if w.data().iter().chain(h.data()).any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Config("initial factors must be finite and non-negative".into()));
    }
    let mdata = m.data();
    let mut w = w.into_data();
    let mut h = h.into_data();

    let mut wtm = vec![0.0; z * d];
    let mut wtw = vec![0.0; z * z];
    let mut wtwh = vec![0.0; z * d];
    let mut mht = vec![0.0; rows * z];
    let mut hht = vec![0.0; z * z];
    let mut whht = vec![0.0; rows * z];
    let mut scratch = vec![0.0; d];

    let m_norm2: f64 = mdata.iter().map(|v| v * v).sum();
    let mut trace = vec![objective(mdata, &w, &h, rows, z, d, &mut scratch)];
    for _ in 0..cfg.max_iterations {
        wtm.fill(0.0);
        for i in 0..rows {
            let mrow = &mdata[i * d..(i + 1) * d];
            for k in 0..z {
                axpy(w[i * z + k], mrow, &mut wtm[k * d..(k + 1) * d]);
            }
        }
        gram_cols(&w, rows, z, &mut wtw);
        match cfg.solver {
            Solver::Multiplicative => {
                // H <- H * (WᵀM) / (WᵀW H)
                wtwh.fill(0.0);
                for k in 0..z {
                    for l in 0..z {
                        let (src, dst) = (&h[l * d..(l + 1) * d], &mut wtwh[k * d..(k + 1) * d]);
                        axpy(wtw[k * z + l], src, dst);
                    }
                }
                for ((hv, num), den) in h.iter_mut().zip(&wtm).zip(&wtwh) {
                    *hv *= (num + UPDATE_EPS) / (den + UPDATE_EPS);
                }
            }
            Solver::CoordinateDescent => {
                for _ in 0..CD_SWEEPS {
                    for k in 0..z {
                        let diag = wtw[k * z + k];
                        if diag <= 0.0 {
                            continue;
                        }
                        // residual = (WᵀM)_k − Σ_l (WᵀW)_kl H_l, then exact
                        // projected minimization over row k.
                        scratch.copy_from_slice(&wtm[k * d..(k + 1) * d]);
                        for l in 0..z {
                            let src = &h[l * d..(l + 1) * d];
                            let c = -wtw[k * z + l];
                            if c != 0.0 {
                                for (r, v) in scratch.iter_mut().zip(src) {
                                    *r += c * v;
                                }
                            }
                        }
                        for (hv, r) in h[k * d..(k + 1) * d].iter_mut().zip(scratch.iter()) {
                            *hv = (*hv + r / diag).max(0.0);
                        }
                    }
                }
            }
        }

        for i in 0..rows {
            let mrow = &mdata[i * d..(i + 1) * d];
            for k in 0..z {
                mht[i * z + k] = dot(mrow, &h[k * d..(k + 1) * d]);
            }
        }
        for k in 0..z {
            for l in 0..=k {
                let v = dot(&h[k * d..(k + 1) * d], &h[l * d..(l + 1) * d]);
                hht[k * z + l] = v;
                hht[l * z + k] = v;
            }
        }
        match cfg.solver {
            Solver::Multiplicative => {
                // W <- W * (MHᵀ) / (W HHᵀ)
                for i in 0..rows {
                    for k in 0..z {
                        whht[i * z + k] = (0..z).map(|l| w[i * z + l] * hht[l * z + k]).sum();
                    }
                }
                for ((wv, num), den) in w.iter_mut().zip(&mht).zip(&whht) {
                    *wv *= (num + UPDATE_EPS) / (den + UPDATE_EPS);
                }
            }
            Solver::CoordinateDescent => {
                for _ in 0..CD_SWEEPS {
                    for k in 0..z {
                        let diag = hht[k * z + k];
                        if diag <= 0.0 {
                            continue;
                        }
                        for i in 0..rows {
                            let row = &w[i * z..(i + 1) * z];
                            let fit: f64 = (0..z).map(|l| row[l] * hht[l * z + k]).sum();
                            let v = w[i * z + k] + (mht[i * z + k] - fit) / diag;
                            w[i * z + k] = v.max(0.0);
                        }
                    }
                }
            }
        }

        // ‖M − WH‖² = ‖M‖² − 2⟨W, MHᵀ⟩ + ⟨WᵀW, HHᵀ⟩, reusing MHᵀ and HHᵀ.
        gram_cols(&w, rows, z, &mut wtw);
        let cross: f64 = w.iter().zip(&mht).map(|(a, b)| a * b).sum();
        let quad: f64 = wtw.iter().zip(&hht).map(|(a, b)| a * b).sum();
        let prev = *trace.last().unwrap();
        let cur = (m_norm2 - 2.0 * cross + quad).max(0.0);
        trace.push(cur);
        if prev <= 0.0 || (prev - cur).abs() / prev < cfg.convergence_tolerance {
            break;
        }
    }

    if w.iter().chain(&h).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("nnmf"));
    }
    Ok(Factorization {
        w: Tensor::from_parts(vec![rows, z], w),
        h: Tensor::from_parts(vec![z, d], h),
        objective_trace: trace,
    })
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    if a == 0.0 {
        return;
    }
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// Eight independent partial sums so the loop vectorizes; the summation
/// order is fixed, so results stay deterministic.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// `WᵀW` for row-major `W: rows x z`.
fn gram_cols(w: &[f64], rows: usize, z: usize, out: &mut [f64]) {
    out.fill(0.0);
    for i in 0..rows {
        let row = &w[i * z..(i + 1) * z];
        for k in 0..z {
            for l in 0..z {
                out[k * z + l] += row[k] * row[l];
            }
        }
    }
}

fn objective(m: &[f64], w: &[f64], h: &[f64], rows: usize, z: usize, d: usize, scratch: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..rows {
        scratch.fill(0.0);
        for k in 0..z {
            axpy(w[i * z + k], &h[k * d..(k + 1) * d], scratch);
        }
        total += m[i * d..(i + 1) * d]
            .iter()
            .zip(scratch.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    total
}

/// Relative reconstruction error `‖M − WH‖_F / ‖M‖_F`.
pub fn relative_error(m: &Tensor, f: &Factorization) -> f64 {
    let norm = m.data().iter().map(|v| v * v).sum::<f64>();
    if norm == 0.0 {
        return f.final_objective().sqrt();
    }
    (f.final_objective() / norm).sqrt()
}

/// `E_s(x)`: the `z` coefficient rows of the factorized explanation set.
pub fn concise_set(ex: &ExplanationSet, cfg: &FactorizationConfig) -> Result<ConciseSet> {
    let flat = flatten(ex)?;
    let f = nnmf(&flat.matrix, cfg)?;
    Ok(concise_from_factorization(&ex.image_id, &flat, f))
}

pub(crate) fn concise_from_factorization(
    image_id: &str,
    flat: &FlattenedExplanation,
    f: Factorization,
) -> ConciseSet {
    let d = flat.height * flat.width;
    let maps = f
        .h
        .data()
        .chunks(d)
        .map(|row| Tensor::from_parts(vec![flat.height, flat.width], row.to_vec()))
        .collect();
    ConciseSet {
        image_id: image_id.to_string(),
        maps,
        mixing: f.w,
    }
}
