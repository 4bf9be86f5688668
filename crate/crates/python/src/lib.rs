//! Python bindings for `rpca_core`.
//!
//! Vectors cross the boundary as lists of floats and matrices as [`Matrix`]
//! objects (column-major storage, built from row lists or flat data).

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rpca_core as core;
use rpca_core::RpcaError;

fn err(e: RpcaError) -> PyErr {
    match e {
        RpcaError::Io(_) => PyIOError::new_err(e.to_string()),
        RpcaError::Dimension(_) | RpcaError::InvalidParameter(_) | RpcaError::Format(_) | RpcaError::NonFinite(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

/// Dense real matrix.
#[pyclass(module = "rpca", skip_from_py_object)]
#[derive(Clone)]
struct Matrix {
    inner: core::DenseMatrix,
}

impl From<core::DenseMatrix> for Matrix {
    fn from(inner: core::DenseMatrix) -> Self {
        Self { inner }
    }
}

#[pymethods]
impl Matrix {
    /// `Matrix(rows, cols, data)` with `data` in column-major order.
    #[new]
    fn new(rows: usize, cols: usize, data: Vec<f64>) -> PyResult<Self> {
        Ok(core::DenseMatrix::new(rows, cols, data).py()?.into())
    }

    #[staticmethod]
    fn from_rows(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(PyValueError::new_err("ragged rows"));
        }
        let data = (0..c).flat_map(|j| rows.iter().map(move |row| row[j])).collect();
        Self::new(r, c, data)
    }

    #[staticmethod]
    fn zeros(rows: usize, cols: usize) -> Self {
        core::DenseMatrix::zeros(rows, cols).into()
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    fn get(&self, i: usize, j: usize) -> PyResult<f64> {
        if i >= self.inner.rows() || j >= self.inner.cols() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.get(i, j))
    }

    fn column(&self, j: usize) -> PyResult<Vec<f64>> {
        if j >= self.inner.cols() {
            return Err(PyValueError::new_err("column out of range"));
        }
        Ok(self.inner.column(j).to_vec())
    }

    fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.inner.rows()).map(|i| self.inner.row(i)).collect()
    }

    /// Column-major entries.
    fn data(&self) -> Vec<f64> {
        self.inner.as_slice().to_vec()
    }

    fn matmul(&self, other: &Matrix) -> PyResult<Matrix> {
        Ok(self.inner.matmul(&other.inner).py()?.into())
    }

    fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    fn __repr__(&self) -> String {
        format!("Matrix({}x{})", self.inner.rows(), self.inner.cols())
    }
}

/// Regularization weights `λ*`, per-coordinate `λ` and dictionary size `q`.
#[pyclass(module = "rpca", skip_from_py_object)]
#[derive(Clone)]
struct RegParams {
    inner: core::RegParams,
}

#[pymethods]
impl RegParams {
    /// `lam` is either one threshold for every coordinate or a list of `m`.
    #[new]
    fn new(lambda_star: f64, lam: &Bound<'_, PyAny>, m: usize, q: usize) -> PyResult<Self> {
        let inner = if let Ok(v) = lam.extract::<f64>() {
            core::RegParams::uniform(lambda_star, v, m, q)
        } else {
            let v: Vec<f64> = lam.extract()?;
            if v.len() != m {
                return Err(PyValueError::new_err(format!(
                    "expected {m} thresholds, got {}",
                    v.len()
                )));
            }
            core::RegParams::new(lambda_star, v, q)
        }
        .py()?;
        Ok(Self { inner })
    }

    #[getter]
    fn lambda_star(&self) -> f64 {
        self.inner.lambda_star()
    }

    #[getter]
    fn lam(&self) -> Vec<f64> {
        self.inner.lambda().to_vec()
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }
}

fn solver_cfg(tol: f64, max_iter: usize) -> PyResult<core::SolverConfig> {
    core::SolverConfig::new(tol, max_iter).py()
}

/// Result of a per-sample projection.
#[pyclass(module = "rpca", get_all, skip_from_py_object)]
#[derive(Clone)]
struct Projection {
    s: Vec<f64>,
    o: Vec<f64>,
    iterations: usize,
    final_cost: f64,
    converged: bool,
}

impl From<core::Projection> for Projection {
    fn from(p: core::Projection) -> Self {
        Self {
            s: p.s,
            o: p.o,
            iterations: p.iterations,
            final_cost: p.final_cost,
            converged: p.converged,
        }
    }
}

#[pymethods]
impl Projection {
    fn __repr__(&self) -> String {
        format!(
            "Projection(cost={}, iterations={}, converged={})",
            self.final_cost, self.iterations, self.converged
        )
    }
}

#[pyfunction]
fn soft_threshold(v: Vec<f64>, lam: Vec<f64>) -> PyResult<Vec<f64>> {
    core::soft_threshold(&v, &lam).py()
}

/// Returns `(U, S)` with `U S = L` truncated to rank `q`.
#[pyfunction]
fn svd_factorize(l: &Matrix, q: usize) -> PyResult<(Matrix, Matrix)> {
    let (u, s) = core::svd_factorize(&l.inner, q).py()?;
    Ok((u.into(), s.into()))
}

#[pyfunction]
fn nuclear_norm(l: &Matrix) -> f64 {
    core::nuclear_norm(&l.inner)
}

#[pyfunction]
#[pyo3(signature = (x, u, p, tol = 1e-9, max_iter = 5000))]
fn robust_project(x: Vec<f64>, u: &Matrix, p: &RegParams, tol: f64, max_iter: usize) -> PyResult<Projection> {
    Ok(
        core::robust_project(&x, &u.inner, &p.inner, &solver_cfg(tol, max_iter)?)
            .py()?
            .into(),
    )
}

#[pyfunction]
fn kkt_residual(x: Vec<f64>, s: Vec<f64>, o: Vec<f64>, u: &Matrix, p: &RegParams) -> PyResult<f64> {
    core::kkt_residual(&x, &s, &o, &u.inner, &p.inner).py()
}

#[pyfunction]
fn projection_cost(x: Vec<f64>, s: Vec<f64>, o: Vec<f64>, u: &Matrix, p: &RegParams) -> PyResult<f64> {
    core::projection_cost(&x, &s, &o, &u.inner, &p.inner).py()
}

#[pyfunction]
fn convex_cost(x: &Matrix, l: &Matrix, o: &Matrix, p: &RegParams) -> PyResult<f64> {
    core::convex_cost(&x.inner, &l.inner, &o.inner, &p.inner).py()
}

/// Returns a dict with `u`, `s`, `o`, `cost`, `iterations`, `converged`.
#[pyfunction]
#[pyo3(signature = (x, p, tol = 1e-9, max_iter = 5000))]
fn batch_rpca<'py>(
    py: Python<'py>,
    x: &Matrix,
    p: &RegParams,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let d = core::batch_rpca(&x.inner, &p.inner, &solver_cfg(tol, max_iter)?).py()?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("cost", d.final_cost())?;
    out.set_item("iterations", d.iterations)?;
    out.set_item("converged", d.converged)?;
    out.set_item("kkt_residual", d.kkt_residual)?;
    out.set_item("u", Matrix::from(d.u))?;
    out.set_item("s", Matrix::from(d.s))?;
    out.set_item("o", Matrix::from(d.o))?;
    Ok(out.into_any())
}

/// Returns a dict with `l`, `o`, `cost`, `iterations`, `converged`.
#[pyfunction]
#[pyo3(signature = (x, p, tol = 1e-9, max_iter = 5000))]
fn convex_rpca_reference<'py>(
    py: Python<'py>,
    x: &Matrix,
    p: &RegParams,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let d = core::convex_rpca_reference(&x.inner, &p.inner, &solver_cfg(tol, max_iter)?).py()?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("cost", d.final_cost())?;
    out.set_item("iterations", d.iterations)?;
    out.set_item("converged", d.converged)?;
    out.set_item("l", Matrix::from(d.l))?;
    out.set_item("o", Matrix::from(d.o))?;
    Ok(out.into_any())
}

/// Returns `(X, L, O)`.
#[pyfunction]
#[pyo3(signature = (m, n, rank, outlier_fraction = 0.05, outlier_magnitude = 10.0, noise_sigma = 0.01, seed = 0))]
fn generate(
    m: usize,
    n: usize,
    rank: usize,
    outlier_fraction: f64,
    outlier_magnitude: f64,
    noise_sigma: f64,
    seed: u64,
) -> PyResult<(Matrix, Matrix, Matrix)> {
    let d = core::generate(&core::SynthSpec {
        m,
        n,
        rank,
        outlier_fraction,
        outlier_magnitude,
        noise_sigma,
        seed,
    })
    .py()?;
    Ok((d.x.into(), d.l.into(), d.o.into()))
}

/// Unrolled encoder with parameters `W`, `H`, `λ` and dictionary `U`.
#[pyclass(module = "rpca", skip_from_py_object)]
#[derive(Clone)]
struct Encoder {
    inner: core::EncoderParams,
}

#[pymethods]
impl Encoder {
    /// Untrained encoder equal to `layers` iterations of the exact solver.
    #[staticmethod]
    fn init(u: &Matrix, p: &RegParams, layers: usize) -> PyResult<Self> {
        Ok(Self {
            inner: core::encoder_init(&u.inner, &p.inner, layers).py()?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core::load_encoder(path).py()?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        core::save_encoder(path, &self.inner).py()
    }

    #[getter]
    fn layers(&self) -> usize {
        self.inner.layers
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn code_dim(&self) -> usize {
        self.inner.code_dim()
    }

    #[getter]
    fn lam(&self) -> Vec<f64> {
        self.inner.lambda.clone()
    }

    #[getter]
    fn dictionary(&self) -> Matrix {
        self.inner.u.clone().into()
    }

    /// Returns `(s, o)`.
    fn encode(&self, x: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let c = core::encode(&self.inner, &x).py()?;
        Ok((c.s, c.o))
    }

    /// Returns `(S, O)` for every column of `x`.
    fn encode_batch(&self, x: &Matrix) -> PyResult<(Matrix, Matrix)> {
        let (s, o) = core::forward_batch(&self.inner, &x.inner).py()?;
        Ok((s.into(), o.into()))
    }

    /// Mean per-column cost of the encoder's codes.
    fn mean_cost(&self, x: &Matrix, p: &RegParams) -> PyResult<f64> {
        core::training::mean_encoder_cost(&self.inner, &x.inner, &p.inner).py()
    }

    /// Trains a copy with SGD; returns `(encoder, epoch_mean_losses)`.
    /// `mode` is `"unsupervised"` or `"supervised"` (targets from the exact
    /// solver); `dict_update_every > 0` refits the dictionary.
    #[pyo3(signature = (x, p, mode = "unsupervised", epochs = 10, step0 = 1e-3, minibatch = 10, seed = 0, beta = 1.0, dict_update_every = 0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &self,
        x: &Matrix,
        p: &RegParams,
        mode: &str,
        epochs: usize,
        step0: f64,
        minibatch: usize,
        seed: u64,
        beta: f64,
        dict_update_every: usize,
    ) -> PyResult<(Encoder, Vec<f64>)> {
        let cfg = core::TrainConfig {
            step0,
            minibatch,
            epochs,
            seed,
            beta,
            dict_update_every,
            ..Default::default()
        };
        let targets = match mode {
            "unsupervised" => None,
            "supervised" => Some(
                core::make_supervised_targets(&x.inner, &self.inner.u, &p.inner, &core::SolverConfig::default())
                    .py()?,
            ),
            other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
        };
        let objective = match &targets {
            Some(t) => core::Objective::Supervised(t),
            None => core::Objective::Unsupervised,
        };
        let (theta, history) = core::sgd_train(&self.inner, &x.inner, objective, &p.inner, &cfg).py()?;
        Ok((Encoder { inner: theta }, history.iter().map(|r| r.mean_loss).collect()))
    }

    /// Best shift `(dx, dy)` of an image sample under the encoder objective;
    /// returns `(dx, dy, cost, projection)`.
    #[pyo3(signature = (x, width, height, p, max_shift = 8.0, dx0 = 0.0, dy0 = 0.0))]
    #[allow(clippy::too_many_arguments)]
    fn align(
        &self,
        x: Vec<f64>,
        width: usize,
        height: usize,
        p: &RegParams,
        max_shift: f64,
        dx0: f64,
        dy0: f64,
    ) -> PyResult<(f64, f64, f64, Projection)> {
        let grid = core::ImageGrid::new(width, height).py()?;
        let cfg = core::AlignConfig {
            max_shift,
            ..Default::default()
        };
        let a = core::align_project(
            &self.inner,
            &x,
            grid,
            &p.inner,
            core::TransformParams::new(dx0, dy0),
            &cfg,
        )
        .py()?;
        Ok((a.alpha.dx, a.alpha.dy, a.cost, a.projection.into()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Encoder(m={}, q={}, layers={})",
            self.inner.dim(),
            self.inner.code_dim(),
            self.inner.layers
        )
    }
}

/// Streaming decomposition with discounted closed-form dictionary refits.
#[pyclass(module = "rpca", skip_from_py_object)]
struct OnlineState {
    inner: core::OnlineState,
}

#[pymethods]
impl OnlineState {
    #[new]
    #[pyo3(signature = (u0, beta = 1.0))]
    fn new(u0: &Matrix, beta: f64) -> PyResult<Self> {
        Ok(Self {
            inner: core::online_init(u0.inner.clone(), beta).py()?,
        })
    }

    #[pyo3(signature = (x, p, tol = 1e-9, max_iter = 5000))]
    fn step(&mut self, x: Vec<f64>, p: &RegParams, tol: f64, max_iter: usize) -> PyResult<Projection> {
        Ok(self.inner.step(&x, &p.inner, &solver_cfg(tol, max_iter)?).py()?.into())
    }

    #[getter]
    fn dictionary(&self) -> Matrix {
        self.inner.dictionary().clone().into()
    }

    #[getter]
    fn samples_seen(&self) -> usize {
        self.inner.samples_seen()
    }

    fn linear_system_residual(&self, lambda_star: f64) -> f64 {
        self.inner.linear_system_residual(lambda_star)
    }
}

/// Translates a row-major image by `(dx, dy)` pixels.
#[pyfunction]
fn warp(x: Vec<f64>, width: usize, height: usize, dx: f64, dy: f64) -> PyResult<Vec<f64>> {
    let grid = core::ImageGrid::new(width, height).py()?;
    core::warp(&x, grid, core::TransformParams::new(dx, dy)).py()
}

/// Saves as CSV for a `.csv` path, RPCM otherwise.
#[pyfunction]
fn save_matrix(path: &str, m: &Matrix) -> PyResult<()> {
    core::save_matrix(path, &m.inner).py()
}

#[pyfunction]
fn load_matrix(path: &str) -> PyResult<Matrix> {
    Ok(core::load_matrix(path).py()?.into())
}

#[pymodule]
fn rpca(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Matrix>()?;
    m.add_class::<RegParams>()?;
    m.add_class::<Projection>()?;
    m.add_class::<Encoder>()?;
    m.add_class::<OnlineState>()?;
    m.add_function(wrap_pyfunction!(soft_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(svd_factorize, m)?)?;
    m.add_function(wrap_pyfunction!(nuclear_norm, m)?)?;
    m.add_function(wrap_pyfunction!(robust_project, m)?)?;
    m.add_function(wrap_pyfunction!(kkt_residual, m)?)?;
    m.add_function(wrap_pyfunction!(projection_cost, m)?)?;
    m.add_function(wrap_pyfunction!(convex_cost, m)?)?;
    m.add_function(wrap_pyfunction!(batch_rpca, m)?)?;
    m.add_function(wrap_pyfunction!(convex_rpca_reference, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(warp, m)?)?;
    m.add_function(wrap_pyfunction!(save_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(load_matrix, m)?)?;
    Ok(())
}
