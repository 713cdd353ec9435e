//! Python bindings: kernels, DAG builders, the Vecchia factor, posterior
//! sampling and the numerical diagnostics.
//!
//! Point sets cross the boundary as lists of coordinate lists. Library errors
//! caused by bad input raise `ValueError`; numerical failures raise
//! `RuntimeError`.

use std::sync::Arc;

use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vecchia::dagbuild::{self, GeneralOptions};
use vecchia::diagnostics;
use vecchia::inference::{self, Dataset, McmcConfig, PriorSpec, TauPrior};
use vecchia::polymath::{self, Cube};
use vecchia::{experiment, VecchiaError};

fn to_py(e: VecchiaError) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn point_set(points: Vec<Vec<f64>>) -> PyResult<polymath::PointSet> {
    polymath::PointSet::from_points(&points).map_err(to_py)
}

fn rows(points: &polymath::PointSet) -> Vec<Vec<f64>> {
    points.iter().map(<[f64]>::to_vec).collect()
}

/// Isotropic Matérn covariance `s^2 K(tau |x - y|)`.
#[pyclass(name = "MaternConfig", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyMaternConfig(vecchia::MaternConfig);

#[pymethods]
impl PyMaternConfig {
    #[new]
    #[pyo3(signature = (alpha, tau = 1.0, s = 1.0))]
    fn new(alpha: f64, tau: f64, s: f64) -> PyResult<Self> {
        vecchia::MaternConfig::new(alpha, tau, s).map(Self).map_err(to_py)
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.0.tau
    }

    #[getter]
    fn s(&self) -> f64 {
        self.0.s
    }

    fn cov(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        if x.len() != y.len() {
            return Err(PyValueError::new_err("points have different dimensions"));
        }
        Ok(self.0.cov(&x, &y))
    }

    fn __repr__(&self) -> String {
        format!("MaternConfig(alpha={}, tau={}, s={})", self.0.alpha, self.0.tau, self.0.s)
    }
}

/// Directed acyclic graph of conditioning sets, nodes in topological order.
#[pyclass(name = "LayeredDag", frozen)]
struct PyLayeredDag(Arc<vecchia::LayeredDag>);

#[pymethods]
impl PyLayeredDag {
    /// Layered norming DAG with corner parent sets on a tensor lattice.
    #[staticmethod]
    #[pyo3(signature = (points, order, augment = false))]
    fn grid(points: Vec<Vec<f64>>, order: usize, augment: bool) -> PyResult<Self> {
        let dag = dagbuild::build_grid_dag(&point_set(points)?, order, augment).map_err(to_py)?;
        Ok(Self(Arc::new(dag)))
    }

    /// Layered DAG for scattered points with singular-value-gated parents.
    #[staticmethod]
    #[pyo3(signature = (points, order, seed = None))]
    fn general(points: Vec<Vec<f64>>, order: usize, seed: Option<u64>) -> PyResult<Self> {
        let opts = GeneralOptions { seed, ..GeneralOptions::default() };
        let dag = dagbuild::build_general_dag(&point_set(points)?, order, opts).map_err(to_py)?;
        Ok(Self(Arc::new(dag)))
    }

    /// Maximin ordering with nearest earlier neighbours as parents.
    #[staticmethod]
    #[pyo3(signature = (points, parents = None, seed = None))]
    fn nngp(points: Vec<Vec<f64>>, parents: Option<usize>, seed: Option<u64>) -> PyResult<Self> {
        let points = point_set(points)?;
        let m = parents.unwrap_or_else(|| dagbuild::default_parent_count(points.len()));
        let dag = dagbuild::build_maximin_nngp_dag(&points, m, seed).map_err(to_py)?;
        Ok(Self(Arc::new(dag)))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        vecchia::LayeredDag::from_json(text).map(|d| Self(Arc::new(d))).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.0.dimension
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m
    }

    #[getter]
    fn i0(&self) -> usize {
        self.0.i0
    }

    #[getter]
    fn num_layers(&self) -> usize {
        self.0.num_layers()
    }

    fn points(&self) -> Vec<Vec<f64>> {
        rows(&self.0.points())
    }

    fn parents(&self, i: usize) -> PyResult<Vec<usize>> {
        self.check(i)?;
        Ok(self.0.parents(i).to_vec())
    }

    fn layer(&self, i: usize) -> PyResult<usize> {
        self.check(i)?;
        Ok(self.0.layer(i))
    }

    /// Largest row sum of the composed layer-to-layer interpolation operators.
    fn vartheta(&self) -> PyResult<f64> {
        diagnostics::estimate_vartheta(&self.0).map_err(to_py)
    }
}

impl PyLayeredDag {
    fn check(&self, i: usize) -> PyResult<()> {
        if i >= self.0.len() {
            return Err(PyIndexError::new_err(format!("node {i} out of range for {} nodes", self.0.len())));
        }
        Ok(())
    }
}

/// Sparse factorisation `Phi = B^T D^{-1} B` of the Vecchia precision.
#[pyclass(name = "VecchiaFactor", frozen)]
struct PyVecchiaFactor(vecchia::VecchiaFactor);

#[pymethods]
impl PyVecchiaFactor {
    #[new]
    #[pyo3(signature = (dag, config, jitter = false))]
    fn new(py: Python<'_>, dag: &PyLayeredDag, config: &PyMaternConfig, jitter: bool) -> PyResult<Self> {
        let dag = dag.0.clone();
        let cfg = config.0;
        py.detach(|| vecchia::VecchiaFactor::build(dag, cfg, jitter)).map(Self).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Conditional variances `d_i` in node order.
    fn variances(&self) -> Vec<f64> {
        self.0.variances().to_vec()
    }

    /// Kriging weights of node `i` on its parents.
    fn weights(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.0.len() {
            return Err(PyIndexError::new_err(format!("node {i} out of range")));
        }
        Ok(self.0.weights(i).to_vec())
    }

    fn log_density(&self, z: Vec<f64>) -> PyResult<f64> {
        self.check_len(&z)?;
        Ok(self.0.log_prior_density(&z))
    }

    fn apply_precision(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_len(&v)?;
        Ok(self.0.apply_precision(&v))
    }

    fn rkhs_norm_sq(&self, f: Vec<f64>) -> PyResult<f64> {
        self.check_len(&f)?;
        Ok(self.0.rkhs_norm_sq(&f))
    }

    /// Draw from the Vecchia prior in node order.
    fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.0.sample_prior(&mut rng)
    }

    /// Dense precision matrix as a list of rows, for small graphs.
    fn dense_precision(&self) -> PyResult<Vec<Vec<f64>>> {
        let phi = self.0.dense_precision(vecchia::factor::DENSE_CAP).map_err(to_py)?;
        Ok(phi.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    /// `(mean, variance)` at each test point given latent values `z`.
    #[pyo3(signature = (test, z, order = None))]
    fn predict(&self, test: Vec<Vec<f64>>, z: Vec<f64>, order: Option<usize>) -> PyResult<Vec<(f64, f64)>> {
        self.check_len(&z)?;
        let l = order.unwrap_or_else(|| self.0.config().floor_alpha());
        let preds = self.0.predict(&point_set(test)?, &z, l).map_err(to_py)?;
        Ok(preds.into_iter().map(|p| (p.mean, p.variance)).collect())
    }
}

impl PyVecchiaFactor {
    fn check_len(&self, v: &[f64]) -> PyResult<()> {
        if v.len() != self.0.len() {
            return Err(PyValueError::new_err(format!("expected {} values, got {}", self.0.len(), v.len())));
        }
        Ok(())
    }
}

/// Posterior of a Gibbs run: pointwise summaries in DAG node order and the
/// hyperparameter traces.
#[pyclass(name = "FitResult", frozen, get_all)]
struct PyFitResult {
    mean: Vec<f64>,
    q025: Vec<f64>,
    q975: Vec<f64>,
    sigma2: Vec<f64>,
    tau: Vec<f64>,
    cg_iters_mean: f64,
    acceptance_rate: Option<f64>,
}

/// Gibbs sampler for `y = f(x) + N(0, sigma^2)` under a Vecchia prior on `f`.
#[pyfunction]
#[pyo3(signature = (points, y, dag, config, seed, iters = 2000, burn = 500, adapt_tau = false, a0 = 1.0, b0 = 1.0, sigma2 = None))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    points: Vec<Vec<f64>>,
    y: Vec<f64>,
    dag: &PyLayeredDag,
    config: &PyMaternConfig,
    seed: u64,
    iters: usize,
    burn: usize,
    adapt_tau: bool,
    a0: f64,
    b0: f64,
    sigma2: Option<f64>,
) -> PyResult<PyFitResult> {
    let data = Dataset::new(point_set(points)?, y).map_err(to_py)?;
    let cfg = config.0;
    let dag = dag.0.clone();
    let priors = PriorSpec {
        a0,
        b0,
        tau_prior: if adapt_tau {
            TauPrior::PowerExponential { alpha: cfg.alpha, d: dag.dimension, n: data.y.len() }
        } else {
            TauPrior::Fixed
        },
        fixed_sigma2: sigma2,
    };
    let mcmc = McmcConfig { n_iter: iters, burn_in: burn, seed, ..McmcConfig::default() };
    let out = py.detach(|| inference::run_gibbs(&data, dag, cfg, priors, mcmc)).map_err(to_py)?;
    let s = out.summary;
    Ok(PyFitResult {
        mean: s.mean,
        q025: s.q025,
        q975: s.q975,
        sigma2: s.sigma2_trace,
        tau: s.tau_trace,
        cg_iters_mean: s.cg_iters_mean,
        acceptance_rate: s.acceptance_rate,
    })
}

/// Lattice with `n_axis` points per axis on `[0, 1]^d`, last coordinate fastest.
#[pyfunction]
fn unit_grid(d: usize, n_axis: usize) -> PyResult<Vec<Vec<f64>>> {
    experiment::unit_grid(d, n_axis).map(|p| rows(&p)).map_err(to_py)
}

/// Polynomial interpolation weights of `x` on the unisolvent set `points`.
#[pyfunction]
fn interp_weights(points: Vec<Vec<f64>>, x: Vec<f64>) -> PyResult<Vec<f64>> {
    polymath::interp_weights(&point_set(points)?, &x).map_err(to_py)
}

/// Norming constant of `points` for polynomials of order `order` over the
/// cube with lower corner `corner` and side `side`; defaults to the smallest
/// cube containing the points. Infinite when the points are not unisolvent.
#[pyfunction]
#[pyo3(signature = (points, order, corner = None, side = None))]
fn norming_constant(points: Vec<Vec<f64>>, order: usize, corner: Option<Vec<f64>>, side: Option<f64>) -> PyResult<f64> {
    let points = point_set(points)?;
    let cube = match (corner, side) {
        (Some(corner), Some(side)) => Cube::new(corner, side),
        (None, None) => Cube::enclosing(points.iter()).ok_or_else(|| PyValueError::new_err("empty point set"))?,
        _ => return Err(PyValueError::new_err("give both corner and side, or neither")),
    };
    polymath::norming_constant(&points, &cube, order).map(|r| r.norming_constant.value()).map_err(to_py)
}

type FlatLimit = (Vec<(f64, f64)>, Option<f64>);

/// `(nu, error)` pairs and the log-log slope of the kriging-to-polynomial
/// weight gap as the point set shrinks.
#[pyfunction]
fn flat_limit_error(points: Vec<Vec<f64>>, x: Vec<f64>, alpha: f64, nus: Vec<f64>) -> PyResult<FlatLimit> {
    let curve = diagnostics::flat_limit_error(&point_set(points)?, &x, alpha, &nus).map_err(to_py)?;
    Ok((curve.points, curve.slope))
}

/// Squared 2-Wasserstein distance between two Gaussians.
#[pyfunction]
fn gaussian_w2_sq(mean1: Vec<f64>, cov1: Vec<Vec<f64>>, mean2: Vec<f64>, cov2: Vec<Vec<f64>>) -> PyResult<f64> {
    let square = |rows: &[Vec<f64>]| -> PyResult<nalgebra::DMatrix<f64>> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("covariance must be square"));
        }
        Ok(nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    };
    let (c1, c2) = (square(&cov1)?, square(&cov2)?);
    if mean1.len() != c1.nrows() || mean2.len() != c2.nrows() || c1.nrows() != c2.nrows() {
        return Err(PyValueError::new_err("mean and covariance sizes disagree"));
    }
    diagnostics::gaussian_w2_sq(&mean1, &c1, &mean2, &c2).map_err(to_py)
}

/// `(value at 1/2, supremum, argmax)` of the one-dimensional transition measure.
#[pyfunction]
#[pyo3(signature = (alpha, resolution = 4096))]
fn transition_measure_sup(alpha: f64, resolution: usize) -> PyResult<(f64, f64, f64)> {
    let tm = diagnostics::transition_measure_sup(alpha, resolution).map_err(to_py)?;
    Ok((tm.at_half, tm.sup, tm.argmax))
}

#[pymodule]
fn vecchia_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMaternConfig>()?;
    m.add_class::<PyLayeredDag>()?;
    m.add_class::<PyVecchiaFactor>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(unit_grid, m)?)?;
    m.add_function(wrap_pyfunction!(interp_weights, m)?)?;
    m.add_function(wrap_pyfunction!(norming_constant, m)?)?;
    m.add_function(wrap_pyfunction!(flat_limit_error, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_w2_sq, m)?)?;
    m.add_function(wrap_pyfunction!(transition_measure_sup, m)?)?;
    Ok(())
}
