//! Python bindings. Matrices cross the boundary as lists of rows; structured
//! results (episodes, portfolios) come back as plain dicts via JSON.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use seqmon::covest::{apply_threshold, estimate_moments, precision_estimate, ThresholdKind};
use seqmon::critval::{quantile, simulate_openend_sup, CriticalValues, SimConfig};
use seqmon::datagen::{generate, generate_regression63_with, GeneratorSpec};
use seqmon::deepmon::{rollover_monitor, RolloverConfig};
use seqmon::projection::{build_portfolio, PortfolioKind, PortfolioSpec};
use seqmon::{BoundaryConfig, DetectorKind, Horizon, LrvConfig, ObservationStream, ProjectionVector, Step, Weighting};

fn err(e: seqmon::Error) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("expected a non-empty rectangular list of rows"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn rows_of(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn horizon(t: Option<f64>) -> Horizon {
    t.map_or(Horizon::OpenEnd, Horizon::ClosedEnd)
}

fn boundary(gamma: f64, delta: f64, t: Option<f64>, flat: bool) -> BoundaryConfig {
    BoundaryConfig {
        gamma,
        delta,
        horizon: horizon(t),
        weighting: if flat { Weighting::Flat } else { Weighting::Paper },
    }
}

fn detector_kind(s: &str) -> PyResult<DetectorKind> {
    match s {
        "projection" => Ok(DetectorKind::Projection),
        "residual" => Ok(DetectorKind::Residual),
        _ => Err(PyValueError::new_err(format!("unknown detector kind {s:?}"))),
    }
}

fn threshold_kind(s: &str) -> PyResult<ThresholdKind> {
    match s {
        "hard" => Ok(ThresholdKind::Hard),
        "lasso" => Ok(ThresholdKind::Lasso),
        "scad" => Ok(ThresholdKind::scad()),
        _ => Err(PyValueError::new_err(format!("unknown threshold kind {s:?}"))),
    }
}

/// Round-trip a serializable value into Python objects through `json`.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Frozen detector state; feed observations with `step`.
#[pyclass(name = "MonitorState", module = "seqmon", skip_from_py_object)]
#[derive(Clone)]
struct PyMonitorState {
    inner: seqmon::MonitorState,
}

#[pymethods]
impl PyMonitorState {
    /// Freeze a detector on a training block of rows.
    #[staticmethod]
    #[pyo3(signature = (train, v, c, gamma=0.25, delta=0.1, horizon=None, flat=false, kind="projection", responses=None, bandwidth=None))]
    #[allow(clippy::too_many_arguments)]
    fn from_training(
        train: Vec<Vec<f64>>,
        v: Vec<f64>,
        c: f64,
        gamma: f64,
        delta: f64,
        horizon: Option<f64>,
        flat: bool,
        kind: &str,
        responses: Option<Vec<f64>>,
        bandwidth: Option<usize>,
    ) -> PyResult<Self> {
        let rows: Vec<&[f64]> = train.iter().map(Vec::as_slice).collect();
        let lrv = bandwidth.map_or_else(LrvConfig::default, LrvConfig::with_bandwidth);
        let inner = seqmon::MonitorState::from_training(
            &rows,
            responses.as_deref(),
            ProjectionVector::new(v),
            &lrv,
            c,
            boundary(gamma, delta, horizon, flat),
            detector_kind(kind)?,
        )
        .map_err(err)?;
        Ok(Self { inner })
    }

    /// Consume one observation. Returns `None` during warm-up and after
    /// the detector stopped, else a dict with `k`, `stat`, `bound` and
    /// `signal`.
    #[pyo3(signature = (y, z=None))]
    fn step<'py>(&mut self, py: Python<'py>, y: Vec<f64>, z: Option<f64>) -> PyResult<Option<Bound<'py, PyDict>>> {
        let (k, stat, bound, signal) = match self.inner.step(&y, z).map_err(err)? {
            Step::Checked { k, stat, bound } => (k, stat, bound, false),
            Step::Signal(e) => (e.k, e.stat, e.bound, true),
            Step::Warmup { .. } | Step::TerminalNoSignal | Step::Frozen => return Ok(None),
        };
        let d = PyDict::new(py);
        d.set_item("k", k)?;
        d.set_item("stat", stat)?;
        d.set_item("bound", bound)?;
        d.set_item("signal", signal)?;
        Ok(Some(d))
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma0_hat
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q()
    }

    /// Stream time of the signal, if any.
    #[getter]
    fn signal_time(&self) -> Option<usize> {
        self.inner.signaled_at.map(|k| self.inner.m + k)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self {
            inner: seqmon::MonitorState::from_json(s).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "MonitorState(m={}, k={}, sigma={:.6}, signaled={})",
            self.inner.m,
            self.inner.k,
            self.inner.sigma0_hat,
            self.inner.is_signaled()
        )
    }
}

/// Long-run variance of a scalar series by overlapping block sums.
#[pyfunction]
#[pyo3(signature = (xs, bandwidth=None))]
fn lrv_estimate(xs: Vec<f64>, bandwidth: Option<usize>) -> PyResult<f64> {
    let cfg = bandwidth.map_or_else(LrvConfig::default, LrvConfig::with_bandwidth);
    seqmon::lrv_estimate(&xs, &cfg).map_err(err)
}

#[pyfunction]
fn boundary_g(m: usize, k: usize, gamma: f64) -> PyResult<f64> {
    seqmon::boundary_g(m, k, gamma).map_err(err)
}

/// Critical value from the shipped table, simulated on a miss.
#[pyfunction]
#[pyo3(signature = (gamma=0.25, delta=0.1, alpha=0.05, horizon=None, flat=false, reps=100_000, grid=10_000, seed=20_240_601))]
#[allow(clippy::too_many_arguments)]
fn critical_value(
    gamma: f64,
    delta: f64,
    alpha: f64,
    horizon: Option<f64>,
    flat: bool,
    reps: usize,
    grid: usize,
    seed: u64,
) -> PyResult<f64> {
    let mut cv = CriticalValues::shipped(SimConfig { reps, grid, seed });
    let w = if flat { Weighting::Flat } else { Weighting::Paper };
    cv.get(gamma, delta, self::horizon(horizon), w, alpha).map_err(err)
}

/// Simulated open-end suprema and their `1 - alpha` quantile.
#[pyfunction]
#[pyo3(signature = (gamma, delta, alpha=0.05, reps=10_000, grid=1_000, seed=1))]
fn simulate_openend(gamma: f64, delta: f64, alpha: f64, reps: usize, grid: usize, seed: u64) -> PyResult<(f64, Vec<f64>)> {
    let sample = simulate_openend_sup(gamma, delta, &SimConfig { reps, grid, seed }).map_err(err)?;
    let q = quantile(&sample, alpha).map_err(err)?;
    Ok((q, sample))
}

/// Scalar thresholding operator.
#[pyfunction]
#[pyo3(signature = (x, t, kind="hard"))]
fn threshold(x: f64, t: f64, kind: &str) -> PyResult<f64> {
    Ok(threshold_kind(kind)?.apply(x, t))
}

/// Sample covariance of `data` (rows are observations) with thresholded
/// off-diagonal entries.
#[pyfunction]
#[pyo3(signature = (data, t, kind="hard"))]
fn thresholded_covariance(data: Vec<Vec<f64>>, t: f64, kind: &str) -> PyResult<Vec<Vec<f64>>> {
    let est = estimate_moments(&matrix(&data)?).map_err(err)?;
    Ok(rows_of(&apply_threshold(&est.sigma_hat, threshold_kind(kind)?, t)))
}

/// Plug-in portfolio from a covariance matrix: `minvar`, `target` (needs
/// `mu` and `mu0`) or `tangency` (needs `mu`).
#[pyfunction]
#[pyo3(signature = (sigma, kind="minvar", mu=None, mu0=None, eps0=1e-4))]
fn portfolio<'py>(
    py: Python<'py>,
    sigma: Vec<Vec<f64>>,
    kind: &str,
    mu: Option<Vec<f64>>,
    mu0: Option<f64>,
    eps0: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let sigma = matrix(&sigma)?;
    let kind = match (kind, mu0) {
        ("minvar", _) => PortfolioKind::MinVariance,
        ("target", Some(mu0)) => PortfolioKind::TargetReturn { mu0 },
        ("target", None) => return Err(PyValueError::new_err("target portfolio needs mu0")),
        ("tangency", _) => PortfolioKind::Tangency,
        (k, _) => return Err(PyValueError::new_err(format!("unknown portfolio kind {k:?}"))),
    };
    let needs_mu = !matches!(kind, PortfolioKind::MinVariance);
    let mu = match mu {
        Some(mu) => mu,
        None if needs_mu => return Err(PyValueError::new_err("this portfolio needs mu")),
        None => vec![0.0; sigma.nrows()],
    };
    let p = precision_estimate(&sigma, eps0).map_err(err)?;
    let spec = PortfolioSpec {
        kind,
        exposure_cap: None,
    };
    to_py(py, &build_portfolio(&spec, &p.precision, &mu).map_err(err)?)
}

fn stream_rows(s: &ObservationStream) -> Vec<Vec<f64>> {
    s.rows().map(<[f64]>::to_vec).collect()
}

/// Vector moving-average stream as a list of rows.
#[pyfunction]
#[pyo3(signature = (d, n, beta=3.0, l_max=10, seed=1))]
fn generate_vector_ma(d: usize, n: usize, beta: f64, l_max: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let s = generate(&GeneratorSpec::vector_ma(d, beta, l_max, seed), n).map_err(err)?;
    Ok(stream_rows(&s))
}

/// Gaussian stream with covariance `I` up to `k_star` and `factor * I` after.
#[pyfunction]
#[pyo3(signature = (d, n, k_star, factor=2.0, seed=1))]
fn generate_covariance_break(d: usize, n: usize, k_star: usize, factor: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let eye = DMatrix::identity(d, d);
    let spec = GeneratorSpec::covariance_break(eye.clone(), eye * factor, k_star, seed);
    Ok(stream_rows(&generate(&spec, n).map_err(err)?))
}

/// Three-regime regression data: `(rows, responses)`.
#[pyfunction]
#[pyo3(signature = (seed=1, n=50_000, noise_as_sd=false))]
fn generate_regression63(seed: u64, n: usize, noise_as_sd: bool) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let s = generate_regression63_with(seed, n, noise_as_sd).map_err(err)?;
    let z = s.response().map(<[f64]>::to_vec).unwrap_or_default();
    Ok((stream_rows(&s), z))
}

/// Retraining experiment on the regression data; returns the episode list.
#[pyfunction]
#[pyo3(signature = (seed=1, m=1000, n=50_000, c=None, gamma=0.25, delta=0.1, epochs=100, retrain=true))]
#[allow(clippy::too_many_arguments)]
fn experiment63<'py>(
    py: Python<'py>,
    seed: u64,
    m: usize,
    n: usize,
    c: Option<f64>,
    gamma: f64,
    delta: f64,
    epochs: usize,
    retrain: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let c = match c {
        Some(c) => c,
        None => CriticalValues::shipped(SimConfig::default())
            .get(gamma, delta, Horizon::OpenEnd, Weighting::Paper, 0.05)
            .map_err(err)?,
    };
    let stream = generate_regression63_with(seed, n, false).map_err(err)?;
    let mut cfg = RolloverConfig::new(m, BoundaryConfig::open_end(gamma, delta), c, seed);
    cfg.train.epochs = epochs;
    cfg.retrain = retrain;
    let log = py.detach(|| rollover_monitor(&stream, &cfg)).map_err(err)?;
    to_py(py, &log.episodes)
}

#[pymodule]
#[pyo3(name = "seqmon")]
fn seqmon_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMonitorState>()?;
    m.add_function(wrap_pyfunction!(lrv_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_g, m)?)?;
    m.add_function(wrap_pyfunction!(critical_value, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_openend, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(thresholded_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(portfolio, m)?)?;
    m.add_function(wrap_pyfunction!(generate_vector_ma, m)?)?;
    m.add_function(wrap_pyfunction!(generate_covariance_break, m)?)?;
    m.add_function(wrap_pyfunction!(generate_regression63, m)?)?;
    m.add_function(wrap_pyfunction!(experiment63, m)?)?;
    Ok(())
}
