//! Python bindings for the `multidescent` crate.
//!
//! Matrices cross the boundary as lists of rows. Monte Carlo calls release
//! the interpreter lock while they run.

use multidescent::cli::{parse_law_spec, DEFAULT_SEED};
use multidescent::designer::{
    design_curve_with, verify_plan, ArrowSequence, BetaMode, CurvePlan, DesignOptions, SearchBudget, VerifyOptions,
};
use multidescent::distributions::{FeatureLaw, ProductLaw};
use multidescent::pinv::{pinv_direct, DesignMatrix, PinvState, Regime};
use multidescent::plan::{read_plan, write_plan};
use multidescent::risk::{estimate_curve, estimate_delta, estimate_ld, BetaSpec, PairedDelta, RiskEstimate};
use multidescent::selftest::run_selftest;
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn beta_spec(mode: &str, rho: Option<f64>) -> PyResult<BetaSpec> {
    match (BetaMode::parse(mode), rho) {
        (Some(BetaMode::Zero), None) => Ok(BetaSpec::Zero),
        (Some(BetaMode::Zero), Some(_)) => Err(PyValueError::new_err("rho needs beta_mode=\"gaussian\"")),
        (Some(BetaMode::GaussianBeta), Some(rho)) => Ok(BetaSpec::GaussianBeta { rho }),
        (Some(BetaMode::GaussianBeta), None) => Err(PyValueError::new_err("gaussian beta needs rho")),
        (None, _) => Err(PyValueError::new_err(format!("unknown beta_mode {mode:?}"))),
    }
}

/// Product of per-coordinate feature laws.
#[pyclass(name = "Law", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyLaw {
    inner: ProductLaw,
}

#[pymethods]
impl PyLaw {
    /// Parses `std*14,gauss:0.5,mix:0.25:16` style text.
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        let inner = parse_law_spec(spec).map_err(|e| PyValueError::new_err(e.message().to_string()))?;
        Ok(PyLaw { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// `(kind, sigma, mu)` per coordinate; unused parameters are None.
    fn coordinates(&self) -> Vec<(&'static str, Option<f64>, Option<f64>)> {
        self.inner
            .laws()
            .iter()
            .map(|l| match *l {
                FeatureLaw::StdGaussian => ("std_gaussian", None, None),
                FeatureLaw::Gaussian { sigma } => ("gaussian", Some(sigma), None),
                FeatureLaw::TrimodalMix { sigma, mu } => ("trimodal", Some(sigma), Some(mu)),
            })
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.dim()
    }

    fn __repr__(&self) -> String {
        format!("Law(dim={})", self.inner.dim())
    }
}

/// Design matrix together with its pseudoinverse.
#[pyclass(name = "Pinv", frozen)]
pub struct PyPinv {
    inner: PinvState,
}

#[pymethods]
impl PyPinv {
    /// Computes the pseudoinverse of an n-by-d matrix from scratch.
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let a = DesignMatrix::new(rows_to_matrix(&rows)?).map_err(value_err)?;
        Ok(PyPinv { inner: pinv_direct(&a) })
    }

    /// Returns the state for `[A | b]`, updating instead of recomputing.
    fn append(&self, column: Vec<f64>) -> PyResult<PyPinv> {
        let b = DVector::from_vec(column);
        let inner = self.inner.append(&b).map_err(value_err)?;
        Ok(PyPinv { inner })
    }

    fn pinv(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.pinv())
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.a())
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn regime(&self) -> &'static str {
        match self.inner.regime() {
            Regime::Under => "under",
            Regime::Boundary => "boundary",
            Regime::Over => "over",
        }
    }

    /// Minimum-norm solution of `A w = y`.
    fn solve(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        if y.len() != self.inner.n() {
            return Err(PyValueError::new_err(format!("expected {} targets, got {}", self.inner.n(), y.len())));
        }
        let w = self.inner.pinv() * DVector::from_vec(y);
        Ok(w.iter().copied().collect())
    }
}

fn estimate_dict<'py>(py: Python<'py>, e: &RiskEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("d", e.d)?;
    d.set_item("mean", e.mean)?;
    d.set_item("stderr", e.stderr)?;
    d.set_item("trials", e.trials)?;
    d.set_item("seed", e.seed)?;
    d.set_item("resample_rate", e.resample_rate)?;
    Ok(d)
}

fn delta_dict<'py>(py: Python<'py>, e: &PairedDelta) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("d", e.d_from)?;
    d.set_item("delta_mean", e.delta_mean)?;
    d.set_item("delta_stderr", e.delta_stderr)?;
    d.set_item("trials", e.trials)?;
    d.set_item("seed", e.seed)?;
    d.set_item("resample_rate", e.resample_rate)?;
    Ok(d)
}

/// Expected test loss at dimension `d` using the first `d` coordinates.
#[pyfunction]
#[pyo3(signature = (law, d, n, eta=1.0, beta_mode="zero", rho=None, trials=20_000, seed=DEFAULT_SEED))]
#[allow(clippy::too_many_arguments)]
fn estimate_loss<'py>(
    py: Python<'py>,
    law: &PyLaw,
    d: usize,
    n: usize,
    eta: f64,
    beta_mode: &str,
    rho: Option<f64>,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let beta = beta_spec(beta_mode, rho)?;
    let est = py
        .detach(|| estimate_ld(&law.inner, d, n, eta, &beta, trials, seed))
        .map_err(value_err)?;
    estimate_dict(py, &est)
}

/// Paired estimate of `L(d+1) - L(d)`, the new coordinate drawn from the
/// single-coordinate law `new_law`.
#[pyfunction]
#[pyo3(signature = (law, d, n, new_law, eta=1.0, beta_mode="zero", rho=None, trials=20_000, seed=DEFAULT_SEED))]
#[allow(clippy::too_many_arguments)]
fn estimate_step<'py>(
    py: Python<'py>,
    law: &PyLaw,
    d: usize,
    n: usize,
    new_law: &PyLaw,
    eta: f64,
    beta_mode: &str,
    rho: Option<f64>,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let [next] = new_law.inner.laws() else {
        return Err(PyValueError::new_err("new_law must have exactly one coordinate"));
    };
    let beta = beta_spec(beta_mode, rho)?;
    let prefix = law.inner.prefix(d).map_err(value_err)?;
    let est = py
        .detach(|| estimate_delta(&prefix, d, n, next, eta, &beta, trials, seed))
        .map_err(value_err)?;
    delta_dict(py, &est)
}

/// Loss estimates for every `d` in `d_min..=d_max` except `d = n`.
#[pyfunction]
#[pyo3(signature = (law, n, d_min, d_max, eta=1.0, beta_mode="zero", rho=None, trials=20_000, seed=DEFAULT_SEED))]
#[allow(clippy::too_many_arguments)]
fn estimate_losses<'py>(
    py: Python<'py>,
    law: &PyLaw,
    n: usize,
    d_min: usize,
    d_max: usize,
    eta: f64,
    beta_mode: &str,
    rho: Option<f64>,
    trials: usize,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let beta = beta_spec(beta_mode, rho)?;
    let curve = py
        .detach(|| estimate_curve(&law.inner, n, d_min, d_max, eta, &beta, trials, seed))
        .map_err(value_err)?;
    curve.iter().map(|e| estimate_dict(py, e)).collect()
}

/// `(d, arrow, delta_mean, delta_stderr, verdict)`.
type StepRow = (usize, char, f64, f64, &'static str);

/// A designed curve: feature laws plus one certificate per designed step.
#[pyclass(name = "Plan", frozen)]
pub struct PyPlan {
    inner: CurvePlan,
}

#[pymethods]
impl PyPlan {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyPlan {
            inner: read_plan(text).map_err(value_err)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        write_plan(&self.inner, &[]).map_err(value_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn arrows(&self) -> String {
        self.inner.arrows().to_string()
    }

    #[getter]
    fn rho(&self) -> Option<f64> {
        self.inner.rho
    }

    #[getter]
    fn law(&self) -> PyLaw {
        PyLaw {
            inner: self.inner.laws.clone(),
        }
    }

    fn all_certified(&self) -> bool {
        self.inner.all_certified()
    }

    /// `(d, delta_mean, delta_stderr, trials, verdict)` per designed step.
    fn certificates(&self) -> Vec<(usize, f64, f64, usize, &'static str)> {
        self.inner
            .certification
            .iter()
            .map(|c| (c.d, c.delta_mean, c.delta_stderr, c.trials, c.verdict.name()))
            .collect()
    }

    /// Re-certifies every step on fresh draws; returns `(passed, steps)`.
    #[pyo3(signature = (trials=20_000, budget=1_280_000, seed=DEFAULT_SEED, underparam=false))]
    fn verify<'py>(
        &self,
        py: Python<'py>,
        trials: usize,
        budget: usize,
        seed: u64,
        underparam: bool,
    ) -> PyResult<(bool, Vec<StepRow>)> {
        let options = VerifyOptions {
            budget: SearchBudget {
                initial_trials: trials,
                max_trials: budget.max(trials),
                threshold: 3.0,
            },
            seed,
            include_underparam: underparam,
        };
        let report = py.detach(|| verify_plan(&self.inner, &options)).map_err(value_err)?;
        let steps = report
            .steps
            .iter()
            .map(|s| (s.d, s.arrow.as_char(), s.delta.delta_mean, s.delta.delta_stderr, s.verdict.name()))
            .collect();
        Ok((report.passed(), steps))
    }
}

/// Searches feature laws whose risk curve follows `arrows` (`u`/`d`) above n.
#[pyfunction]
#[pyo3(signature = (n, arrows, eta=1.0, beta_mode="zero", rho=None, trials=20_000, budget=1_280_000, seed=DEFAULT_SEED))]
#[allow(clippy::too_many_arguments)]
fn design(
    py: Python<'_>,
    n: usize,
    arrows: &str,
    eta: f64,
    beta_mode: &str,
    rho: Option<f64>,
    trials: usize,
    budget: usize,
    seed: u64,
) -> PyResult<PyPlan> {
    let arrows = ArrowSequence::parse(arrows).map_err(value_err)?;
    let mode = BetaMode::parse(beta_mode).ok_or_else(|| PyValueError::new_err(format!("unknown beta_mode {beta_mode:?}")))?;
    let budget = SearchBudget {
        initial_trials: trials,
        max_trials: budget.max(trials),
        threshold: 3.0,
    };
    let options = DesignOptions {
        base_len: None,
        fixed_rho: rho,
    };
    let plan = py
        .detach(|| design_curve_with(n, &arrows, eta, mode, &budget, seed, options))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(PyPlan { inner: plan })
}

/// Runs the built-in diagnostics; returns `(name, passed, line)` per check.
#[pyfunction]
#[pyo3(signature = (seed=DEFAULT_SEED))]
fn selftest(py: Python<'_>, seed: u64) -> PyResult<Vec<(&'static str, bool, String)>> {
    let checks = py.detach(|| run_selftest(seed, false)).map_err(value_err)?;
    Ok(checks.iter().map(|c| (c.name, c.passed, c.line())).collect())
}

#[pymodule]
fn multidescent_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLaw>()?;
    m.add_class::<PyPinv>()?;
    m.add_class::<PyPlan>()?;
    m.add_function(wrap_pyfunction!(estimate_loss, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_step, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_losses, m)?)?;
    m.add_function(wrap_pyfunction!(design, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add("DEFAULT_SEED", DEFAULT_SEED)?;
    Ok(())
}
