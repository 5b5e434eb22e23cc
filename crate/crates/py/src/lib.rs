//! Python bindings.
//!
//! Instances are wrapped in small classes; solver results come back as plain
//! dicts and lists (converted through JSON, so field names match the Rust
//! structs and the CLI output).

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use fppe::concave::{self, ConcaveMarket};
use fppe::fppe::{self as eq, FppeOptions, FppeOutcome, Init};
use fppe::harness::{self, SuiteConfig};
use fppe::online::{self, OnlineInstance};
use fppe::reduction::{self, DegreeRule, ReducedMarket, ThreeDTwoMatchingInstance};
use fppe::rmfup;
use fppe::{MarketInstance, Outcome, EQ_TOL};

create_exception!(fppe_py, FppeError, PyRuntimeError, "A solver or certificate failed.");

fn err(e: fppe::Error) -> PyErr {
    use fppe::Error::*;
    match e {
        Invalid(_) | Dimension(_) | Json(_) => PyValueError::new_err(e.to_string()),
        _ => FppeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize + ?Sized>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| err(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| err(e.into()))
}

fn json_text<T: Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| err(e.into()))
}

/// A static market: budgets and linear valuations over unit-supply goods.
#[pyclass(name = "Market", frozen, module = "fppe_py")]
struct PyMarket {
    inner: MarketInstance,
}

#[pymethods]
impl PyMarket {
    #[new]
    fn new(budgets: Vec<f64>, values: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self { inner: MarketInstance::new(budgets, values).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(text).map_err(|e| err(e.into()))? })
    }

    fn to_json(&self) -> PyResult<String> {
        json_text(&self.inner)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn budgets(&self) -> Vec<f64> {
        self.inner.budgets().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<Vec<f64>> {
        self.inner.values().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Market(n={}, m={})", self.inner.n(), self.inner.m())
    }
}

/// Buyers with activity windows over `T` rounds of the same goods.
#[pyclass(name = "OnlineInstance", frozen, module = "fppe_py")]
struct PyOnline {
    inner: OnlineInstance,
}

#[pymethods]
impl PyOnline {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(text).map_err(|e| err(e.into()))? })
    }

    fn to_json(&self) -> PyResult<String> {
        json_text(&self.inner)
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    /// The offline market with one good per round and good.
    fn flatten(&self) -> PyResult<PyMarket> {
        Ok(PyMarket { inner: online::flatten_offline(&self.inner).map_err(err)? })
    }
}

/// A market with concave valuations (`linear`, `shifted_power` or `pwl`).
#[pyclass(name = "ConcaveMarket", frozen, module = "fppe_py")]
struct PyConcave {
    inner: ConcaveMarket,
}

#[pymethods]
impl PyConcave {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(text).map_err(|e| err(e.into()))? })
    }

    #[staticmethod]
    fn linear(market: &PyMarket) -> Self {
        Self { inner: ConcaveMarket::linear(&market.inner) }
    }

    fn to_json(&self) -> PyResult<String> {
        json_text(&self.inner)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }
}

/// A 3D-2-matching instance given as JSON with keys `E1`, `E2`, `E3`, `S`.
#[pyclass(name = "Matching3D", frozen, module = "fppe_py")]
struct PyMatching {
    inner: ThreeDTwoMatchingInstance,
}

#[pymethods]
impl PyMatching {
    /// `relaxed` admits elements that lie in fewer than two triplets.
    #[staticmethod]
    #[pyo3(signature = (text, relaxed = false))]
    fn from_json(text: &str, relaxed: bool) -> PyResult<Self> {
        let rule = if relaxed { DegreeRule::AtMostTwo } else { DegreeRule::ExactlyTwo };
        Ok(Self { inner: ThreeDTwoMatchingInstance::from_json(text, rule).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn num_triplets(&self) -> usize {
        self.inner.num_triplets()
    }

    /// Indices of a largest matching.
    fn max_matching(&self) -> PyResult<Vec<usize>> {
        reduction::brute_force_3d2m(&self.inner).map_err(err)
    }

    /// The fixed-price market built from this instance.
    fn reduce(&self) -> PyResult<PyMarket> {
        Ok(PyMarket { inner: reduction::to_rmfup_instance(&self.inner).map_err(err)?.instance })
    }
}

#[pyfunction]
#[pyo3(signature = (market, tol = EQ_TOL, seed = None))]
fn solve_fppe<'py>(py: Python<'py>, market: &PyMarket, tol: f64, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
    let init = seed.map_or(Init::Uniform, Init::Seeded);
    let out = eq::solve_fppe_with(&market.inner, &FppeOptions { tol, init, ..FppeOptions::default() }).map_err(err)?;
    to_py(py, &out)
}

/// The six equilibrium residuals of a candidate `(x, p, alpha)`.
#[pyfunction]
fn verify_fppe(market: &PyMarket, x: Vec<Vec<f64>>, p: Vec<f64>, alpha: Vec<f64>) -> Vec<f64> {
    eq::verify_fppe(&market.inner, &FppeOutcome::from_parts(x, p, alpha)).to_vec()
}

#[pyfunction]
fn fppe_revenue_certificate<'py>(py: Python<'py>, market: &PyMarket) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &eq::fppe_revenue_certificate(&market.inner).map_err(err)?)
}

#[pyfunction]
fn solve_rmvup<'py>(py: Python<'py>, market: &PyMarket) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &fppe::rmvup::solve_rmvup(&market.inner).map_err(err)?)
}

/// `method` is `"enumerate"`, `"single"` or `"grid"` (with step `delta`).
#[pyfunction]
#[pyo3(signature = (market, method = "enumerate", delta = 0.01))]
fn solve_rmfup<'py>(py: Python<'py>, market: &PyMarket, method: &str, delta: f64) -> PyResult<Bound<'py, PyAny>> {
    let inst = &market.inner;
    let sol = match method {
        "single" => rmfup::solve_rmfup_single_good(inst),
        "grid" => rmfup::solve_rmfup_heuristic(inst, delta),
        "enumerate" => {
            let levels: Vec<Vec<f64>> = (0..inst.m()).map(|j| rmfup::price_levels(inst, j)).collect();
            rmfup::solve_rmfup_enumerate(inst, &levels, rmfup::ENUMERATION_CAP)
        }
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    };
    to_py(py, &sol.map_err(err)?)
}

#[pyfunction]
fn run_online<'py>(py: Python<'py>, instance: &PyOnline) -> PyResult<Bound<'py, PyAny>> {
    let trace = online::run_online_fppe(&instance.inner).map_err(err)?;
    online::check_trace(&instance.inner, &trace).map_err(err)?;
    to_py(py, &trace)
}

#[pyfunction]
fn competitive_ratio<'py>(py: Python<'py>, instance: &PyOnline) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &online::competitive_ratio(&instance.inner).map_err(err)?)
}

#[pyfunction]
fn comparison_checks<'py>(py: Python<'py>, instance: &PyOnline) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &online::comparison_checks(&instance.inner).map_err(err)?)
}

/// The adversary's branch for a given round-1 share, or the result of
/// playing the online algorithm against it.
#[pyfunction]
#[pyo3(signature = (fraction = None))]
fn adversary<'py>(py: Python<'py>, fraction: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let h = harness::gen_adversarial_online();
    match fraction {
        Some(f) => to_py(py, &h.branch(f).map_err(err)?),
        None => to_py(py, &h.play().map_err(err)?),
    }
}

#[pyfunction]
fn lower_bound_family(n: usize) -> PyResult<PyMarket> {
    Ok(PyMarket { inner: harness::gen_lower_bound_family(n).map_err(err)? })
}

fn reduced(market: &PyMarket) -> PyResult<ReducedMarket> {
    ReducedMarket::recognize(&market.inner).map_err(err)
}

/// Rounds a fixed-price solution (a dict with `x`, `b`, `p`) to normal form.
#[pyfunction]
fn round_solution<'py>(py: Python<'py>, market: &PyMarket, solution: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let sol: Outcome = from_py(solution)?;
    to_py(py, &reduction::round_solution(&reduced(market)?, &sol).map_err(err)?)
}

#[pyfunction]
fn extract_matching(market: &PyMarket, solution: &Bound<'_, PyAny>) -> PyResult<Vec<usize>> {
    let sol: Outcome = from_py(solution)?;
    reduction::extract_matching(&reduced(market)?, &sol).map_err(err)
}

#[pyfunction]
fn check_transfer<'py>(py: Python<'py>, instance: &PyMatching, rho: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &reduction::approximation_transfer_check(&instance.inner, rho).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (market, tol = EQ_TOL))]
fn solve_concave_eg<'py>(py: Python<'py>, market: &PyConcave, tol: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &concave::solve_concave_eg(&market.inner, tol).map_err(err)?)
}

#[pyfunction]
fn concave_revenue_certificate<'py>(py: Python<'py>, market: &PyConcave) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &concave::concave_revenue_certificate(&market.inner).map_err(err)?)
}

#[pyfunction]
fn rho_general(market: &PyConcave) -> PyResult<f64> {
    concave::rho_general(&market.inner).map_err(err)
}

/// Runs a suite and returns its CSV (with header). `config` is a dict with
/// the same keys as the CLI's suite configuration file.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn run_suite(config: Option<&Bound<'_, PyAny>>) -> PyResult<String> {
    let cfg: SuiteConfig = match config {
        Some(c) => from_py(c)?,
        None => SuiteConfig::default(),
    };
    let report = harness::run_suite(&cfg).map_err(err)?;
    let mut out = Vec::new();
    report.write_csv(&mut out, true).map_err(err)?;
    String::from_utf8(out).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
pub fn fppe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FppeError", m.py().get_type::<FppeError>())?;
    m.add("EQ_TOL", EQ_TOL)?;
    m.add_class::<PyMarket>()?;
    m.add_class::<PyOnline>()?;
    m.add_class::<PyConcave>()?;
    m.add_class::<PyMatching>()?;
    m.add_function(wrap_pyfunction!(solve_fppe, m)?)?;
    m.add_function(wrap_pyfunction!(verify_fppe, m)?)?;
    m.add_function(wrap_pyfunction!(fppe_revenue_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(solve_rmvup, m)?)?;
    m.add_function(wrap_pyfunction!(solve_rmfup, m)?)?;
    m.add_function(wrap_pyfunction!(run_online, m)?)?;
    m.add_function(wrap_pyfunction!(competitive_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(comparison_checks, m)?)?;
    m.add_function(wrap_pyfunction!(adversary, m)?)?;
    m.add_function(wrap_pyfunction!(lower_bound_family, m)?)?;
    m.add_function(wrap_pyfunction!(round_solution, m)?)?;
    m.add_function(wrap_pyfunction!(extract_matching, m)?)?;
    m.add_function(wrap_pyfunction!(check_transfer, m)?)?;
    m.add_function(wrap_pyfunction!(solve_concave_eg, m)?)?;
    m.add_function(wrap_pyfunction!(concave_revenue_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(rho_general, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
