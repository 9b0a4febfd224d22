use ckn_lab::cli::{self, Command, RunConfig};
use ckn_lab::fields::{self, Codomain, FieldSpec, Point};
use ckn_lab::phase::{self, Setting};
use ckn_lab::quadrature::Budget;
use ckn_lab::search::{minimize_ratio, SearchProblem, SweepGrid};
use ckn_lab::sphere_ops;
use ckn_lab::sphere_stats;
use ckn_lab::TheoremId;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: ckn_lab::Error) -> PyErr {
    match e {
        ckn_lab::Error::SmallAmplitude { .. } | ckn_lab::Error::NonFiniteIntegrand { .. } => {
            PyArithmeticError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn point(x: Vec<f64>) -> PyResult<Point> {
    Point::new(x).map_err(err)
}

fn budget(radial_nodes: usize, angular_nodes: usize, refine_levels: usize) -> Budget {
    Budget { radial_nodes, angular_nodes, refine_levels, tolerance: None }
}

fn setting(name: &str) -> PyResult<Setting> {
    match name {
        "euclidean" => Ok(Setting::Euclidean),
        "sphere" => Ok(Setting::Sphere),
        other => Err(PyValueError::new_err(format!("unknown setting `{other}`"))),
    }
}

fn theorem(name: &str) -> PyResult<TheoremId> {
    name.parse().map_err(err)
}

/// A test function on `R^n` or on a sphere.
#[pyclass(name = "Field", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyField {
    inner: FieldSpec,
}

#[pymethods]
impl PyField {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        FieldSpec::from_json(text).map(|inner| PyField { inner }).map_err(err)
    }

    #[staticmethod]
    fn gaussian(n: usize, b: f64) -> PyResult<Self> {
        FieldSpec::gaussian(n, b).map(|inner| PyField { inner }).map_err(err)
    }

    #[staticmethod]
    fn chirped_gaussian(k: Vec<f64>, b: f64) -> PyResult<Self> {
        FieldSpec::chirped_gaussian(k, b).map(|inner| PyField { inner }).map_err(err)
    }

    #[staticmethod]
    fn radial_poly_gaussian(n: usize, a: f64, b: f64) -> PyResult<Self> {
        FieldSpec::radial_poly_gaussian(n, a, b).map(|inner| PyField { inner }).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn codomain(&self) -> String {
        match self.inner.codomain() {
            Codomain::Real => "real".into(),
            Codomain::Complex => "complex".into(),
            Codomain::Vector(m) => format!("vector({m})"),
        }
    }

    fn values(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.values(&x).map_err(err)
    }

    fn jet1<'py>(&self, py: Python<'py>, x: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &fields::eval_jet1(&self.inner, &point(x)?).map_err(err)?)
    }

    /// Value, gradient and Hessian (as nested lists) per component.
    fn jet2<'py>(&self, py: Python<'py>, x: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        let j = fields::eval_jet2(&self.inner, &point(x)?).map_err(err)?;
        let n = self.inner.dim();
        let hess: Vec<Vec<Vec<f64>>> =
            j.hess.iter().map(|h| (0..n).map(|i| (0..n).map(|k| h.get(i, k)).collect()).collect()).collect();
        to_py(py, &serde_json::json!({ "value": j.value, "grad": j.grad, "hess": hess }))
    }

    fn restrict_to_sphere(&self) -> PyResult<Self> {
        fields::restrict_to_sphere(&self.inner).map(|inner| PyField { inner }).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Field({})", self.inner.to_json())
    }
}

#[pyfunction]
fn gamma_coordinate(j: usize, k: usize, x: Vec<f64>) -> PyResult<f64> {
    sphere_ops::gamma_coordinate(j, k, &point(x)?).map_err(err)
}

/// Tangential gradient of each component at a point of the sphere.
#[pyfunction]
fn spherical_gradient(field: &PyField, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let t = sphere_ops::spherical_gradient(&field.inner, &point(x)?).map_err(err)?;
    Ok(t.into_iter().map(|v| v.components).collect())
}

#[pyfunction]
#[pyo3(signature = (field, x, setting = "euclidean"))]
fn phase_derivative<'py>(py: Python<'py>, field: &PyField, x: Vec<f64>, setting: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &phase::phase_derivative_direct(&field.inner, &point(x)?, self::setting(setting)?).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (field, x, setting = "euclidean"))]
fn amp_phase_split<'py>(py: Python<'py>, field: &PyField, x: Vec<f64>, setting: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &phase::amp_phase_split(&field.inner, &point(x)?, self::setting(setting)?).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (field, n, radial_nodes = 64, angular_nodes = 16, refine_levels = 1))]
fn compute_stats<'py>(
    py: Python<'py>,
    field: &PyField,
    n: usize,
    radial_nodes: usize,
    angular_nodes: usize,
    refine_levels: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let b = budget(radial_nodes, angular_nodes, refine_levels);
    let stats = py.detach(|| sphere_stats::compute_stats(&field.inner, n, &b)).map_err(err)?;
    to_py(py, &stats)
}

/// Checks one theorem; returns a report dict (a list of two for `sphere_vector`).
#[pyfunction]
#[pyo3(signature = (
    theorem, field, n, p = None, q = None, alpha = None, beta = None, gamma = None, r = None,
    radial_nodes = 64, angular_nodes = 16, refine_levels = 1
))]
#[allow(clippy::too_many_arguments)]
fn check<'py>(
    py: Python<'py>,
    theorem: &str,
    field: &PyField,
    n: usize,
    p: Option<f64>,
    q: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    r: Option<f64>,
    radial_nodes: usize,
    angular_nodes: usize,
    refine_levels: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = RunConfig::defaults(Command::Verify);
    cfg.theorem = Some(self::theorem(theorem)?);
    cfg.n = vec![n];
    cfg.p = p.into_iter().collect();
    cfg.q = q.into_iter().collect();
    (cfg.alpha, cfg.beta, cfg.gamma, cfg.r) = (alpha, beta, gamma, r);
    cfg.field = Some(field.inner.clone());
    cfg.budget = budget(radial_nodes, angular_nodes, refine_levels);
    let reports = py.detach(|| cli::verify_reports(&cfg)).map_err(err)?;
    match reports.as_slice() {
        [one] => to_py(py, one),
        many => to_py(py, &many),
    }
}

/// Minimizes lhs/rhs; `problem` is a JSON search problem.
#[pyfunction]
fn search<'py>(py: Python<'py>, problem: &str) -> PyResult<Bound<'py, PyAny>> {
    let problem: SearchProblem = serde_json::from_str(problem).map_err(|e| PyValueError::new_err(e.to_string()))?;
    problem.validate().map_err(err)?;
    let result = py.detach(|| minimize_ratio(&problem)).map_err(err)?;
    to_py(py, &result)
}

#[pyfunction]
#[pyo3(signature = (theorem, field, n, p, q, radial_nodes = 64, angular_nodes = 16, refine_levels = 1))]
#[allow(clippy::too_many_arguments)]
fn sweep<'py>(
    py: Python<'py>,
    theorem: &str,
    field: &PyField,
    n: Vec<usize>,
    p: Vec<f64>,
    q: Vec<f64>,
    radial_nodes: usize,
    angular_nodes: usize,
    refine_levels: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let id = self::theorem(theorem)?;
    let grid = SweepGrid { n, p, q };
    let b = budget(radial_nodes, angular_nodes, refine_levels);
    let rows = py.detach(|| ckn_lab::search::sweep(id, &grid, &field.inner, &b)).map_err(err)?;
    to_py(py, &rows)
}

#[pyfunction]
#[pyo3(signature = (n_max = 3, seed = 0))]
fn selftest<'py>(py: Python<'py>, n_max: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let report = py.detach(|| cli::selftest(n_max, seed, &Budget::default())).map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
fn ckn_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(gamma_coordinate, m)?)?;
    m.add_function(wrap_pyfunction!(spherical_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(phase_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(amp_phase_split, m)?)?;
    m.add_function(wrap_pyfunction!(compute_stats, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(search, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
