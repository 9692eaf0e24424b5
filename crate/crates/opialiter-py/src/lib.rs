//! Python bindings: points, domains, operators, the three iteration
//! engines, and the tail-windowed diagnostics. Verdicts cross the boundary
//! as plain dicts (`status`, `threshold`, `witnesses`) so Python callers can
//! assert on them without extra types.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use opialiter::diagnostics::{self, Status, TailWindow, Verdict};
use opialiter::domains::ConvexDomain;
use opialiter::engines::{self, EpsSchedule, StopReason, Trace};
use opialiter::error::Error;
use opialiter::operators::Operator;
use opialiter::space::{self, Point};

fn err_to_py(e: Error) -> PyErr {
    // Validation and parse problems are the caller's; the rest are runtime.
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn status_str(status: Status) -> &'static str {
    match status {
        Status::Holds => "holds",
        Status::Fails => "fails",
        Status::NotTriggered => "not_triggered",
        Status::Inconclusive => "inconclusive",
    }
}

fn verdict_dict(py: Python<'_>, v: &Verdict) -> PyResult<Py<PyDict>> {
    let d = PyDict::new(py);
    d.set_item("status", status_str(v.status))?;
    d.set_item("threshold", v.threshold)?;
    let w = PyDict::new(py);
    for wit in &v.witnesses {
        w.set_item(&wit.name, wit.value)?;
    }
    d.set_item("witnesses", w)?;
    Ok(d.unbind())
}

fn window_or_default(window: Option<(usize, usize)>, len: usize) -> PyResult<TailWindow> {
    match window {
        Some((burn_in, size)) => TailWindow::new(burn_in, size).map_err(err_to_py),
        None => TailWindow::default_for(len).map_err(err_to_py),
    }
}

/// Accepts a dense list `[x0, x1, ...]` or a sparse `{index: coeff}` dict.
#[derive(FromPyObject)]
enum CoordsInput {
    Dense(Vec<f64>),
    Sparse(BTreeMap<u64, f64>),
}

#[pyclass(name = "Point", module = "opialiter_py", from_py_object)]
#[derive(Clone)]
struct PyPoint {
    inner: Point,
}

#[pymethods]
impl PyPoint {
    #[new]
    fn new(values: CoordsInput) -> PyResult<Self> {
        let inner = match values {
            CoordsInput::Dense(v) => {
                if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                    return Err(PyValueError::new_err(format!("nonfinite coefficient {bad}")));
                }
                Point::dense(&v)
            }
            CoordsInput::Sparse(m) => Point::from_coords(m, None).map_err(err_to_py)?,
        };
        Ok(PyPoint { inner })
    }

    #[staticmethod]
    fn basis(index: u64) -> Self {
        PyPoint { inner: Point::basis(index) }
    }

    #[staticmethod]
    #[pyo3(signature = (dim = None))]
    fn zero(dim: Option<usize>) -> Self {
        let inner = match dim {
            Some(d) => Point::zero_dense(d),
            None => Point::zero(),
        };
        PyPoint { inner }
    }

    fn coords(&self) -> BTreeMap<u64, f64> {
        self.inner.coords().clone()
    }

    fn dim(&self) -> Option<usize> {
        self.inner.dim()
    }

    fn get(&self, index: u64) -> f64 {
        self.inner.get(index)
    }

    fn norm(&self) -> f64 {
        self.inner.norm()
    }

    fn norm_sq(&self) -> f64 {
        self.inner.norm_sq()
    }

    fn distance(&self, other: &PyPoint) -> f64 {
        self.inner.distance(&other.inner)
    }

    fn scale(&self, a: f64) -> Self {
        PyPoint { inner: self.inner.scale(a) }
    }

    fn __eq__(&self, other: &PyPoint) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Point({:?}, dim={:?})", self.inner.coords(), self.inner.dim())
    }
}

#[pyfunction]
fn combine(a: f64, x: &PyPoint, b: f64, y: &PyPoint) -> PyResult<PyPoint> {
    space::combine(a, &x.inner, b, &y.inner)
        .map(|inner| PyPoint { inner })
        .map_err(err_to_py)
}

#[pyfunction]
fn inner_product(x: &PyPoint, y: &PyPoint) -> f64 {
    space::inner_product(&x.inner, &y.inner)
}

#[pyclass(name = "Domain", module = "opialiter_py", skip_from_py_object)]
#[derive(Clone)]
struct PyDomain {
    inner: ConvexDomain,
}

#[pymethods]
impl PyDomain {
    #[staticmethod]
    fn ball(center: &PyPoint, radius: f64) -> PyResult<Self> {
        ConvexDomain::ball(center.inner.clone(), radius)
            .map(|inner| PyDomain { inner })
            .map_err(err_to_py)
    }

    #[staticmethod]
    #[pyo3(name = "box")]
    fn box_(lower: &PyPoint, upper: &PyPoint, dim: usize) -> PyResult<Self> {
        ConvexDomain::boxed(lower.inner.clone(), upper.inner.clone(), dim)
            .map(|inner| PyDomain { inner })
            .map_err(err_to_py)
    }

    #[staticmethod]
    fn simplex(dim: usize) -> PyResult<Self> {
        ConvexDomain::simplex(dim).map(|inner| PyDomain { inner }).map_err(err_to_py)
    }

    #[staticmethod]
    fn sparse(radius_bound: f64) -> PyResult<Self> {
        ConvexDomain::sparse(radius_bound).map(|inner| PyDomain { inner }).map_err(err_to_py)
    }

    fn kind(&self) -> &'static str {
        self.inner.kind_name()
    }

    fn diameter(&self) -> f64 {
        self.inner.diameter()
    }

    fn center(&self) -> PyPoint {
        PyPoint { inner: self.inner.center() }
    }

    #[pyo3(signature = (x, tol = 1e-9))]
    fn contains(&self, x: &PyPoint, tol: f64) -> bool {
        self.inner.contains(&x.inner, tol)
    }

    fn distance_to(&self, x: &PyPoint) -> f64 {
        self.inner.distance_to(&x.inner)
    }

    fn project(&self, x: &PyPoint) -> PyResult<PyPoint> {
        self.inner.project(&x.inner).map(|inner| PyPoint { inner }).map_err(err_to_py)
    }

    fn sample(&self, seed: u64) -> PyResult<PyPoint> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        self.inner.sample(&mut rng).map(|inner| PyPoint { inner }).map_err(err_to_py)
    }

    fn __repr__(&self) -> String {
        format!("Domain({})", self.inner.kind_name())
    }
}

#[pyclass(name = "Operator", module = "opialiter_py", skip_from_py_object)]
#[derive(Clone)]
struct PyOperator {
    inner: Operator,
}

#[pymethods]
impl PyOperator {
    #[staticmethod]
    fn identity() -> Self {
        PyOperator { inner: Operator::identity() }
    }

    #[staticmethod]
    fn rotation(theta: f64) -> PyResult<Self> {
        Operator::rotation(theta).map(|inner| PyOperator { inner }).map_err(err_to_py)
    }

    #[staticmethod]
    fn affine(scale: f64, shift: &PyPoint) -> PyResult<Self> {
        Operator::affine_scale(scale, shift.inner.clone())
            .map(|inner| PyOperator { inner })
            .map_err(err_to_py)
    }

    #[staticmethod]
    fn half_radial() -> Self {
        PyOperator { inner: Operator::half_radial() }
    }

    #[staticmethod]
    fn scaling(factor: f64) -> PyResult<Self> {
        Operator::scaling(factor).map(|inner| PyOperator { inner }).map_err(err_to_py)
    }

    #[staticmethod]
    fn projection(domain: &PyDomain) -> PyResult<Self> {
        Operator::projection(domain.inner.clone())
            .map(|inner| PyOperator { inner })
            .map_err(err_to_py)
    }

    #[staticmethod]
    fn averaged(op: &PyOperator, alpha: f64) -> PyResult<Self> {
        Operator::averaged(op.inner.clone(), alpha)
            .map(|inner| PyOperator { inner })
            .map_err(err_to_py)
    }

    fn __call__(&self, x: &PyPoint) -> PyResult<PyPoint> {
        self.inner.evaluate(&x.inner).map(|inner| PyPoint { inner }).map_err(err_to_py)
    }

    fn lipschitz(&self) -> Option<f64> {
        self.inner.lipschitz()
    }

    fn is_nonexpansive(&self) -> bool {
        self.inner.is_nonexpansive()
    }

    fn fixed_points(&self) -> Vec<PyPoint> {
        self.inner.known_fixed_points().iter().map(|p| PyPoint { inner: p.clone() }).collect()
    }

    fn __repr__(&self) -> String {
        format!("Operator({})", self.inner.describe())
    }
}

#[pyclass(name = "Trace", module = "opialiter_py")]
struct PyTrace {
    inner: Trace,
}

#[pymethods]
impl PyTrace {
    fn points(&self) -> Vec<PyPoint> {
        self.inner.points().iter().map(|p| PyPoint { inner: p.clone() }).collect()
    }

    fn images(&self) -> Vec<PyPoint> {
        self.inner.images().iter().map(|p| PyPoint { inner: p.clone() }).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn final_point(&self) -> PyPoint {
        PyPoint { inner: self.inner.final_point().clone() }
    }

    fn final_residual(&self) -> f64 {
        self.inner.final_residual()
    }

    fn stop_reason(&self) -> &'static str {
        match self.inner.stop_reason() {
            StopReason::Tolerance => "tolerance",
            StopReason::MaxIter => "max_iter",
            StopReason::External => "external",
        }
    }

    /// Residual norms `|f(x_n) - x_n|` along the trace.
    fn residuals(&self) -> Vec<f64> {
        diagnostics::residual_profile(&self.inner)
    }

    /// Step norms `|x_{n+1} - x_n|`.
    fn steps(&self) -> PyResult<Vec<f64>> {
        diagnostics::ar_profile(self.inner.points()).map_err(err_to_py)
    }

    #[pyo3(signature = (delta, d_m, tol = 1e-12, window = None))]
    fn flat_check(
        &self,
        py: Python<'_>,
        delta: f64,
        d_m: f64,
        tol: f64,
        window: Option<(usize, usize)>,
    ) -> PyResult<Py<PyDict>> {
        let w = window_or_default(window, self.inner.len() - 1)?;
        let v = diagnostics::flat_check(&self.inner, delta, d_m, w, tol).map_err(err_to_py)?;
        verdict_dict(py, &v)
    }

    fn __repr__(&self) -> String {
        format!("Trace(len={}, stop={})", self.inner.len(), self.stop_reason())
    }
}

#[pyfunction]
#[pyo3(signature = (op, x0, domain, max_iter, stop_tol = 0.0))]
fn picard(
    op: &PyOperator,
    x0: &PyPoint,
    domain: &PyDomain,
    max_iter: usize,
    stop_tol: f64,
) -> PyResult<PyTrace> {
    engines::picard_run(&op.inner, &x0.inner, &domain.inner, max_iter, stop_tol)
        .map(|inner| PyTrace { inner })
        .map_err(err_to_py)
}

#[pyfunction]
#[pyo3(signature = (op, tau, x0, domain, max_iter, stop_tol = 0.0))]
fn mann(
    op: &PyOperator,
    tau: f64,
    x0: &PyPoint,
    domain: &PyDomain,
    max_iter: usize,
    stop_tol: f64,
) -> PyResult<PyTrace> {
    engines::mann_run(&op.inner, tau, &x0.inner, &domain.inner, max_iter, stop_tol)
        .map(|inner| PyTrace { inner })
        .map_err(err_to_py)
}

/// Stagewise anchored iteration. Returns the per-stage `(point, residual)`
/// list and the residual-bound verdict.
#[pyfunction]
#[pyo3(signature = (op, anchor, domain, eps0, rho, count, inner_max = 100_000, inner_tol = 1e-12))]
#[allow(clippy::too_many_arguments)]
fn regularized(
    py: Python<'_>,
    op: &PyOperator,
    anchor: &PyPoint,
    domain: &PyDomain,
    eps0: f64,
    rho: f64,
    count: usize,
    inner_max: usize,
    inner_tol: f64,
) -> PyResult<(Vec<(PyPoint, f64)>, Py<PyDict>)> {
    let schedule = EpsSchedule::geometric(eps0, rho, count).map_err(err_to_py)?;
    let (stages, verdict) =
        engines::regularized_solve(&op.inner, &anchor.inner, &domain.inner, schedule, inner_max, inner_tol)
            .map_err(err_to_py)?;
    let stages = stages.into_iter().map(|(p, r)| (PyPoint { inner: p }, r)).collect();
    Ok((stages, verdict_dict(py, &verdict)?))
}

fn unwrap_points(points: &[PyPoint]) -> Vec<Point> {
    points.iter().map(|p| p.inner.clone()).collect()
}

#[pyfunction]
#[pyo3(signature = (points, tol = 1e-8, window = None))]
fn ar_check(
    py: Python<'_>,
    points: Vec<PyPoint>,
    tol: f64,
    window: Option<(usize, usize)>,
) -> PyResult<Py<PyDict>> {
    let pts = unwrap_points(&points);
    let w = window_or_default(window, pts.len().saturating_sub(1))?;
    let v = diagnostics::ar_check(&pts, w, tol).map_err(err_to_py)?;
    verdict_dict(py, &v)
}

#[pyfunction]
#[pyo3(signature = (points, z, tol = 1e-9, window = None))]
fn lambda_membership(
    py: Python<'_>,
    points: Vec<PyPoint>,
    z: &PyPoint,
    tol: f64,
    window: Option<(usize, usize)>,
) -> PyResult<Py<PyDict>> {
    let pts = unwrap_points(&points);
    let w = window_or_default(window, pts.len())?;
    let v = diagnostics::lambda_membership(&pts, &z.inner, w, tol).map_err(err_to_py)?;
    verdict_dict(py, &v)
}

#[pyfunction]
#[pyo3(signature = (points, z, lambda_tol = 1e-9, window = None))]
fn psi_estimate(
    points: Vec<PyPoint>,
    z: &PyPoint,
    lambda_tol: f64,
    window: Option<(usize, usize)>,
) -> PyResult<f64> {
    let pts = unwrap_points(&points);
    let w = window_or_default(window, pts.len())?;
    diagnostics::psi_estimate(&pts, &z.inner, w, lambda_tol).map_err(err_to_py)
}

#[pyfunction]
#[pyo3(signature = (points, limit, probes, margin = 1e-9, lambda_tol = 1e-9, window = None))]
fn opial_probe(
    py: Python<'_>,
    points: Vec<PyPoint>,
    limit: &PyPoint,
    probes: Vec<PyPoint>,
    margin: f64,
    lambda_tol: f64,
    window: Option<(usize, usize)>,
) -> PyResult<Py<PyDict>> {
    let pts = unwrap_points(&points);
    let pr = unwrap_points(&probes);
    let w = window_or_default(window, pts.len())?;
    let v = diagnostics::opial_probe(&pts, &limit.inner, &pr, w, margin, lambda_tol)
        .map_err(err_to_py)?;
    verdict_dict(py, &v)
}

#[pyfunction]
#[pyo3(signature = (points, y, eta = None, tol = 1e-12))]
fn fejer_monitor(
    py: Python<'_>,
    points: Vec<PyPoint>,
    y: &PyPoint,
    eta: Option<Vec<f64>>,
    tol: f64,
) -> PyResult<Py<PyDict>> {
    let pts = unwrap_points(&points);
    let eta = eta.unwrap_or_default();
    let v = diagnostics::fejer_monitor(&pts, &y.inner, &eta, tol).map_err(err_to_py)?;
    verdict_dict(py, &v)
}

#[pyfunction]
#[pyo3(signature = (op, points, y, tol = 1e-9, window = None))]
fn sharp_check(
    py: Python<'_>,
    op: &PyOperator,
    points: Vec<PyPoint>,
    y: &PyPoint,
    tol: f64,
    window: Option<(usize, usize)>,
) -> PyResult<Py<PyDict>> {
    let pts = unwrap_points(&points);
    let w = window_or_default(window, pts.len())?;
    let v = diagnostics::sharp_check(&op.inner, &pts, &y.inner, w, tol).map_err(err_to_py)?;
    verdict_dict(py, &v)
}

#[pymodule]
fn opialiter_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPoint>()?;
    m.add_class::<PyDomain>()?;
    m.add_class::<PyOperator>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(combine, m)?)?;
    m.add_function(wrap_pyfunction!(inner_product, m)?)?;
    m.add_function(wrap_pyfunction!(picard, m)?)?;
    m.add_function(wrap_pyfunction!(mann, m)?)?;
    m.add_function(wrap_pyfunction!(regularized, m)?)?;
    m.add_function(wrap_pyfunction!(ar_check, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_membership, m)?)?;
    m.add_function(wrap_pyfunction!(psi_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(opial_probe, m)?)?;
    m.add_function(wrap_pyfunction!(fejer_monitor, m)?)?;
    m.add_function(wrap_pyfunction!(sharp_check, m)?)?;
    Ok(())
}
