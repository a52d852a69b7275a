//! Python module `multichaos`: the torus-map type plus the analysis routines.
//! Structured results come back as plain dicts and lists.

use multichaos::circle::{self, RotationMethod, SweepOptions};
use multichaos::conjugacy;
use multichaos::orbits::{self, ManifoldOptions};
use multichaos::{mapfile, udv, ConeParams, Error, FourierPerturbation, FourierTerm, IntegerMatrix, TorusPoint};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

fn err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn value_to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any().unbind()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any().unbind()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind()
            }
        }
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(a) => {
            let items = a.iter().map(|x| value_to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any().unbind()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, value_to_py(py, x)?)?;
            }
            d.into_any().unbind()
        }
    })
}

fn to_py<T: Serialize>(py: Python<'_>, x: &T) -> PyResult<Py<PyAny>> {
    let v = serde_json::to_value(x).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    value_to_py(py, &v)
}

fn point(p: (f64, f64)) -> TorusPoint {
    TorusPoint::new(p.0, p.1)
}

/// `F(z) = M z + G(z) mod 1` with integer `M` and a trigonometric `G`.
///
/// `terms` holds `(freq, coeff, phase)` triples, each contributing
/// `coeff * sin(2 pi freq . z + phase)`.
#[pyclass(name = "TorusMap", module = "multichaos", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTorusMap {
    inner: multichaos::TorusMap,
}

#[pymethods]
impl PyTorusMap {
    #[new]
    #[pyo3(signature = (matrix, terms = Vec::new(), t = 0.0, drift = (0.0, 1.0)))]
    fn new(
        matrix: [[i64; 2]; 2],
        terms: Vec<((i64, i64), (f64, f64), f64)>,
        t: f64,
        drift: (f64, f64),
    ) -> PyResult<Self> {
        let m = IntegerMatrix::new(matrix).map_err(err)?;
        let terms = terms
            .into_iter()
            .map(|(f, c, phase)| FourierTerm {
                freq: [f.0, f.1],
                coeff: [c.0, c.1],
                phase,
            })
            .collect();
        let g = FourierPerturbation::new(terms, t, [drift.0, drift.1]);
        Ok(Self {
            inner: multichaos::TorusMap::new(m, g),
        })
    }

    /// `(x, y) -> (3x, x + y + t + eps sin 2 pi y)`.
    #[staticmethod]
    #[pyo3(signature = (t = 0.0, eps = 0.05))]
    fn reference(t: f64, eps: f64) -> Self {
        Self {
            inner: multichaos::TorusMap::reference(t, eps),
        }
    }

    /// Parses the INI-style map file format.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        let f = mapfile::parse(text).map_err(err)?;
        Ok(Self { inner: f.map })
    }

    fn to_text(&self) -> String {
        mapfile::to_string(&self.inner)
    }

    fn with_t(&self, t: f64) -> Self {
        Self {
            inner: self.inner.with_t(t),
        }
    }

    #[getter]
    fn matrix(&self) -> [[i64; 2]; 2] {
        self.inner.matrix().entries()
    }

    #[getter]
    fn t(&self) -> f64 {
        self.inner.perturbation().t()
    }

    fn is_skew(&self) -> bool {
        self.inner.is_skew()
    }

    fn __call__(&self, x: f64, y: f64) -> (f64, f64) {
        let p = self.inner.eval(&TorusPoint::new(x, y));
        (p.x(), p.y())
    }

    fn jacobian(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        let j = self.inner.jacobian(&TorusPoint::new(x, y));
        [[j[(0, 0)], j[(0, 1)]], [j[(1, 0)], j[(1, 1)]]]
    }

    /// The first `n` points of the orbit of `(x, y)`, starting with the point itself.
    fn orbit(&self, x: f64, y: f64, n: usize) -> Vec<(f64, f64)> {
        self.inner
            .orbit(&TorusPoint::new(x, y), n)
            .iter()
            .map(|p| (p.x(), p.y()))
            .collect()
    }

    fn __repr__(&self) -> String {
        let e = self.inner.matrix().entries();
        format!(
            "TorusMap(matrix={:?}, terms={}, t={})",
            e,
            self.inner.perturbation().terms().len(),
            self.inner.perturbation().t()
        )
    }
}

#[pyclass(name = "PeriodicOrbit", module = "multichaos", frozen)]
struct PyPeriodicOrbit {
    inner: orbits::PeriodicOrbit,
}

#[pymethods]
impl PyPeriodicOrbit {
    #[getter]
    fn points(&self) -> Vec<(f64, f64)> {
        self.inner.points.iter().map(|p| (p.x(), p.y())).collect()
    }

    #[getter]
    fn period(&self) -> usize {
        self.inner.period
    }

    #[getter]
    fn kind(&self) -> String {
        format!("{:?}", self.inner.class)
    }

    #[getter]
    fn multipliers(&self) -> Vec<(f64, f64)> {
        self.inner.multipliers.iter().map(|z| (z.re, z.im)).collect()
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.inner.residual
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("PeriodicOrbit(period={}, kind={:?})", self.inner.period, self.inner.class)
    }
}

/// Bidirectional conjugacy between the torus map and its linear part.
#[pyclass(name = "ConjugacyMap", module = "multichaos", frozen)]
struct PyConjugacyMap {
    inner: conjugacy::ConjugacyMap,
}

#[pymethods]
impl PyConjugacyMap {
    #[new]
    #[pyo3(signature = (map, tol = 1e-10))]
    fn new(map: &PyTorusMap, tol: f64) -> PyResult<Self> {
        Ok(Self {
            inner: conjugacy::ConjugacyMap::new(&map.inner, tol).map_err(err)?,
        })
    }

    fn forward(&self, x: f64, y: f64) -> (f64, f64) {
        let p = self.inner.forward(&TorusPoint::new(x, y));
        (p.x(), p.y())
    }

    fn inverse(&self, x: f64, y: f64) -> PyResult<(f64, f64)> {
        let p = self.inner.inverse(&TorusPoint::new(x, y)).map_err(err)?;
        Ok((p.x(), p.y()))
    }
}

#[pyfunction]
fn eigen_data(py: Python<'_>, map: &PyTorusMap) -> PyResult<Py<PyAny>> {
    let s = multichaos::eigen_data(map.inner.matrix()).map_err(err)?;
    to_py(py, &s)
}

#[pyfunction]
#[pyo3(signature = (map, k = 2.0, alpha = 1.0, grid_n = 200, boundary_samples = 16))]
fn cone_verify(
    py: Python<'_>,
    map: &PyTorusMap,
    k: f64,
    alpha: f64,
    grid_n: usize,
    boundary_samples: usize,
) -> PyResult<Py<PyAny>> {
    let s = multichaos::eigen_data(map.inner.matrix()).map_err(err)?;
    let cone = ConeParams::new(&s, k, alpha).map_err(err)?;
    let r = py
        .detach(|| multichaos::cone_verify(&map.inner, &cone, grid_n, boundary_samples))
        .map_err(err)?;
    to_py(py, &r)
}

/// Semi-conjugacy coordinate `Phi(x, y)` on the circle.
#[pyfunction]
#[pyo3(signature = (map, x, y, tol = 1e-10))]
fn phi(map: &PyTorusMap, x: f64, y: f64, tol: f64) -> PyResult<f64> {
    conjugacy::phi(&map.inner, &TorusPoint::new(x, y), tol).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (map, samples = 1000, tol = 1e-10, seed = circle::DEFAULT_SEED))]
fn factoring_residual(py: Python<'_>, map: &PyTorusMap, samples: usize, tol: f64, seed: u64) -> PyResult<f64> {
    py.detach(|| conjugacy::factoring_residual(&map.inner, samples, tol, seed))
        .map_err(err)
}

/// Points of the level set `Phi = theta`, as a dict with `theta` and `points`.
#[pyfunction]
#[pyo3(signature = (map, theta, n_points = 256))]
fn fiber_trace(py: Python<'_>, map: &PyTorusMap, theta: f64, n_points: usize) -> PyResult<Py<PyAny>> {
    let f = py
        .detach(|| conjugacy::fiber_trace(&map.inner, theta, n_points))
        .map_err(err)?;
    to_py(py, &f)
}

#[pyfunction]
#[pyo3(signature = (map, period = 1, seed_grid = 16))]
fn find_periodic(py: Python<'_>, map: &PyTorusMap, period: usize, seed_grid: usize) -> PyResult<Vec<PyPeriodicOrbit>> {
    let found = py
        .detach(|| orbits::find_periodic(&map.inner, period, seed_grid))
        .map_err(err)?;
    Ok(found.into_iter().map(|inner| PyPeriodicOrbit { inner }).collect())
}

/// Base points `x` of the period-`n` vertical circles of a skew map with expansion `m`.
#[pyfunction]
fn periodic_circle_bases(m: i64, n: usize) -> PyResult<Vec<f64>> {
    orbits::periodic_circle_bases(m, n).map_err(err)
}

#[pyfunction]
fn covering_radius(points: Vec<(f64, f64)>, grid_n: usize) -> PyResult<f64> {
    let pts: Vec<TorusPoint> = points.into_iter().map(point).collect();
    orbits::covering_radius(&pts, grid_n).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (map, saddle, arclength = 1.0))]
fn unstable_manifold(
    py: Python<'_>,
    map: &PyTorusMap,
    saddle: &PyPeriodicOrbit,
    arclength: f64,
) -> PyResult<Py<PyAny>> {
    let m = py
        .detach(|| orbits::unstable_manifold(&map.inner, &saddle.inner, arclength, &ManifoldOptions::default()))
        .map_err(err)?;
    to_py(py, &m)
}

/// Snap-back certificate for a repelling orbit, or `None` if the search is exhausted.
#[pyfunction]
#[pyo3(signature = (map, repeller, radius = 0.1, depth = 12))]
fn snapback_search(
    py: Python<'_>,
    map: &PyTorusMap,
    repeller: &PyPeriodicOrbit,
    radius: f64,
    depth: usize,
) -> PyResult<Py<PyAny>> {
    let c = py
        .detach(|| orbits::snapback_search(&map.inner, &repeller.inner, radius, depth))
        .map_err(err)?;
    to_py(py, &c)
}

fn method(name: &str) -> PyResult<RotationMethod> {
    match name {
        "plain" => Ok(RotationMethod::Plain),
        "weighted" => Ok(RotationMethod::Weighted),
        _ => Err(PyValueError::new_err(format!("unknown method '{name}' (plain|weighted)"))),
    }
}

/// Rotation number of the `n`-th iterate restricted to the circle `x = base_x`.
#[pyfunction]
#[pyo3(signature = (map, base_x = 0.0, n = 1, y0 = 0.0, iters = 10000, method = "weighted"))]
fn rotation_number(
    py: Python<'_>,
    map: &PyTorusMap,
    base_x: f64,
    n: usize,
    y0: f64,
    iters: usize,
    method: &str,
) -> PyResult<Py<PyAny>> {
    let m = self::method(method)?;
    let cm = circle::restrict(&map.inner, base_x, n).map_err(err)?;
    let r = py
        .detach(|| circle::rotation_number(&cm, y0, iters, m))
        .map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (map, base_x = 0.0, n = 1, y0 = 0.0, iters = 10000, budget = 50))]
fn classify_circle(
    py: Python<'_>,
    map: &PyTorusMap,
    base_x: f64,
    n: usize,
    y0: f64,
    iters: usize,
    budget: usize,
) -> PyResult<Py<PyAny>> {
    let cm = circle::restrict(&map.inner, base_x, n).map_err(err)?;
    let a = py
        .detach(|| circle::classify_circle(&cm, y0, iters, budget))
        .map_err(err)?;
    to_py(py, &a)
}

#[pyfunction]
#[pyo3(signature = (map, base_x = 0.0, n = 1, t_min = 0.0, t_max = 1.0, samples = 200, iters = 10000, budget = 50, seed = circle::DEFAULT_SEED))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    py: Python<'_>,
    map: &PyTorusMap,
    base_x: f64,
    n: usize,
    t_min: f64,
    t_max: f64,
    samples: usize,
    iters: usize,
    budget: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let opts = SweepOptions { iters, budget, seed };
    let s = py
        .detach(|| circle::sweep(&map.inner, base_x, n, (t_min, t_max), samples, &opts))
        .map_err(err)?;
    to_py(py, &s)
}

/// `(lambda1, lambda2)` over `n` iterates from `(x, y)`.
#[pyfunction]
fn ftle_window(map: &PyTorusMap, x: f64, y: f64, n: usize) -> PyResult<(f64, f64)> {
    let e = udv::ftle_window(&map.inner, &TorusPoint::new(x, y), n).map_err(err)?;
    Ok((e[0], e[1]))
}

/// Windowed exponents along one orbit plus summary statistics under `stats`.
#[pyfunction]
#[pyo3(signature = (map, x, y, total = 100000, window = 30, stride = 1, dead_band = 0.0))]
#[allow(clippy::too_many_arguments)]
fn positive_count_series(
    py: Python<'_>,
    map: &PyTorusMap,
    x: f64,
    y: f64,
    total: usize,
    window: usize,
    stride: usize,
    dead_band: f64,
) -> PyResult<Py<PyAny>> {
    let (series, stats) = py
        .detach(|| {
            let s = udv::positive_count_series(&map.inner, &TorusPoint::new(x, y), total, window, stride, dead_band)?;
            let st = udv::oscillation_stats(&s)?;
            Ok::<_, Error>((s, st))
        })
        .map_err(err)?;
    let mut v = serde_json::to_value(&series).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    v["stats"] = serde_json::to_value(stats).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    value_to_py(py, &v)
}

#[pyfunction]
#[pyo3(signature = (map, cx = 0.5, cy = 0.5, radius = 0.05, grid_n = 64, max_iter = 60))]
fn transitivity_cover(
    py: Python<'_>,
    map: &PyTorusMap,
    cx: f64,
    cy: f64,
    radius: f64,
    grid_n: usize,
    max_iter: usize,
) -> PyResult<Py<PyAny>> {
    let r = py
        .detach(|| udv::transitivity_cover(&map.inner, &TorusPoint::new(cx, cy), radius, grid_n, max_iter))
        .map_err(err)?;
    to_py(py, &r)
}

#[pymodule(name = "multichaos")]
fn multichaos_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTorusMap>()?;
    m.add_class::<PyPeriodicOrbit>()?;
    m.add_class::<PyConjugacyMap>()?;
    m.add("QP_THRESHOLD", circle::QP_THRESHOLD)?;
    m.add_function(wrap_pyfunction!(eigen_data, m)?)?;
    m.add_function(wrap_pyfunction!(cone_verify, m)?)?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(factoring_residual, m)?)?;
    m.add_function(wrap_pyfunction!(fiber_trace, m)?)?;
    m.add_function(wrap_pyfunction!(find_periodic, m)?)?;
    m.add_function(wrap_pyfunction!(periodic_circle_bases, m)?)?;
    m.add_function(wrap_pyfunction!(covering_radius, m)?)?;
    m.add_function(wrap_pyfunction!(unstable_manifold, m)?)?;
    m.add_function(wrap_pyfunction!(snapback_search, m)?)?;
    m.add_function(wrap_pyfunction!(rotation_number, m)?)?;
    m.add_function(wrap_pyfunction!(classify_circle, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(ftle_window, m)?)?;
    m.add_function(wrap_pyfunction!(positive_count_series, m)?)?;
    m.add_function(wrap_pyfunction!(transitivity_cover, m)?)?;
    Ok(())
}
