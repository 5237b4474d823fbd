//! Python bindings: loops, splittings, potentials, surfaces and symmetry checks.

// pyo3 0.22 macros expand to PyErr conversions clippy flags as useless.
#![allow(clippy::useless_conversion)]

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;

use dpw::export::{generate as run_generate, parse_automorphism, parse_h_plus, GridConfig, RunConfig};
use dpw::factorization;
use dpw::geometry::{geometry_report, Derivatives};
use dpw::loops::{exp_axis as core_exp_axis, CirclePoint, Mat2, ScalarLaurent, TwistedLoop, DEFAULT_TRUNC};
use dpw::pipeline::{dress as core_dress, integrate_source, split_frames, sym_formula, FrameField, FrameSource};
use dpw::potentials::{MeromorphicPotential, PotentialConfig};
use dpw::symmetry::extract_chi;
use dpw::{Error, Tolerances};

create_exception!(dpw_py, DpwError, PyException);

fn err(e: Error) -> PyErr {
    match e {
        Error::Parse(_) | Error::InvalidParameter(_) | Error::InvalidGrid(_) | Error::TwistViolation { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => DpwError::new_err(e.to_string()),
    }
}

type Rows = [[Complex64; 2]; 2];

fn to_rows(m: &Mat2) -> Rows {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

fn from_rows(r: &Rows) -> Mat2 {
    Mat2::new(r[0][0], r[0][1], r[1][0], r[1][1])
}

fn json_to_py(py: Python<'_>, text: &str) -> PyResult<PyObject> {
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

/// A twisted 2×2 loop Σ c_k λ^k, truncated at |k| ≤ N.
#[pyclass(name = "Loop", module = "dpw_py")]
#[derive(Clone)]
struct PyLoop {
    inner: TwistedLoop,
}

#[pymethods]
impl PyLoop {
    /// Builds from [(degree, [[a, b], [c, d]]), ...].
    #[new]
    #[pyo3(signature = (coeffs, trunc = DEFAULT_TRUNC))]
    fn new(coeffs: Vec<(i32, Rows)>, trunc: usize) -> PyResult<Self> {
        let list: Vec<(i32, Mat2)> = coeffs.iter().map(|(k, r)| (*k, from_rows(r))).collect();
        Ok(Self { inner: TwistedLoop::from_coeffs(&list, trunc).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (trunc = DEFAULT_TRUNC))]
    fn identity(trunc: usize) -> Self {
        Self { inner: TwistedLoop::identity(trunc) }
    }

    /// cosh(x)I + sinh(x)A for x = Σ c_k λ^k over odd k.
    #[staticmethod]
    #[pyo3(signature = (terms, trunc = DEFAULT_TRUNC))]
    fn exp_axis(terms: Vec<(i32, Complex64)>, trunc: usize) -> PyResult<Self> {
        Ok(Self { inner: core_exp_axis(&ScalarLaurent::from_terms(&terms), trunc).map_err(err)? })
    }

    #[getter]
    fn trunc(&self) -> usize {
        self.inner.trunc()
    }

    fn coeff(&self, k: i32) -> Rows {
        to_rows(&self.inner.coeff(k))
    }

    fn coeffs(&self) -> Vec<(i32, Rows)> {
        self.inner.iter().filter(|(_, m)| m.iter().any(|v| v.norm() > 0.0)).map(|(k, m)| (k, to_rows(m))).collect()
    }

    fn is_twisted(&self) -> bool {
        self.inner.is_twisted()
    }

    /// Value at λ = e^{iθ}.
    fn eval(&self, theta: f64) -> Rows {
        to_rows(&self.inner.eval(&CirclePoint::from_theta(theta)))
    }

    fn __mul__(&self, other: &PyLoop) -> Self {
        Self { inner: self.inner.mul(&other.inner) }
    }

    fn inverse(&self) -> PyResult<Self> {
        Ok(Self { inner: self.inner.inverse().map_err(err)? })
    }

    fn star(&self) -> Self {
        Self { inner: self.inner.star() }
    }

    fn theta_derivative(&self) -> Self {
        Self { inner: self.inner.theta_derivative() }
    }

    fn max_abs_diff(&self, other: &PyLoop) -> f64 {
        self.inner.max_abs_diff(&other.inner)
    }

    fn __repr__(&self) -> String {
        let r = self.inner.degree_range();
        format!("Loop(trunc={}, degrees={:?})", self.inner.trunc(), r)
    }
}

/// g = F·h₊ with F unitary on the circle. Returns (F, h₊).
#[pyfunction]
fn iwasawa(g: &PyLoop) -> PyResult<(PyLoop, PyLoop)> {
    let p = factorization::iwasawa(&g.inner).map_err(err)?;
    Ok((PyLoop { inner: p.unitary_factor }, PyLoop { inner: p.plus_factor }))
}

/// g = g₋·g₊ with g₋(∞) = I. Returns (g₋, g₊).
#[pyfunction]
fn birkhoff(g: &PyLoop) -> PyResult<(PyLoop, PyLoop)> {
    let p = factorization::birkhoff(&g.inner).map_err(err)?;
    Ok((PyLoop { inner: p.minus_factor }, PyLoop { inner: p.plus_factor }))
}

/// A meromorphic potential ξ = λ⁻¹[[0, f], [E/f, 0]] dz.
#[pyclass(name = "Potential", module = "dpw_py")]
#[derive(Clone)]
struct PyPotential {
    config: PotentialConfig,
    inner: MeromorphicPotential,
}

impl PyPotential {
    fn from_config(config: PotentialConfig) -> PyResult<Self> {
        let inner = config.build().map_err(err)?;
        Ok(Self { config, inner })
    }
}

#[pymethods]
impl PyPotential {
    /// From the JSON form used by the CLI, e.g. '{"type": "smyth", "m": 2, "c": [1, 0]}'.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Self::from_config(serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?)
    }

    #[staticmethod]
    fn cylinder() -> PyResult<Self> {
        Self::from_config(PotentialConfig::Cylinder)
    }

    #[staticmethod]
    #[pyo3(signature = (m, c = Complex64::new(1.0, 0.0)))]
    fn smyth(m: u32, c: Complex64) -> PyResult<Self> {
        Self::from_config(PotentialConfig::Smyth { m, c: [c.re, c.im] })
    }

    #[staticmethod]
    fn branched(z0: Complex64) -> PyResult<Self> {
        Self::from_config(PotentialConfig::Branched { z0: [z0.re, z0.im] })
    }

    fn f(&self, z: Complex64) -> Complex64 {
        self.inner.f_at(z)
    }

    #[pyo3(name = "E")]
    fn e(&self, z: Complex64) -> Complex64 {
        self.inner.e_at(z)
    }

    fn warnings(&self) -> Vec<String> {
        self.inner.warnings()
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.config).unwrap_or_default()
    }

    fn __repr__(&self) -> String {
        format!("Potential({})", self.to_json())
    }
}

/// A split frame field on a grid; the source of surfaces and symmetry checks.
#[pyclass(name = "Surface", module = "dpw_py")]
struct PySurface {
    potential: MeromorphicPotential,
    field: FrameField,
}

#[pymethods]
impl PySurface {
    /// `grid` takes the CLI syntax: "n=33,R=1.0" or "disk:n_r=..,n_phi=..,radius=..".
    #[new]
    #[pyo3(signature = (potential, grid = "n=33,R=1.0", trunc = DEFAULT_TRUNC))]
    fn new(py: Python<'_>, potential: &PyPotential, grid: &str, trunc: usize) -> PyResult<Self> {
        let grid = GridConfig::parse(grid).and_then(|g| g.build()).map_err(err)?;
        let xi = potential.inner.clone();
        let field = py
            .allow_threads(|| integrate_source(FrameSource::new(xi.clone(), trunc), &grid).map(|f| split_frames(&f)))
            .map_err(err)?;
        Ok(Self { potential: xi, field })
    }

    fn nodes(&self) -> Vec<Complex64> {
        self.field.grid.nodes.clone()
    }

    fn singular(&self) -> Vec<bool> {
        self.field.singular_flags.clone()
    }

    /// Sym-formula points at λ = e^{iθ}; None at singular nodes.
    #[pyo3(signature = (theta = 0.0))]
    fn points(&self, theta: f64) -> Vec<Option<[f64; 3]>> {
        let s = sym_formula(&self.field, CirclePoint::from_theta(theta));
        s.points.iter().zip(&s.valid).map(|(p, &v)| v.then_some(*p)).collect()
    }

    /// u, E, H, K and residuals per node, as a dict.
    #[pyo3(signature = (theta = 0.0))]
    fn geometry(&self, py: Python<'_>, theta: f64) -> PyResult<PyObject> {
        let s = sym_formula(&self.field, CirclePoint::from_theta(theta));
        let rep = geometry_report(&s, &self.potential, Derivatives::Frame, &Tolerances::default()).map_err(err)?;
        json_to_py(py, &serde_json::to_string(&rep).map_err(|e| DpwError::new_err(e.to_string()))?)
    }

    /// Tests an automorphism ("rot:4", "trans:1,0", "mobius:a,b,c,d"); returns the report dict.
    fn check_symmetry(&self, py: Python<'_>, automorphism: &str) -> PyResult<PyObject> {
        let g = parse_automorphism(automorphism).map_err(err)?;
        let rep = py.allow_threads(|| extract_chi(&self.field, &g));
        json_to_py(py, &serde_json::to_string(&rep).map_err(|e| DpwError::new_err(e.to_string()))?)
    }

    /// Dresses by a plus loop (a Loop or "omega:c"); returns a new Surface.
    fn dress(&self, py: Python<'_>, h_plus: &Bound<'_, PyAny>) -> PyResult<Self> {
        let h = if let Ok(l) = h_plus.extract::<PyLoop>() {
            l.inner
        } else {
            let spec: String = h_plus.extract()?;
            parse_h_plus(&spec, None, self.field.source.trunc()).map_err(err)?
        };
        let field = py.allow_threads(|| core_dress(&h, &self.field)).map_err(err)?;
        Ok(Self { potential: self.potential.clone(), field })
    }
}

/// Runs a full config (CLI JSON); returns (report dict, list of OBJ strings). Nothing is written.
#[pyfunction]
fn generate(py: Python<'_>, config_json: &str) -> PyResult<(PyObject, Vec<String>)> {
    let cfg = RunConfig::from_json(config_json).map_err(err)?;
    let run = py.allow_threads(|| run_generate(&cfg)).map_err(err)?;
    let rep = serde_json::to_string(&run.report).map_err(|e| DpwError::new_err(e.to_string()))?;
    Ok((json_to_py(py, &rep)?, run.objs))
}

#[pymodule]
fn dpw_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DpwError", m.py().get_type_bound::<DpwError>())?;
    m.add_class::<PyLoop>()?;
    m.add_class::<PyPotential>()?;
    m.add_class::<PySurface>()?;
    m.add_function(wrap_pyfunction!(iwasawa, m)?)?;
    m.add_function(wrap_pyfunction!(birkhoff, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    Ok(())
}
