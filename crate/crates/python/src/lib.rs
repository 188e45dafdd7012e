//! Python bindings: profiles, forcing, grids, K-bounds, constant selection,
//! the velocity gradient, the blowup-time extrapolator and whole runs.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

use cuspform::certify::{select_constants_with, Selection};
use cuspform::cli::{self, parse_config};
use cuspform::integrator::extrapolate_ts as core_extrapolate_ts;

create_exception!(cuspform_py, CuspformError, PyException);

fn err(e: cuspform::Error) -> PyErr {
    CuspformError::new_err(e.to_string())
}

/// Converts a serializable value into plain Python objects.
fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| CuspformError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Admissible initial profile `theta0`.
#[pyclass(name = "Profile", frozen)]
struct PyProfile {
    inner: cuspform::InitialProfile,
}

#[pymethods]
impl PyProfile {
    #[new]
    #[pyo3(signature = (family, params = Vec::new(), radius = 1.0))]
    fn new(family: &str, params: Vec<f64>, radius: f64) -> PyResult<Self> {
        let fam = cuspform::ProfileFamily::from_name(family, radius, &params).map_err(err)?;
        Ok(PyProfile { inner: cuspform::build_profile(fam).map_err(err)? })
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family().name()
    }

    #[getter]
    fn peak(&self) -> f64 {
        self.inner.peak()
    }

    fn theta(&self, y: f64) -> f64 {
        self.inner.theta(y)
    }

    fn dtheta(&self, y: f64) -> f64 {
        self.inner.dtheta(y)
    }

    fn ddtheta(&self, y: f64) -> f64 {
        self.inner.ddtheta(y)
    }

    /// Raises unless the maximum at the origin is strict.
    fn require_strict_maximum(&self) -> PyResult<()> {
        self.inner.require_strict_maximum().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Profile({:?})", self.inner.family())
    }
}

/// Lagrangian forcing `g(z) = theta0(eps0 z)`.
#[pyclass(name = "Forcing", frozen)]
struct PyForcing {
    inner: cuspform::Forcing,
}

#[pymethods]
impl PyForcing {
    #[new]
    fn new(profile: &PyProfile, eps0: f64) -> PyResult<Self> {
        Ok(PyForcing { inner: cuspform::build_forcing(&profile.inner, eps0).map_err(err)? })
    }

    #[getter]
    fn eps0(&self) -> f64 {
        self.inner.eps0()
    }

    #[getter]
    fn support_end(&self) -> f64 {
        self.inner.support_end()
    }

    fn g(&self, z: f64) -> f64 {
        self.inner.g(z)
    }

    fn dg(&self, z: f64) -> f64 {
        self.inner.dg(z)
    }
}

/// Sampled K-bounds of the forcing as a dict.
#[pyfunction]
fn fit_k_bounds<'py>(py: Python<'py>, forcing: &PyForcing) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &cuspform::fit_k_bounds(&forcing.inner).map_err(err)?)
}

/// Selected constants and condition margins as a dict.
#[pyfunction]
#[pyo3(signature = (k0, k1, condition3_margin = 0.01, beta = None, kappa = None, eps0 = None))]
fn select_constants<'py>(
    py: Python<'py>,
    k0: f64,
    k1: f64,
    condition3_margin: f64,
    beta: Option<f64>,
    kappa: Option<f64>,
    eps0: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let sel = Selection { condition3_margin, beta, kappa, eps0 };
    to_py(py, &select_constants_with(k0, k1, &sel).map_err(err)?)
}

/// Graded Lagrangian grid on `[0, a]`.
#[pyclass(name = "Grid", frozen)]
struct PyGrid {
    inner: cuspform::LagrangianGrid,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (a, n, grading = 10.0, x_min_factor = 1e-12))]
    fn new(a: f64, n: usize, grading: f64, x_min_factor: f64) -> PyResult<Self> {
        let spec = cuspform::GridSpec { a, n, grading, x_min_factor };
        Ok(PyGrid { inner: cuspform::make_grid(&spec).map_err(err)? })
    }

    #[getter]
    fn nodes(&self) -> Vec<f64> {
        self.inner.nodes().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Shorthand for `Grid(a, n, ...)`.
#[pyfunction]
#[pyo3(signature = (a, n, grading = 10.0, x_min_factor = 1e-12))]
fn make_grid(a: f64, n: usize, grading: f64, x_min_factor: f64) -> PyResult<PyGrid> {
    PyGrid::new(a, n, grading, x_min_factor)
}

/// Velocity gradient `I` at every node for the state `phi`; `phi`
/// defaults to the initial data `eps0 x`.
#[pyfunction]
#[pyo3(signature = (forcing, grid, phi = None, t = 0.0))]
fn velocity_gradient(forcing: &PyForcing, grid: &PyGrid, phi: Option<Vec<f64>>, t: f64) -> PyResult<Vec<f64>> {
    let grid = &grid.inner;
    let state = match phi {
        Some(phi) => cuspform::FlowState::new(grid, t, phi).map_err(err)?,
        None => cuspform::FlowState::initial(grid, &forcing.inner),
    };
    Ok(cuspform::velocity_gradient(grid, &state, &forcing.inner).map_err(err)?.values)
}

/// Rate-law fit of `eps(t)` near blowup as a dict.
#[pyfunction]
fn extrapolate_ts<'py>(py: Python<'py>, eps: Vec<f64>, t: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &core_extrapolate_ts(&eps, &t).map_err(err)?)
}

/// Validated configuration, with defaults filled in, as a dict.
#[pyfunction]
fn parse_run_config<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &parse_config(text).map_err(err)?)
}

/// Certificate for a certified-mode configuration as a dict.
#[pyfunction]
fn certify<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(text).map_err(err)?;
    to_py(py, &cli::certify(&cfg).map_err(err)?)
}

/// Runs a TOML configuration and returns `(exit_code, report)`. With
/// `out`, every artifact is also written there.
#[pyfunction]
#[pyo3(signature = (text, out = None))]
fn run_config<'py>(py: Python<'py>, text: &str, out: Option<PathBuf>) -> PyResult<(i32, Bound<'py, PyAny>)> {
    let cfg = parse_config(text).map_err(err)?;
    let output = py.detach(|| cli::execute(&cfg));
    if let Some(dir) = out {
        cli::write_artifacts(&dir, &output).map_err(err)?;
    }
    Ok((output.exit_code, to_py(py, &output.report)?))
}

#[pymodule]
pub fn cuspform_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CuspformError", m.py().get_type::<CuspformError>())?;
    m.add_class::<PyProfile>()?;
    m.add_class::<PyForcing>()?;
    m.add_class::<PyGrid>()?;
    m.add_function(wrap_pyfunction!(fit_k_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(select_constants, m)?)?;
    m.add_function(wrap_pyfunction!(make_grid, m)?)?;
    m.add_function(wrap_pyfunction!(velocity_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(extrapolate_ts, m)?)?;
    m.add_function(wrap_pyfunction!(parse_run_config, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
