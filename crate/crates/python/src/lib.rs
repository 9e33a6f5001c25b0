use std::sync::Arc;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use subfreq::caccioppoli::{bump_cutoff as core_bump_cutoff, verify_caccioppoli};
use subfreq::cli::commands::resolve_str;
use subfreq::cli::{run_check as core_run_check, CheckName, Context};
use subfreq::p_sub_laplacian::{apply_operator, dirichlet_energy, rayleigh_quotient as core_rayleigh};
use subfreq::picone::verify_picone;
use subfreq::{
    CaccioppoliTolerance, DiscreteGradient, GridDomain, GridFunction, PiconeMode, PiconeTolerance, SolverOptions,
    VectorFieldFamily,
};

fn to_py(e: subfreq::Error) -> PyErr {
    match e {
        subfreq::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Serializes through JSON and hands the text to `json.loads`.
fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A family of horizontal vector fields.
#[pyclass(frozen, module = "pysubfreq")]
struct Family {
    inner: VectorFieldFamily,
}

#[pymethods]
impl Family {
    #[staticmethod]
    fn euclidean(n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: VectorFieldFamily::euclidean(n).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn grushin() -> Self {
        Self {
            inner: VectorFieldFamily::grushin(),
        }
    }

    #[staticmethod]
    fn heisenberg(n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: VectorFieldFamily::heisenberg(n).map_err(to_py)?,
        })
    }

    /// Custom fields from a JSON spec with `ambient_dim` and `fields`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: VectorFieldFamily::from_json(text).map_err(to_py)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    #[getter]
    fn num_fields(&self) -> usize {
        self.inner.num_fields()
    }

    fn __repr__(&self) -> String {
        format!("Family({}, dim={})", self.inner.name(), self.inner.ambient_dim())
    }
}

/// A masked tensor lattice. Grid values are flat lists in row-major order.
#[pyclass(frozen, module = "pysubfreq")]
struct Domain {
    inner: Arc<GridDomain>,
}

#[pymethods]
impl Domain {
    #[staticmethod]
    #[pyo3(name = "box")]
    fn make_box(bounds: Vec<(f64, f64)>, shape: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(GridDomain::make_box(&bounds, &shape).map_err(to_py)?),
        })
    }

    /// `mask[i]` marks node `i` as interior.
    #[staticmethod]
    fn from_mask(bounds: Vec<(f64, f64)>, shape: Vec<usize>, mask: Vec<bool>) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(GridDomain::from_mask(&bounds, &shape, mask).map_err(to_py)?),
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_interior(&self) -> usize {
        self.inner.num_interior()
    }

    #[getter]
    fn mask(&self) -> Vec<bool> {
        self.inner.mask().to_vec()
    }

    /// Coordinates of every node, one tuple per node.
    fn coords(&self) -> Vec<Vec<f64>> {
        (0..self.inner.num_nodes()).map(|i| self.inner.coords(i)).collect()
    }

    fn __repr__(&self) -> String {
        format!("Domain(shape={:?}, interior={})", self.inner.shape(), self.inner.num_interior())
    }
}

impl Domain {
    fn function(&self, values: Vec<f64>) -> PyResult<GridFunction> {
        GridFunction::from_values(&self.inner, values).map_err(to_py)
    }

    fn gradient(&self, family: &Family) -> PyResult<DiscreteGradient> {
        DiscreteGradient::new(&family.inner, &self.inner).map_err(to_py)
    }
}

#[pyclass(frozen, get_all, module = "pysubfreq")]
struct EigenPair {
    lambda1: f64,
    u1: Vec<f64>,
    p: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
    lambda_history: Vec<f64>,
}

#[pymethods]
impl EigenPair {
    fn __repr__(&self) -> String {
        format!(
            "EigenPair(lambda1={}, iterations={}, converged={})",
            self.lambda1, self.iterations, self.converged
        )
    }
}

/// Principal Dirichlet eigenpair; `u1` is nonnegative with unit `L^p` norm.
#[pyfunction]
#[pyo3(signature = (family, domain, p = 2.0, seed = 0, max_iterations = None, tol_lambda = None, tol_residual = None))]
fn solve(
    py: Python<'_>,
    family: &Family,
    domain: &Domain,
    p: f64,
    seed: u64,
    max_iterations: Option<usize>,
    tol_lambda: Option<f64>,
    tol_residual: Option<f64>,
) -> PyResult<EigenPair> {
    let mut opts = SolverOptions::with_p(p);
    opts.seed = seed;
    if let Some(m) = max_iterations {
        opts.max_iterations = m;
    }
    if let Some(t) = tol_lambda {
        opts.tol_lambda = t;
    }
    if let Some(t) = tol_residual {
        opts.tol_residual = t;
    }
    let (f, d) = (&family.inner, &domain.inner);
    let pair = py
        .detach(|| subfreq::solve_principal(f, d, &opts))
        .map_err(to_py)?;
    Ok(EigenPair {
        lambda1: pair.lambda1,
        u1: pair.u1.into_values(),
        p: pair.p,
        iterations: pair.iterations,
        residual: pair.residual,
        converged: pair.converged,
        lambda_history: pair.lambda_history,
    })
}

/// `∫ |∇_X u|^p`.
#[pyfunction]
fn energy(family: &Family, domain: &Domain, u: Vec<f64>, p: f64) -> PyResult<f64> {
    dirichlet_energy(&domain.gradient(family)?, &domain.function(u)?, p).map_err(to_py)
}

#[pyfunction]
fn rayleigh_quotient(family: &Family, domain: &Domain, u: Vec<f64>, p: f64) -> PyResult<f64> {
    core_rayleigh(&domain.gradient(family)?, &domain.function(u)?, p).map_err(to_py)
}

/// Nodal values of the p-sub-Laplacian of `u`.
#[pyfunction]
fn apply(family: &Family, domain: &Domain, u: Vec<f64>, p: f64) -> PyResult<Vec<f64>> {
    let out = apply_operator(&domain.gradient(family)?, &domain.function(u)?, p, 0.0).map_err(to_py)?;
    Ok(out.into_values())
}

#[pyfunction]
#[pyo3(signature = (family, domain, u, v, p, mode = "algebraic"))]
fn picone<'py>(
    py: Python<'py>,
    family: &Family,
    domain: &Domain,
    u: Vec<f64>,
    v: Vec<f64>,
    p: f64,
    mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let mode = match mode {
        "algebraic" => PiconeMode::Algebraic,
        "discrete" => PiconeMode::Discrete,
        other => return Err(PyValueError::new_err(format!("unknown mode `{other}`"))),
    };
    let report = verify_picone(
        &domain.gradient(family)?,
        &domain.function(u)?,
        &domain.function(v)?,
        p,
        mode,
        &PiconeTolerance::for_mode(mode),
    )
    .map_err(to_py)?;
    to_dict(py, &report)
}

#[pyfunction]
#[pyo3(signature = (family, domain, v, phi, p, q, lam))]
fn caccioppoli<'py>(
    py: Python<'py>,
    family: &Family,
    domain: &Domain,
    v: Vec<f64>,
    phi: Vec<f64>,
    p: f64,
    q: f64,
    lam: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let report = verify_caccioppoli(
        &domain.gradient(family)?,
        &domain.function(v)?,
        &domain.function(phi)?,
        p,
        q,
        lam,
        &CaccioppoliTolerance::default(),
    )
    .map_err(to_py)?;
    to_dict(py, &report)
}

#[pyfunction]
#[pyo3(signature = (domain, lo, hi, m = 2))]
fn bump_cutoff(domain: &Domain, lo: Vec<f64>, hi: Vec<f64>, m: u32) -> PyResult<Vec<f64>> {
    Ok(core_bump_cutoff(&domain.inner, &lo, &hi, m).map_err(to_py)?.into_values())
}

/// Runs one named check from a JSON run configuration, as `subfreq verify`
/// does, and returns `{check, exit_code, report, details}`.
#[pyfunction]
fn run_check<'py>(py: Python<'py>, config: &str, check: &str) -> PyResult<Bound<'py, PyAny>> {
    let which: CheckName = serde_json::from_value(serde_json::Value::String(check.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown check `{check}`")))?;
    let resolved = resolve_str(config).map_err(to_py)?;
    let value = py.detach(|| -> subfreq::Result<serde_json::Value> {
        let ctx = Context::new(&resolved)?;
        let outcome = core_run_check(&ctx, which)?;
        Ok(serde_json::json!({
            "check": which.as_str(),
            "exit_code": outcome.exit_code(),
            "report": outcome.report,
            "details": outcome.details,
        }))
    });
    to_dict(py, &value.map_err(to_py)?)
}

#[pymodule]
fn pysubfreq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Family>()?;
    m.add_class::<Domain>()?;
    m.add_class::<EigenPair>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(rayleigh_quotient, m)?)?;
    m.add_function(wrap_pyfunction!(apply, m)?)?;
    m.add_function(wrap_pyfunction!(picone, m)?)?;
    m.add_function(wrap_pyfunction!(caccioppoli, m)?)?;
    m.add_function(wrap_pyfunction!(bump_cutoff, m)?)?;
    m.add_function(wrap_pyfunction!(run_check, m)?)?;
    Ok(())
}
