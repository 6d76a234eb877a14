//! Python bindings for the diffcon engine.

use std::collections::BTreeMap;

use diffcon::catalog::Catalog as CoreCatalog;
use diffcon::expr::{self, EvalPoint, Expr as CoreExpr};
use diffcon::jet::EvolutionEquation;
use diffcon::lde::{self, FitConfig};
use diffcon::pde::{self, FastDiffusion};
use diffcon::reduce::{self, OdeSystem};
use diffcon::run::{self as corerun, Command, Format, RunConfig, Selection};
use diffcon::sampling::{SampleConfig, Window};
use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Expr", module = "diffcon_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Expr {
    inner: CoreExpr,
}

#[pymethods]
impl Expr {
    #[new]
    fn new(source: &str) -> PyResult<Self> {
        Ok(Expr {
            inner: expr::parse(source).map_err(err)?,
        })
    }

    fn diff(&self, var: &str) -> Expr {
        Expr {
            inner: expr::differentiate(&self.inner, var),
        }
    }

    fn simplify(&self) -> Expr {
        Expr {
            inner: expr::simplify_basic(&self.inner),
        }
    }

    /// Replace symbols by expressions given as `Expr` or source strings.
    fn subs(&self, bindings: BTreeMap<String, Bound<'_, PyAny>>) -> PyResult<Expr> {
        let mut b = BTreeMap::new();
        for (k, v) in bindings {
            let e = match v.cast::<Expr>() {
                Ok(e) => e.get().inner.clone(),
                Err(_) => expr::parse(&v.extract::<String>()?).map_err(err)?,
            };
            b.insert(k, e);
        }
        Ok(Expr {
            inner: expr::substitute(&self.inner, &b),
        })
    }

    fn evaluate(&self, point: BTreeMap<String, f64>) -> PyResult<f64> {
        let mut p = EvalPoint::new();
        for (k, v) in &point {
            p.set(k, *v);
        }
        self.inner.evaluate(&p).map_err(err)
    }

    fn free_symbols(&self) -> Vec<String> {
        self.inner
            .free_symbols()
            .iter()
            .map(|s| s.name().to_string())
            .collect()
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Expr('{}')", self.inner)
    }

    fn __eq__(&self, other: &Expr) -> bool {
        self.inner == other.inner
    }
}

fn expr_arg(v: &Bound<'_, PyAny>) -> PyResult<CoreExpr> {
    match v.cast::<Expr>() {
        Ok(e) => Ok(e.get().inner.clone()),
        Err(_) => expr::parse(&v.extract::<String>()?).map_err(err),
    }
}

/// Fit `(b1, b2, b3, b4)` for a constraint `h` of `u_t = (u^q u_x)_x + f(u)`.
#[pyfunction]
#[pyo3(signature = (h, q, f, seed = 0))]
fn fit_b<'py>(
    py: Python<'py>,
    h: &Bound<'py, PyAny>,
    q: f64,
    f: &Bound<'py, PyAny>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let fit = lde::fit_b_coefficients(&expr_arg(h)?, q, &expr_arg(f)?, &FitConfig::with_seed(seed))
        .map_err(err)?;
    to_py(py, &fit)
}

/// Check the determining equation with the given or fitted coefficients.
#[pyfunction]
#[pyo3(signature = (h, q, f, b = None, seed = 0, samples = 100, tol = 1e-8))]
#[allow(clippy::too_many_arguments)]
fn check_constraint<'py>(
    py: Python<'py>,
    h: &Bound<'py, PyAny>,
    q: f64,
    f: &Bound<'py, PyAny>,
    b: Option<[f64; 4]>,
    seed: u64,
    samples: usize,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let (h, f) = (expr_arg(h)?, expr_arg(f)?);
    let b = match b {
        Some(b) => b,
        None => lde::fit_b_coefficients(&h, q, &f, &FitConfig::with_seed(seed)).map_err(err)?.b,
    };
    let r = lde::build_residual_diffusion(&h, q, &f, b).map_err(err)?;
    let rep = lde::check_identity(&r, &SampleConfig::new(seed, samples, tol)).map_err(err)?;
    to_py(py, &rep)
}

/// Roots `(b3, b2)` of the two branch relations; `b2` is `None` at `q = 1`.
#[pyfunction]
fn solve_b3_relations(q: f64) -> PyResult<Vec<(f64, Option<f64>)>> {
    Ok(lde::solve_b3_relations(q)
        .map_err(err)?
        .into_iter()
        .map(|r| (r.b3, r.b2))
        .collect())
}

fn window(t: [f64; 2], x: [f64; 2], y: Option<[f64; 2]>) -> Window {
    Window { t, x, y }
}

/// Residual of a closed form `u(t, x)` for `u_t = rhs`.
#[pyfunction]
#[pyo3(signature = (u, rhs, t = [0.0, 0.5], x = [-1.0, 1.0], seed = 0, samples = 100, tol = 1e-8))]
#[allow(clippy::too_many_arguments)]
fn residual_exact<'py>(
    py: Python<'py>,
    u: &Bound<'py, PyAny>,
    rhs: &Bound<'py, PyAny>,
    t: [f64; 2],
    x: [f64; 2],
    seed: u64,
    samples: usize,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let eq = EvolutionEquation::new(expr_arg(rhs)?).map_err(err)?;
    let rep = pde::residual_exact(&expr_arg(u)?, &eq, &window(t, x, None), &SampleConfig::new(seed, samples, tol))
        .map_err(err)?;
    to_py(py, &rep)
}

/// Residual of `w(t, x, y)` for the fast diffusion equation, `form` being
/// `"v-form"` or `"u-form"`.
#[pyfunction]
#[pyo3(signature = (w, form = "u-form", t = [0.0, 0.5], x = [-1.0, 1.0], y = [-1.0, 1.0], seed = 0, samples = 100, tol = 1e-8))]
#[allow(clippy::too_many_arguments)]
fn residual_2d<'py>(
    py: Python<'py>,
    w: &Bound<'py, PyAny>,
    form: &str,
    t: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
    seed: u64,
    samples: usize,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let form = match form {
        "v-form" => FastDiffusion::VForm,
        "u-form" => FastDiffusion::UForm,
        other => return Err(PyValueError::new_err(format!("unknown form `{other}`"))),
    };
    let rep = pde::residual_2d(&expr_arg(w)?, form, &window(t, x, Some(y)), &SampleConfig::new(seed, samples, tol))
        .map_err(err)?;
    to_py(py, &rep)
}

/// Fixed-step RK4 for `c_i' = rhs_i(t, c)`. Returns times, states and the
/// blow-up flag.
#[pyfunction]
fn integrate_rk4<'py>(
    py: Python<'py>,
    names: Vec<String>,
    rhs: Vec<String>,
    initial: Vec<f64>,
    t0: f64,
    t1: f64,
    step: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let rhs = rhs
        .iter()
        .map(|s| expr::parse(s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let sys = OdeSystem::new(names, rhs).map_err(err)?;
    let traj = reduce::integrate_rk4(&sys, &initial, t0, t1, step).map_err(err)?;
    to_py(py, &traj)
}

#[pyclass(name = "Catalog", module = "diffcon_py", frozen)]
struct Catalog {
    inner: CoreCatalog,
}

#[pymethods]
impl Catalog {
    /// The built-in catalog, or one loaded from a JSON Lines file.
    #[new]
    #[pyo3(signature = (path = None))]
    fn new(path: Option<std::path::PathBuf>) -> PyResult<Self> {
        let inner = match path {
            Some(p) => CoreCatalog::load(&p).map_err(err)?,
            None => CoreCatalog::builtin(),
        };
        Ok(Catalog { inner })
    }

    /// Record ids, optionally of one kind.
    #[pyo3(signature = (kind = None))]
    fn ids(&self, kind: Option<&str>) -> Vec<String> {
        self.inner
            .records()
            .iter()
            .filter(|r| kind.is_none_or(|k| r.kind() == k))
            .map(|r| r.id().to_string())
            .collect()
    }

    fn record<'py>(&self, py: Python<'py>, id: &str) -> PyResult<Bound<'py, PyAny>> {
        let r = self
            .inner
            .get(id)
            .ok_or_else(|| PyKeyError::new_err(id.to_string()))?;
        to_py(py, r)
    }

    fn __len__(&self) -> usize {
        self.inner.records().len()
    }

    /// Run a command (`verify-lde`, `verify-solution`, `reduce`, `compat`
    /// or `catalog-list`) and return the report.
    #[pyo3(signature = (command, ids = None, seed = 0, samples = 100, tol = None, t1 = None, step = 1e-3))]
    #[allow(clippy::too_many_arguments)]
    fn run<'py>(
        &self,
        py: Python<'py>,
        command: &str,
        ids: Option<Vec<String>>,
        seed: u64,
        samples: usize,
        tol: Option<f64>,
        t1: Option<f64>,
        step: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let command = match command {
            "catalog-list" => Command::CatalogList,
            "verify-lde" => Command::VerifyLde,
            "verify-solution" => Command::VerifySolution,
            "reduce" => Command::Reduce { t1, step },
            "compat" => Command::Compat,
            other => return Err(PyValueError::new_err(format!("unknown command `{other}`"))),
        };
        let config = RunConfig {
            selection: ids.map_or(Selection::All, Selection::Ids),
            seed,
            samples,
            tol,
            format: Format::Json,
            ..RunConfig::new(command)
        };
        let report = corerun::run(config, &self.inner).map_err(err)?;
        to_py(py, &report)
    }
}

/// Evaluate `expr` at a point given as keyword arguments.
#[pyfunction]
#[pyo3(signature = (e, **point))]
fn evaluate(e: &Bound<'_, PyAny>, point: Option<&Bound<'_, PyDict>>) -> PyResult<f64> {
    let mut p = EvalPoint::new();
    if let Some(d) = point {
        for (k, v) in d.iter() {
            p.set(&k.extract::<String>()?, v.extract::<f64>()?);
        }
    }
    expr_arg(e)?.evaluate(&p).map_err(err)
}

#[pymodule]
fn diffcon_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", corerun::VERSION)?;
    m.add_class::<Expr>()?;
    m.add_class::<Catalog>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_b, m)?)?;
    m.add_function(wrap_pyfunction!(check_constraint, m)?)?;
    m.add_function(wrap_pyfunction!(solve_b3_relations, m)?)?;
    m.add_function(wrap_pyfunction!(residual_exact, m)?)?;
    m.add_function(wrap_pyfunction!(residual_2d, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_rk4, m)?)?;
    Ok(())
}
