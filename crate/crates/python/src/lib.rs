//! Python bindings: gallery problems, schedules, integration and the full
//! diagnostic pipeline. Vectors cross the boundary as lists of floats.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use pendyn_core::cli::config::named_problem;
use pendyn_core::cli::{output, pipeline};
use pendyn_core::diagnostics::lemma_constants as core_lemma_constants;
use pendyn_core::dynamics::{integrate as core_integrate, IntegratorConfig, TrajectoryRecord};
use pendyn_core::problems::{self, kkt_oracle, ProblemInstance};
use pendyn_core::schedules::{DampingSchedule, PowerSchedule, ScheduleSet};
use pendyn_core::{Error, Vector};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NonFiniteState { .. } | Error::StepUnderflow { .. } | Error::Io(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any().unbind(),
            None => n
                .as_f64()
                .unwrap_or(f64::NAN)
                .into_pyobject(py)?
                .into_any()
                .unbind(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

/// Step-size, damping and penalty schedules of the closed-form power families.
#[pyclass(name = "Schedules", module = "pendyn", from_py_object)]
#[derive(Clone)]
struct PySchedules {
    inner: ScheduleSet,
}

#[pymethods]
impl PySchedules {
    /// `lambda(t) = lambda_c0 (1+t)^lambda_p`, `beta(t) = beta_c0 (1+t)^beta_p`.
    /// Damping is constant `gamma` unless `gamma_floor` is given, in which case
    /// it decays from `gamma` to the floor at `gamma_rate`.
    #[new]
    #[pyo3(signature = (lambda_c0=1.0, lambda_p=-0.75, beta_c0=1.0, beta_p=0.5, gamma=std::f64::consts::SQRT_2, gamma_floor=None, gamma_rate=1.0, l_b=1.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        lambda_c0: f64,
        lambda_p: f64,
        beta_c0: f64,
        beta_p: f64,
        gamma: f64,
        gamma_floor: Option<f64>,
        gamma_rate: f64,
        l_b: f64,
    ) -> PyResult<Self> {
        let damping = match gamma_floor {
            Some(floor) => DampingSchedule::decay_to_floor(gamma, floor, gamma_rate),
            None => DampingSchedule::constant(gamma),
        }
        .map_err(py_err)?;
        let inner = ScheduleSet::new(
            PowerSchedule::new(lambda_c0, lambda_p).map_err(py_err)?,
            PowerSchedule::new(beta_c0, beta_p).map_err(py_err)?,
            damping,
            l_b,
        )
        .map_err(py_err)?;
        Ok(Self { inner })
    }

    fn values(&self, t: f64) -> (f64, f64, f64) {
        let s = &self.inner;
        (s.lambda.value(t), s.beta.value(t), s.gamma.value(t))
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "Schedules(lambda={}(1+t)^{}, beta={}(1+t)^{}, gamma_inf={})",
            s.lambda.c0,
            s.lambda.p,
            s.beta.c0,
            s.beta.p,
            s.gamma.limit()
        )
    }
}

/// A problem instance with its operators, schedules and initial data.
#[pyclass(name = "Problem", module = "pendyn")]
struct PyProblem {
    inner: ProblemInstance,
}

#[pymethods]
impl PyProblem {
    /// Looks up a gallery instance; `-n20` names are generated from `seed`.
    #[staticmethod]
    #[pyo3(signature = (name, seed=0))]
    fn gallery(name: &str, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: named_problem(name, seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn names() -> Vec<&'static str> {
        problems::GALLERY_NAMES.to_vec()
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn description(&self) -> &str {
        &self.inner.description
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.spec.dim()
    }

    /// Copy with replaced schedules and/or initial data.
    #[pyo3(signature = (schedules=None, u0=None, v0=None))]
    fn with_overrides(
        &self,
        schedules: Option<PySchedules>,
        u0: Option<Vec<f64>>,
        v0: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let inner = problems::with_overrides(
            self.inner.clone(),
            schedules.map(|s| s.inner),
            u0.map(Vector::from_vec),
            v0.map(Vector::from_vec),
        )
        .map_err(py_err)?;
        Ok(Self { inner })
    }

    fn hypotheses(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &output::hypotheses_json(&self.inner.spec))
    }

    /// The zero anchor `(x*, v, p)` from the problem's oracle.
    fn oracle(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let sol = kkt_oracle(&self.inner).map_err(py_err)?;
        to_py(py, &output::oracle_json(&sol))
    }

    fn resolvent(&self, lam: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let p = self
            .inner
            .spec
            .a()
            .resolvent(lam, &Vector::from_vec(x))
            .map_err(py_err)?;
        Ok(p.as_slice().to_vec())
    }

    /// First-order right-hand side `(u', v')` at `(t, u, v)`.
    fn rhs(&self, t: f64, u: Vec<f64>, v: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let (du, dv) = self
            .inner
            .spec
            .rhs(t, &Vector::from_vec(u), &Vector::from_vec(v))
            .map_err(py_err)?;
        Ok((du.as_slice().to_vec(), dv.as_slice().to_vec()))
    }

    fn lipschitz_bound(&self, t: f64) -> f64 {
        self.inner.spec.lipschitz_bound(t)
    }

    fn stationarity_residual(&self, t: f64, x: Vec<f64>) -> PyResult<f64> {
        self.inner
            .spec
            .stationarity_residual(t, &Vector::from_vec(x))
            .map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem({:?}, dim={})",
            self.inner.name,
            self.inner.spec.dim()
        )
    }
}

/// Sampled trajectory: times, positions, velocities and sink columns.
#[pyclass(name = "Trajectory", module = "pendyn")]
struct PyTrajectory {
    inner: TrajectoryRecord,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.t).collect()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        self.inner
            .samples
            .iter()
            .map(|s| s.x.as_slice().to_vec())
            .collect()
    }

    #[getter]
    fn v(&self) -> Vec<Vec<f64>> {
        self.inner
            .samples
            .iter()
            .map(|s| s.v.as_slice().to_vec())
            .collect()
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.columns.clone()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        let i = self
            .inner
            .column_index(name)
            .ok_or_else(|| PyValueError::new_err(format!("no column named {name:?}")))?;
        Ok(self.inner.samples.iter().map(|s| s.extras[i]).collect())
    }

    fn stats(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let v = serde_json::to_value(&self.inner.stats).map_err(|e| py_err(e.into()))?;
        to_py(py, &v)
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.samples.len()
    }
}

#[allow(clippy::too_many_arguments)]
fn integrator_config(
    mode: &str,
    dt: f64,
    t_end: f64,
    rel_tol: f64,
    abs_tol: f64,
    sample_stride: usize,
    sample_interval: Option<f64>,
) -> PyResult<IntegratorConfig> {
    let mut cfg = match mode {
        "fixed" => IntegratorConfig::fixed(dt, t_end, sample_stride),
        "adaptive" => IntegratorConfig::adaptive(dt, rel_tol, abs_tol, t_end, sample_stride),
        other => {
            return Err(PyValueError::new_err(format!(
                "mode must be 'fixed' or 'adaptive', got {other:?}"
            )))
        }
    };
    cfg.sample_interval = sample_interval;
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Integrates the problem's system from its initial data.
#[pyfunction]
#[pyo3(signature = (problem, t_end, dt=1e-2, mode="adaptive", rel_tol=1e-8, abs_tol=1e-8, sample_stride=1, sample_interval=None))]
#[allow(clippy::too_many_arguments)]
fn integrate(
    py: Python<'_>,
    problem: &PyProblem,
    t_end: f64,
    dt: f64,
    mode: &str,
    rel_tol: f64,
    abs_tol: f64,
    sample_stride: usize,
    sample_interval: Option<f64>,
) -> PyResult<PyTrajectory> {
    let cfg = integrator_config(
        mode,
        dt,
        t_end,
        rel_tol,
        abs_tol,
        sample_stride,
        sample_interval,
    )?;
    let spec = problem.inner.spec.clone();
    let inner = py
        .detach(|| core_integrate(&spec, &cfg, &mut []))
        .map_err(py_err)?;
    Ok(PyTrajectory { inner })
}

/// Oracle, integration, convergence report, Lyapunov monitors and energy
/// check; returns the diagnostics document as a dict.
#[pyfunction]
#[pyo3(signature = (problem, t_end, dt=1e-2, mode="adaptive", rel_tol=1e-8, abs_tol=1e-8, sample_stride=1, sample_interval=None))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    problem: &PyProblem,
    t_end: f64,
    dt: f64,
    mode: &str,
    rel_tol: f64,
    abs_tol: f64,
    sample_stride: usize,
    sample_interval: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let cfg = integrator_config(
        mode,
        dt,
        t_end,
        rel_tol,
        abs_tol,
        sample_stride,
        sample_interval,
    )?;
    let inst = problem.inner.clone();
    let doc = py
        .detach(|| pipeline::execute(inst, &cfg).map(|o| output::diagnostics_json(&o)))
        .map_err(py_err)?;
    to_py(py, &doc)
}

/// `(eps0, a, b, c)` for a penalty Lipschitz constant `l_b`.
#[pyfunction]
fn lemma_constants(l_b: f64) -> PyResult<(f64, f64, f64, f64)> {
    let k = core_lemma_constants(l_b).map_err(py_err)?;
    Ok((k.eps0, k.a, k.b, k.c))
}

/// Runs the command-line interface with `args` (without the program name)
/// and returns its exit code.
#[pyfunction]
fn cli(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| pendyn_core::cli::run_from_args(std::iter::once("pendyn".to_string()).chain(args)))
}

#[pymodule]
fn pendyn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchedules>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(lemma_constants, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
