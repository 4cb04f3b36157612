//! Python bindings. Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pythonize::{depythonize, pythonize};
use serde::Serialize;

use edgeprune::dnn_verify::{run_verification, NetSpec};
use edgeprune::harness::{csv_string, run_sweep, Config, RunOptions};
use edgeprune::rd_bounds;
use edgeprune::sca_solver::{benchmark_setup, grid_oracle as oracle, solve_benchmark, BenchmarkScheme, ScaOptions};
use edgeprune::system_model::{evaluate, is_feasible};
use edgeprune::weight_stats::{compare_fits as fits, WeightSample};
use edgeprune::{Decision, Error};

create_exception!(edgeprune_py, EdgepruneError, PyException);
create_exception!(edgeprune_py, InfeasibleError, EdgepruneError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Infeasible(_) => InfeasibleError::new_err(e.to_string()),
        Error::InvalidField { .. } | Error::Parse { .. } | Error::DimensionMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => EdgepruneError::new_err(e.to_string()),
    }
}

fn to_obj<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    pythonize(py, v).map_err(|e| EdgepruneError::new_err(e.to_string()))
}

fn parse_scheme(name: &str) -> PyResult<BenchmarkScheme> {
    name.parse().map_err(to_py)
}

/// One device/server deployment: channel, processors, model and budgets.
#[pyclass(name = "Scenario", module = "edgeprune_py", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: edgeprune::Scenario,
    raw_input_bits: Option<f64>,
    solver: ScaOptions,
}

#[pymethods]
impl PyScenario {
    /// Loads the scenario described by a JSON config file.
    #[staticmethod]
    fn from_config(path: PathBuf) -> PyResult<Self> {
        let cfg = Config::load(&path).map_err(to_py)?;
        Self::from_cfg(&cfg)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let cfg = Config::from_json(text, "<string>").map_err(to_py)?;
        Self::from_cfg(&cfg)
    }

    #[staticmethod]
    fn from_dict(d: &Bound<'_, PyAny>) -> PyResult<Self> {
        let v: serde_json::Value = depythonize(d).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Self::from_json(&v.to_string())
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_obj(py, &self.inner)
    }

    #[getter]
    fn t_max(&self) -> f64 {
        self.inner.qos.t_max
    }

    #[setter]
    fn set_t_max(&mut self, v: f64) -> PyResult<()> {
        self.edit(|s| s.qos.t_max = v)
    }

    #[getter]
    fn e_max(&self) -> f64 {
        self.inner.qos.e_max
    }

    #[setter]
    fn set_e_max(&mut self, v: f64) -> PyResult<()> {
        self.edit(|s| s.qos.e_max = v)
    }

    #[getter]
    fn rho_min(&self) -> f64 {
        self.inner.rho_min
    }

    /// Delay, energy and distortion bound of a decision.
    #[pyo3(signature = (rho, f_device, p_tx, rho_server, f_server))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        rho: f64,
        f_device: f64,
        p_tx: f64,
        rho_server: f64,
        f_server: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let dec = Decision {
            rho,
            f_device,
            p_tx,
            rho_server,
            f_server,
        };
        let m = evaluate(&dec, &self.inner);
        let feas = is_feasible(&dec, &self.inner);
        to_obj(py, &serde_json::json!({ "metrics": m, "feasibility": feas }))
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(q={}, s={}, t_max={}, e_max={})",
            self.inner.model.q_device_params, self.inner.model.s_server_params, self.inner.qos.t_max, self.inner.qos.e_max
        )
    }
}

impl PyScenario {
    fn from_cfg(cfg: &Config) -> PyResult<Self> {
        Ok(PyScenario {
            inner: cfg.scenario().map_err(to_py)?,
            raw_input_bits: cfg.raw_input_bits(),
            solver: cfg.solver.clone(),
        })
    }

    fn edit(&mut self, f: impl FnOnce(&mut edgeprune::Scenario)) -> PyResult<()> {
        let mut s = self.inner.clone();
        f(&mut s);
        s.validate().map_err(to_py)?;
        self.inner = s;
        Ok(())
    }
}

/// Solves the resource allocation for one benchmark scheme and returns the
/// full trace. Infeasible problems come back with `status == "infeasible"`.
#[pyfunction]
#[pyo3(signature = (scenario, scheme = "joint", epsilon = None, max_iter = None))]
fn optimize<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    scheme: &str,
    epsilon: Option<f64>,
    max_iter: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let kind = parse_scheme(scheme)?;
    let mut opts = scenario.solver.clone();
    if let Some(e) = epsilon {
        opts.epsilon = e;
    }
    if let Some(m) = max_iter {
        opts.max_iter = m;
    }
    let tr = py
        .detach(|| solve_benchmark(kind, &scenario.inner, &opts, scenario.raw_input_bits))
        .map_err(to_py)?;
    let best = tr.best().cloned();
    let out = serde_json::json!({
        "status": tr.status,
        "objective": best.as_ref().map(|b| b.objective),
        "decision": best.as_ref().map(|b| b.decision),
        "iterates": tr.iterates,
        "diagnostics": tr.diagnostics,
        "init": tr.init,
        "notes": tr.notes,
    });
    to_obj(py, &out)
}

/// Exhaustive grid search over the decision box.
#[pyfunction]
#[pyo3(signature = (scenario, points = 15, scheme = "joint"))]
fn grid_oracle<'py>(py: Python<'py>, scenario: &PyScenario, points: usize, scheme: &str) -> PyResult<Bound<'py, PyAny>> {
    let kind = parse_scheme(scheme)?;
    let (sc, pins) = benchmark_setup(kind, &scenario.inner, scenario.raw_input_bits).map_err(to_py)?;
    let res = py.detach(|| oracle(&sc, points, &pins)).map_err(to_py)?;
    to_obj(py, &res)
}

/// Runs the sweep declared in a config file and returns the CSV text.
#[pyfunction]
#[pyo3(signature = (config_path, workers = 0))]
fn sweep_csv(py: Python<'_>, config_path: PathBuf, workers: usize) -> PyResult<String> {
    let cfg = Config::load(&config_path).map_err(to_py)?;
    let opts = RunOptions {
        workers,
        ..RunOptions::default()
    };
    py.detach(|| {
        let rows = run_sweep(&cfg, &opts)?;
        csv_string(&rows, false)
    })
    .map_err(to_py)
}

/// Distortion lower bound of the pruned model at the given ratios.
#[pyfunction]
fn distortion_lower_bound(scenario: &PyScenario, rho: f64, rho_server: f64) -> PyResult<f64> {
    rd_bounds::distortion_lower_bound(rho, rho_server, &scenario.inner.model).map_err(to_py)
}

#[pyfunction]
fn phi_of_one(dim: f64) -> f64 {
    rd_bounds::phi_of_one(dim)
}

/// Rate lower bound of independent Laplacian coordinates with rate
/// parameters `scales`.
#[pyfunction]
fn parallel_laplacian_rate_bound<'py>(py: Python<'py>, scales: Vec<f64>, distortion: f64) -> PyResult<Bound<'py, PyAny>> {
    let r = rd_bounds::parallel_laplacian_rate_bound(&scales, distortion).map_err(to_py)?;
    to_obj(py, &r)
}

/// Laplace and Gaussian maximum-likelihood fits of a weight sample.
#[pyfunction]
fn compare_fits<'py>(py: Python<'py>, values: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let rep = fits(&WeightSample::new(values)).map_err(to_py)?;
    let mut v = serde_json::to_value(rep).expect("plain struct");
    v["preferred"] = if rep.prefers_laplace() { "laplace" } else { "gaussian" }.into();
    to_obj(py, &v)
}

/// Output-distortion bound checks on a network spec file.
#[pyfunction]
#[pyo3(signature = (net_spec_path, seed = 0))]
fn verify_bounds<'py>(py: Python<'py>, net_spec_path: PathBuf, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let spec = NetSpec::load(&net_spec_path).map_err(to_py)?;
    let summary = py
        .detach(|| {
            let net = spec.build()?;
            run_verification(&net, &spec.verify, seed)
        })
        .map_err(to_py)?;
    to_obj(py, &summary)
}

#[pymodule]
pub fn edgeprune_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add("EdgepruneError", m.py().get_type::<EdgepruneError>())?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(grid_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_csv, m)?)?;
    m.add_function(wrap_pyfunction!(distortion_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(phi_of_one, m)?)?;
    m.add_function(wrap_pyfunction!(parallel_laplacian_rate_bound, m)?)?;
    m.add_function(wrap_pyfunction!(compare_fits, m)?)?;
    m.add_function(wrap_pyfunction!(verify_bounds, m)?)?;
    m.add("REPORT_NOTE", edgeprune::harness::REPORT_NOTE)?;
    Ok(())
}
