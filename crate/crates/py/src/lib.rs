//! Python bindings: a stepping environment, baseline and checkpoint
//! evaluation, training from an experiment file and synthetic data
//! generation. Structured results cross the boundary as JSON-decoded
//! Python objects.

use std::path::PathBuf;

use fleetlab::baselines::BaselineSpec;
use fleetlab::harness::{self, build_scenario, Domain, ExperimentConfig, PolicySource, ScenarioOptions, SynthConfig};
use fleetlab::sim::{Engine, Poll};
use fleetlab::Error;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    let msg = format!("{}: {e}", e.kind());
    match e {
        Error::Io { .. } => PyIOError::new_err(msg),
        Error::InvalidConfig(_) | Error::IllegalAction(_) | Error::Shape(_) | Error::Parse { .. } => {
            PyValueError::new_err(msg)
        }
        _ => PyRuntimeError::new_err(msg),
    }
}

fn to_object<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[allow(clippy::too_many_arguments)]
fn scenario(
    domain: &str,
    variant: Option<&str>,
    drivers: Option<usize>,
    horizon: Option<f64>,
    k: Option<usize>,
    orders_file: Option<PathBuf>,
    grid_file: Option<PathBuf>,
) -> PyResult<fleetlab::scenarios::Scenario> {
    let domain: Domain = domain.parse().map_err(to_py)?;
    let opts = ScenarioOptions {
        drivers,
        horizon,
        k,
        orders_file,
        grid_file,
        ..ScenarioOptions::default()
    };
    build_scenario(domain, variant, &opts).map_err(to_py)
}

/// One simulator instance polled decision by decision.
#[pyclass(unsendable)]
struct Env {
    engine: Engine,
    poll: Poll,
}

#[pymethods]
impl Env {
    #[new]
    #[pyo3(signature = (domain, variant=None, drivers=None, horizon=None, k=None, orders_file=None, grid_file=None))]
    fn new(
        domain: &str,
        variant: Option<&str>,
        drivers: Option<usize>,
        horizon: Option<f64>,
        k: Option<usize>,
        orders_file: Option<PathBuf>,
        grid_file: Option<PathBuf>,
    ) -> PyResult<Self> {
        let s = scenario(domain, variant, drivers, horizon, k, orders_file, grid_file)?;
        Ok(Self {
            engine: Engine::new(s).map_err(to_py)?,
            poll: Poll::Done,
        })
    }

    /// Start an episode; returns the first observation or None.
    fn reset(&mut self, py: Python<'_>, seed: u64) -> PyResult<Option<Py<PyAny>>> {
        self.poll = self.engine.reset(seed).map_err(to_py)?;
        self.observation(py)
    }

    /// Current observation as a dict, or None once the episode is over.
    fn observation(&self, py: Python<'_>) -> PyResult<Option<Py<PyAny>>> {
        self.poll.observation().map(|o| to_object(py, o)).transpose()
    }

    /// Size of the current action set (0 when done).
    fn num_actions(&self) -> usize {
        self.poll.observation().map_or(0, |o| o.num_actions())
    }

    /// Apply the `index`-th action; returns (reward, next observation or None, elapsed).
    fn step(&mut self, py: Python<'_>, index: usize) -> PyResult<(f64, Option<Py<PyAny>>, f64)> {
        let obs = self
            .poll
            .observation()
            .ok_or_else(|| to_py(Error::NoPendingDecision))?;
        let action = obs
            .action(index)
            .ok_or_else(|| to_py(Error::IllegalAction(format!("index {index} of {}", obs.num_actions()))))?;
        let out = self.engine.step(action).map_err(to_py)?;
        self.poll = out.next;
        Ok((out.reward, self.observation(py)?, out.elapsed))
    }

    fn done(&self) -> bool {
        self.poll.is_done()
    }

    fn now(&self) -> f64 {
        self.engine.now()
    }

    /// Episode bookkeeping so far.
    fn stats(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, self.engine.stats())
    }
}

/// Evaluate a baseline (`policy`) or a checkpoint file (`checkpoint`).
#[pyfunction]
#[pyo3(signature = (domain, policy=None, checkpoint=None, episodes=5, seed=0, variant=None, drivers=None, horizon=None, k=None, orders_file=None, grid_file=None))]
#[allow(clippy::too_many_arguments)]
fn evaluate(
    py: Python<'_>,
    domain: &str,
    policy: Option<&str>,
    checkpoint: Option<PathBuf>,
    episodes: usize,
    seed: u64,
    variant: Option<&str>,
    drivers: Option<usize>,
    horizon: Option<f64>,
    k: Option<usize>,
    orders_file: Option<PathBuf>,
    grid_file: Option<PathBuf>,
) -> PyResult<Py<PyAny>> {
    let source = match (policy, checkpoint) {
        (Some(p), None) => PolicySource::Baseline(p.parse::<BaselineSpec>().map_err(to_py)?),
        (None, Some(c)) => PolicySource::Checkpoint(c),
        _ => return Err(PyValueError::new_err("pass exactly one of policy and checkpoint")),
    };
    let s = scenario(domain, variant, drivers, horizon, k, orders_file, grid_file)?;
    let summary = py
        .detach(|| harness::run_eval(&source, &s, episodes, seed))
        .map_err(to_py)?;
    to_object(py, &summary)
}

/// Run an experiment described by TOML text; returns the summary.
#[pyfunction]
fn train(py: Python<'_>, config_toml: &str) -> PyResult<Py<PyAny>> {
    let cfg = ExperimentConfig::from_toml_str(config_toml).map_err(to_py)?;
    let summary = py.detach(|| harness::run_train(&cfg)).map_err(to_py)?;
    to_object(py, &summary)
}

/// Write `orders.csv` and `grid.txt` under `out`.
#[pyfunction]
#[pyo3(signature = (out, seed=0, days=30, daily_orders=2000.0))]
fn gen_data(py: Python<'_>, out: PathBuf, seed: u64, days: usize, daily_orders: f64) -> PyResult<Py<PyAny>> {
    let o = harness::gen_synthetic_historical(&SynthConfig::new(days, daily_orders), seed, &out).map_err(to_py)?;
    to_object(py, &o)
}

/// Names of the six baseline policies.
#[pyfunction]
fn baselines() -> Vec<String> {
    BaselineSpec::ALL.iter().map(ToString::to_string).collect()
}

#[pymodule]
fn pyfleetlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Env>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(gen_data, m)?)?;
    m.add_function(wrap_pyfunction!(baselines, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
