//! Python module `airhockey`: environments, saved policies, training and
//! evaluation, datasets and a few numeric helpers.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use airhockey_core::datasets;
use airhockey_core::env::{self, EnvConfig, TaskId};
use airhockey_core::harness::{self, Algorithm, RunConfig, TableCell};
use airhockey_core::learn;
use airhockey_core::nn::{GaussianPolicy, PolicyFile};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any().unbind(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any().unbind()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any().unbind()
        }
    })
}

fn parse_task(task_id: &str) -> PyResult<TaskId> {
    task_id.parse().map_err(value_err)
}

/// One simulated task instance.
#[pyclass(name = "Env", unsendable)]
struct PyEnv {
    inner: env::Env,
}

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (task_id, seed = 0, config_json = None))]
    fn new(task_id: &str, seed: u64, config_json: Option<&str>) -> PyResult<Self> {
        let config = match config_json {
            Some(text) => Some(serde_json::from_str::<EnvConfig>(text).map_err(value_err)?),
            None => None,
        };
        Ok(Self {
            inner: env::make_task(task_id, config, seed).map_err(value_err)?,
        })
    }

    fn reset(&mut self) -> Vec<f64> {
        self.inner.reset()
    }

    /// Returns `(observation, reward, done, info)`.
    fn step(&mut self, py: Python<'_>, action: (f64, f64)) -> PyResult<(Vec<f64>, f64, bool, Py<PyAny>)> {
        let r = self.inner.step([action.0, action.1]).map_err(runtime_err)?;
        let info = serde_json::to_value(&r.info).map_err(runtime_err)?;
        Ok((r.observation, r.reward, r.done, to_py(py, &info)?))
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    #[getter]
    fn task_id(&self) -> String {
        self.inner.spec().task_id.to_string()
    }

    #[getter]
    fn obs_layout(&self) -> Vec<String> {
        self.inner.spec().obs_layout()
    }

    /// Current world state as canonical JSON.
    fn world_json(&self) -> String {
        self.inner.world().to_canonical_json()
    }

    fn config_json(&self) -> String {
        serde_json::to_string(self.inner.config()).expect("config serializes")
    }
}

/// A policy loaded from a saved policy file.
#[pyclass(name = "Policy")]
struct PyPolicy {
    inner: GaussianPolicy,
    obs_layout: Vec<String>,
}

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = PolicyFile::load(&path).map_err(value_err)?;
        Ok(Self {
            inner: file.to_policy().map_err(value_err)?,
            obs_layout: file.obs_layout,
        })
    }

    /// Deterministic action (the policy mean).
    fn act(&self, obs: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.mean_action(&obs).map_err(value_err)
    }

    fn log_prob(&self, obs: Vec<f64>, action: Vec<f64>) -> PyResult<f64> {
        self.inner.log_prob(&obs, &action).map_err(value_err)
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    #[getter]
    fn obs_layout(&self) -> Vec<String> {
        self.obs_layout.clone()
    }
}

#[pyfunction]
fn task_ids() -> Vec<String> {
    TaskId::ALL.iter().map(|t| t.to_string()).collect()
}

#[pyfunction]
fn task_catalog(py: Python<'_>) -> PyResult<Py<PyAny>> {
    to_py(py, &env::task_catalog())
}

#[pyfunction]
fn expectile_loss(u: f64, tau: f64) -> f64 {
    learn::expectile_loss(u, tau)
}

/// Returns `(advantages, returns)`; `values` has one more entry than `rewards`.
#[pyfunction]
fn compute_gae(rewards: Vec<f64>, values: Vec<f64>, dones: Vec<bool>, gamma: f64, lam: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    learn::compute_gae(&rewards, &values, &dones, gamma, lam).map_err(value_err)
}

/// Trains from a (possibly partial) JSON run config; returns the train report.
#[pyfunction]
fn train(py: Python<'_>, config_json: &str) -> PyResult<Py<PyAny>> {
    let cfg = RunConfig::from_json_str(config_json).map_err(value_err)?;
    let art = py.detach(|| harness::train(&cfg)).map_err(runtime_err)?;
    to_py(py, &serde_json::to_value(&art).map_err(runtime_err)?)
}

#[pyfunction]
#[pyo3(signature = (policy_path, task_id, episodes = 50, seeds = vec![0]))]
fn evaluate(py: Python<'_>, policy_path: PathBuf, task_id: &str, episodes: usize, seeds: Vec<u64>) -> PyResult<Py<PyAny>> {
    let task = parse_task(task_id)?;
    let rep = py
        .detach(|| harness::evaluate(&policy_path, task, episodes, &seeds))
        .map_err(runtime_err)?;
    to_py(py, &serde_json::to_value(&rep).map_err(runtime_err)?)
}

/// `cells` are `(task_id, algorithm, success)` with algorithm one of
/// bc, iql, ppo, sac_her. Returns `(markdown, csv)`.
#[pyfunction]
fn results_table(cells: Vec<(String, String, f64)>) -> PyResult<(String, String)> {
    let mut parsed = Vec::with_capacity(cells.len());
    for (task, algo, success) in cells {
        let algorithm: Algorithm = serde_json::from_value(serde_json::Value::String(algo)).map_err(value_err)?;
        parsed.push(TableCell {
            task_id: parse_task(&task)?,
            algorithm,
            success,
        });
    }
    let t = harness::emit_results_table(&parsed);
    Ok((t.markdown, t.csv))
}

#[pyfunction]
fn verify_replay(py: Python<'_>, path: PathBuf) -> PyResult<Py<PyAny>> {
    let rep = datasets::verify_replay(&path).map_err(value_err)?;
    to_py(py, &serde_json::to_value(&rep).map_err(runtime_err)?)
}

/// Index of a dataset directory, optionally filtered to one task.
#[pyfunction]
#[pyo3(signature = (directory, task_id = None))]
fn read_dataset(py: Python<'_>, directory: PathBuf, task_id: Option<&str>) -> PyResult<Py<PyAny>> {
    let task = task_id.map(parse_task).transpose()?;
    let ds = datasets::read_dataset(&directory, task).map_err(value_err)?;
    to_py(py, &serde_json::to_value(&ds.index).map_err(runtime_err)?)
}

#[pymodule]
fn airhockey(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnv>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(task_ids, m)?)?;
    m.add_function(wrap_pyfunction!(task_catalog, m)?)?;
    m.add_function(wrap_pyfunction!(expectile_loss, m)?)?;
    m.add_function(wrap_pyfunction!(compute_gae, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(results_table, m)?)?;
    m.add_function(wrap_pyfunction!(verify_replay, m)?)?;
    m.add_function(wrap_pyfunction!(read_dataset, m)?)?;
    Ok(())
}
