//! Python bindings: scenarios, replications, experiment cells and the
//! metric helpers.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use holdsim::control::StrategySpec;
use holdsim::engine::ReplicationOutput;
use holdsim::experiment::{decision_log_tsv, run_cell, table_cells, Cell, RunOptions};
use holdsim::headway::expected_dwell_fixed_point;
use holdsim::metrics::{self, ReplicationMetrics};
use holdsim::scenario::{load_scenario, load_scenario_ref, BunchingParams, Scenario, StrategyKind};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(xs) => {
            let list = PyList::empty(py);
            for x in xs {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(m) => {
            let d = PyDict::new(py);
            for (k, x) in m {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn serialize<'py>(py: Python<'py>, x: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(x).map_err(value_err)?)
}

/// A validated bus line.
#[pyclass(name = "Scenario", frozen, module = "holdsim_py")]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    /// Built-in fixture by name.
    #[staticmethod]
    #[pyo3(signature = (name = "he2019"))]
    fn fixture(name: &str) -> PyResult<Self> {
        load_scenario_ref(&format!("builtin:{name}")).map(|inner| Self { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        load_scenario(text).map(|inner| Self { inner }).map_err(value_err)
    }

    /// A file path or `builtin:<name>`.
    #[staticmethod]
    fn load(reference: &str) -> PyResult<Self> {
        load_scenario_ref(reference).map(|inner| Self { inner }).map_err(value_err)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn n_buses(&self) -> usize {
        self.inner.n_buses()
    }

    #[getter]
    fn n_stops(&self) -> usize {
        self.inner.n_stops()
    }

    #[getter]
    fn loop_length_m(&self) -> f64 {
        self.inner.loop_length_m()
    }

    #[getter]
    fn observation_period_s(&self) -> f64 {
        self.inner.observation_period_s
    }

    #[getter]
    fn control_stops(&self) -> Vec<usize> {
        self.inner.control_stops()
    }

    /// Expected system headway H̃ in seconds.
    fn expected_headway(&self) -> PyResult<f64> {
        expected_dwell_fixed_point(&self.inner).map(|(_, h)| h).map_err(value_err)
    }

    fn with_control_stops(&self, stops: Vec<usize>) -> PyResult<Self> {
        self.inner.with_control_stops(&stops).map(|inner| Self { inner }).map_err(value_err)
    }

    fn with_action_set(&self, holding_times_s: Vec<f64>) -> PyResult<Self> {
        self.inner.with_action_set(&holding_times_s).map(|inner| Self { inner }).map_err(value_err)
    }

    fn with_observation_period(&self, seconds: f64) -> Self {
        Self { inner: self.inner.with_observation_period(seconds) }
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(buses={}, stops={}, length_m={})",
            self.inner.n_buses(),
            self.inner.n_stops(),
            self.inner.loop_length_m()
        )
    }
}

/// Output of one seeded replication.
#[pyclass(name = "Replication", frozen, module = "holdsim_py")]
struct PyReplication {
    out: ReplicationOutput,
    metrics: ReplicationMetrics,
}

#[pymethods]
impl PyReplication {
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        serialize(py, &self.metrics)
    }

    #[getter]
    fn n_ctps(&self) -> usize {
        self.out.ctps.len()
    }

    #[getter]
    fn expected_headway(&self) -> f64 {
        self.out.esh_s
    }

    /// Headway standard deviation at every CTP.
    fn sigma_stream(&self) -> Vec<f64> {
        self.out.ctps.iter().map(|c| c.snapshot.sigma).collect()
    }

    fn holdings(&self) -> Vec<f64> {
        self.out.ctps.iter().map(|c| c.holding_s).collect()
    }

    fn trajectory_tsv(&self) -> String {
        self.out.log.trajectory_tsv()
    }

    fn event_log_tsv(&self) -> String {
        self.out.log.to_tsv()
    }

    fn decision_log_tsv(&self) -> String {
        decision_log_tsv(&self.out)
    }
}

fn spec(scenario: &Scenario, strategy: &str, stages: Option<usize>, gamma: Option<f64>) -> PyResult<StrategySpec> {
    let mut s = StrategySpec::from_scenario(scenario);
    s.kind = strategy.parse::<StrategyKind>().map_err(value_err)?;
    if let Some(n) = stages {
        s.stages = n;
    }
    if let Some(g) = gamma {
        s.gamma = g;
    }
    Ok(s)
}

/// Runs one replication; the GIL is released while it runs.
#[pyfunction]
#[pyo3(signature = (scenario, strategy = "nsla", stages = None, gamma = None, seed = 1, replication = 0))]
fn run_replication(
    py: Python<'_>,
    scenario: &PyScenario,
    strategy: &str,
    stages: Option<usize>,
    gamma: Option<f64>,
    seed: u64,
    replication: u64,
) -> PyResult<PyReplication> {
    let s = &scenario.inner;
    let spec = spec(s, strategy, stages, gamma)?;
    Cell::new(spec.clone(), 1, seed).validate().map_err(value_err)?;
    py.detach(|| {
        let mut strategy = spec.build();
        let out = holdsim::engine::run_replication(s, strategy.as_mut(), seed, replication, s.observation_period_s)
            .map_err(value_err)?;
        let metrics = ReplicationMetrics::from_output(&out, s.bunching).map_err(value_err)?;
        Ok(PyReplication { out, metrics })
    })
}

/// Runs `reps` replications and returns the summary row as a dict.
#[pyfunction]
#[pyo3(signature = (scenario, strategy = "nsla", stages = None, gamma = None, reps = 1, seed = 1, parallel = 0))]
#[allow(clippy::too_many_arguments)]
fn run_experiment<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    strategy: &str,
    stages: Option<usize>,
    gamma: Option<f64>,
    reps: usize,
    seed: u64,
    parallel: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let s = &scenario.inner;
    let cell = Cell::new(spec(s, strategy, stages, gamma)?, reps, seed);
    let opts = RunOptions { parallel, ..RunOptions::default() };
    let row = py.detach(|| run_cell(s, &cell, opts, None).map(|o| o.row)).map_err(|e| value_err(format!("{e:#}")))?;
    serialize(py, &row)
}

/// One of the canned sweeps (`table6`, `table8`, `table11`) over a scenario.
#[pyfunction]
#[pyo3(signature = (name, scenario, reps = 50, seed = 1, parallel = 0))]
fn table<'py>(
    py: Python<'py>,
    name: &str,
    scenario: &PyScenario,
    reps: usize,
    seed: u64,
    parallel: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let s = &scenario.inner;
    let cells = table_cells(name, s, reps, seed).map_err(value_err)?;
    let opts = RunOptions { parallel, ..RunOptions::default() };
    let rows = py
        .detach(|| cells.iter().map(|c| run_cell(s, c, opts, None).map(|o| o.row)).collect::<Result<Vec<_>, _>>())
        .map_err(|e| value_err(format!("{e:#}")))?;
    serialize(py, &rows)
}

/// `(c_H, sigma_c)`; `sigma_c` is None for a single value.
#[pyfunction]
fn stability_index(sigmas: Vec<f64>) -> PyResult<(f64, Option<f64>)> {
    metrics::stability_index(&sigmas).map_err(value_err)
}

/// `(a_sum, a_mean, a_sd)` over all CTPs.
#[pyfunction]
fn holding_stats(holds: Vec<f64>) -> (f64, f64, f64) {
    let h = metrics::holding_stats(&holds);
    (h.sum, h.mean, h.sd)
}

#[pyfunction]
#[pyo3(signature = (min_headways, expected_headway, threshold_frac = 0.15, window_ctps = 20))]
fn detect_bunching(min_headways: Vec<f64>, expected_headway: f64, threshold_frac: f64, window_ctps: usize) -> bool {
    metrics::detect_bunching(min_headways, expected_headway, BunchingParams { threshold_frac, window_ctps })
}

#[pymodule]
fn holdsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyReplication>()?;
    m.add_function(wrap_pyfunction!(run_replication, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(table, m)?)?;
    m.add_function(wrap_pyfunction!(stability_index, m)?)?;
    m.add_function(wrap_pyfunction!(holding_stats, m)?)?;
    m.add_function(wrap_pyfunction!(detect_bunching, m)?)?;
    Ok(())
}
