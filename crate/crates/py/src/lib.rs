//! Python bindings: load a scenario, run it, compare policies and
//! summarize result CSVs.

use std::path::{Path, PathBuf};

use deasy_core::demand::load_demand;
use deasy_core::harness::{self, Variant};
use deasy_core::road_network::GridSpec;
use deasy_core::{MetricsReport, RoadGraph, ScenarioConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: deasy_core::Error) -> PyErr {
    match e {
        deasy_core::Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// A scenario configuration. Fields are read and changed through
/// `get`/`set` using the same keys as the text format.
#[pyclass(name = "Config", module = "deasy", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    text: String,
    base_dir: Option<PathBuf>,
    inner: ScenarioConfig,
}

impl PyConfig {
    fn from_text(text: String, base_dir: Option<PathBuf>) -> PyResult<Self> {
        let inner = ScenarioConfig::parse(&text, "<python>", base_dir.as_deref()).map_err(to_py)?;
        Ok(Self { text, base_dir, inner })
    }
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (text = String::new(), base_dir = None))]
    fn new(text: String, base_dir: Option<PathBuf>) -> PyResult<Self> {
        Self::from_text(text, base_dir)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| PyRuntimeError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_text(text, path.parent().map(Path::to_path_buf))
    }

    /// A copy with `key = value` applied on top.
    fn set(&self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<Self> {
        let value = value.str()?.to_string();
        Self::from_text(format!("{}\n{key} = {value}\n", self.text), self.base_dir.clone())
    }

    fn get(&self, key: &str) -> PyResult<String> {
        let prefix = format!("{key} = ");
        self.inner
            .to_text()
            .lines()
            .find_map(|l| l.strip_prefix(&prefix).map(str::to_owned))
            .ok_or_else(|| PyValueError::new_err(format!("unknown or unset key `{key}`")))
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(policy={}, dissemination={}, seed={})",
            self.inner.rerouting_policy.as_str(),
            self.inner.dissemination.as_str(),
            self.inner.seed
        )
    }
}

fn report_dict<'py>(py: Python<'py>, r: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("seed", r.seed)?;
    d.set_item("policy", r.policy.as_str())?;
    d.set_item("dissemination", r.dissemination.as_str())?;
    d.set_item("penetration_rate", r.penetration_rate)?;
    d.set_item("vehicles", r.vehicles)?;
    d.set_item("arrived", r.arrived)?;
    d.set_item("sim_end_s", r.sim_end_s)?;
    d.set_item("channel_busy_ratio", r.channel_busy_ratio)?;
    d.set_item("total_beacons", r.total_beacons)?;
    d.set_item("beacons_per_vehicle", r.beacons_per_vehicle)?;
    d.set_item("coverage", r.coverage)?;
    d.set_item("overhead", r.overhead)?;
    d.set_item("delay_s", r.delay_s)?;
    d.set_item("collisions", r.collisions)?;
    d.set_item("mac_drops", r.mac_drops)?;
    d.set_item("knowledge_episodes", r.knowledge_episodes)?;
    d.set_item("travel_distance_m", r.travel_distance_m)?;
    d.set_item("travel_time_s", r.travel_time_s)?;
    d.set_item("congestion_time_loss_s", r.congestion_time_loss_s)?;
    d.set_item("co2_g", r.co2_g)?;
    d.set_item("planning_time_index", r.planning_time_index)?;
    Ok(d)
}

/// Runs one scenario and returns its metrics as a dict.
#[pyfunction]
fn run<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.inner.clone();
    let report = py.detach(|| deasy_core::run_scenario(&cfg)).map_err(to_py)?;
    report_dict(py, &report)
}

/// Runs every policy against every seed on the config's network and
/// demand. Rows come back policy-major.
#[pyfunction]
#[pyo3(signature = (config, policies, seeds))]
fn compare<'py>(py: Python<'py>, config: &PyConfig, policies: Vec<String>, seeds: Vec<u64>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = config.inner.clone();
    let variants = policies
        .iter()
        .map(|p| p.parse().map(|pol| Variant::new(pol, cfg.dissemination)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    let reports = py
        .detach(|| {
            let graph = RoadGraph::from_file(&cfg.network_path)?;
            let demand = load_demand(&cfg.demand_path)?;
            harness::compare(&cfg, &graph, &demand, &variants, &seeds)
        })
        .map_err(to_py)?;
    reports.iter().map(|r| report_dict(py, r)).collect()
}

/// Text form of a rows×cols grid network.
#[pyfunction]
#[pyo3(signature = (rows, cols, block_m = 200.0))]
fn grid_network(rows: u32, cols: u32, block_m: f64) -> PyResult<String> {
    RoadGraph::manhattan_grid(&GridSpec::new(rows, cols, block_m)).map(|g| g.to_text()).map_err(to_py)
}

/// Per-group mean and 95% interval of a result CSV, as CSV text.
#[pyfunction]
fn summarize(csv_text: &str) -> PyResult<String> {
    harness::summarize_csv(csv_text, "<python>").map(|rows| harness::summary_to_csv(&rows)).map_err(to_py)
}

#[pymodule]
fn deasy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(grid_network, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    Ok(())
}
