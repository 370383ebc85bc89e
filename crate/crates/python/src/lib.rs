//! Python bindings for the `uwb_core` link simulator and optimizer.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde::Serialize;
use serde_json::Value;

use uwb_core::config::{load_config_with, parse_config, Mode, Overrides, ScenarioConfig};
use uwb_core::link::{oracle_comparison, simulate_link_with, throughput, SnrReport};
use uwb_core::nli::OracleOptions;
use uwb_core::pso::{pso_maximize, PsoConfig, PENALTY};
use uwb_core::savgol::{savgol_coefficients, smooth_values};
use uwb_core::stages::{evaluate_profiles, stage1_pump_and_uniform_lp, stage2_per_channel_lp};
use uwb_core::system::{LaunchProfile, LinkSpec};

fn py_err(e: uwb_core::Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_bound_py_any(py)?,
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_bound_py_any(py)?,
            None => n.as_f64().unwrap_or(f64::NAN).into_bound_py_any(py)?,
        },
        Value::String(s) => s.into_bound_py_any(py)?,
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialize<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &value)
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    match mode {
        "hybrid" => Ok(Mode::Hybrid),
        "lumped" => Ok(Mode::Lumped),
        other => Err(PyValueError::new_err(format!(
            "unknown mode {other:?}, expected \"hybrid\" or \"lumped\""
        ))),
    }
}

/// Per-channel SNR of one link evaluation.
#[pyclass(name = "SnrReport", module = "uwb_link", frozen)]
struct PySnrReport {
    inner: SnrReport,
}

#[pymethods]
impl PySnrReport {
    #[getter]
    fn wavelength_nm(&self) -> Vec<f64> {
        self.inner.wavelength_nm.clone()
    }

    #[getter]
    fn bands(&self) -> Vec<String> {
        self.inner.bands.iter().map(|b| b.to_string()).collect()
    }

    #[getter]
    fn snr_ase_db(&self) -> Vec<f64> {
        self.inner.snr_ase.clone()
    }

    #[getter]
    fn snr_nli_db(&self) -> Vec<f64> {
        self.inner.snr_nli.clone()
    }

    #[getter]
    fn snr_total_db(&self) -> Vec<f64> {
        self.inner.snr_total.clone()
    }

    #[getter]
    fn throughput_tbps(&self) -> f64 {
        self.inner.throughput_total
    }

    #[getter]
    fn n_spans(&self) -> usize {
        self.inner.n_spans
    }

    #[getter]
    fn mean_snr_db(&self) -> f64 {
        self.inner.mean_snr_total_db()
    }

    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        serialize(py, &self.inner.summary())
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __repr__(&self) -> String {
        format!(
            "SnrReport(channels={}, n_spans={}, throughput_tbps={:.3})",
            self.inner.snr_total.len(),
            self.inner.n_spans,
            self.inner.throughput_total
        )
    }
}

/// A validated scenario: link, engine settings and optimizer budgets.
#[pyclass(name = "Scenario", module = "uwb_link")]
struct PyScenario {
    config: ScenarioConfig,
}

impl PyScenario {
    fn link(&self) -> PyResult<LinkSpec> {
        self.config.link_spec().map_err(py_err)
    }
}

#[pymethods]
impl PyScenario {
    /// Defaults of `mode` ("hybrid" or "lumped").
    #[new]
    #[pyo3(signature = (mode = "hybrid"))]
    fn new(mode: &str) -> PyResult<Self> {
        Ok(Self {
            config: ScenarioConfig::defaults(parse_mode(mode)?),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (path, seed = None, n_spans = None))]
    fn from_file(path: PathBuf, seed: Option<u64>, n_spans: Option<usize>) -> PyResult<Self> {
        let overrides = Overrides {
            seed,
            n_spans,
            ..Default::default()
        };
        Ok(Self {
            config: load_config_with(&path, &overrides).map_err(py_err)?,
        })
    }

    /// Parses a JSON scenario; relative spectrum paths resolve against `base_dir`.
    #[staticmethod]
    #[pyo3(signature = (text, base_dir = None))]
    fn from_json(text: &str, base_dir: Option<PathBuf>) -> PyResult<Self> {
        let base = base_dir.unwrap_or_else(|| PathBuf::from("."));
        Ok(Self {
            config: parse_config(text, Path::new(&base), &Overrides::default()).map_err(py_err)?,
        })
    }

    /// The fully resolved scenario as JSON.
    fn to_json(&self) -> String {
        self.config.echo()
    }

    #[getter]
    fn n_spans(&self) -> usize {
        self.config.link.n_spans
    }

    #[setter]
    fn set_n_spans(&mut self, n: usize) -> PyResult<()> {
        let mut next = self.config.clone();
        next.link.n_spans = n;
        next.validate().map_err(py_err)?;
        self.config = next;
        Ok(())
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.config.optimizer.seed
    }

    #[getter]
    fn wavelength_nm(&self) -> PyResult<Vec<f64>> {
        let grid = self.config.grid().map_err(py_err)?;
        Ok((0..grid.len()).map(|k| grid.wavelength(k) * 1e9).collect())
    }

    #[getter]
    fn launch_dbm(&self) -> PyResult<Vec<f64>> {
        Ok(self.link()?.launch.per_channel_dbm)
    }

    /// Evaluates the link, optionally with a per-channel launch profile in dBm.
    #[pyo3(signature = (launch_dbm = None))]
    fn simulate(&self, py: Python<'_>, launch_dbm: Option<Vec<f64>>) -> PyResult<PySnrReport> {
        let mut link = self.link()?;
        if let Some(dbm) = launch_dbm {
            link.launch = LaunchProfile { per_channel_dbm: dbm };
        }
        let options = self.config.engine_options();
        let (report, _) = py
            .detach(|| simulate_link_with(&link, &options, None))
            .map_err(py_err)?;
        Ok(PySnrReport { inner: report })
    }

    /// Stage 1: pump powers (and optionally wavelengths) with a uniform launch power.
    fn optimize_pumps<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let link = self.link()?;
        let (settings, options) = (self.config.stage1_settings(), self.config.engine_options());
        let outcome = py
            .detach(|| stage1_pump_and_uniform_lp(&link, &settings, &options))
            .map_err(py_err)?;
        serialize(py, &outcome)
    }

    /// Stage 2 from the configured pumps and launch power, then the smoothing
    /// and full-link comparison. Returns `{"stage2": ..., "evaluation": ..., "smoothed_dbm": [...]}`.
    fn optimize_power<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let link = self.link()?;
        let options = self.config.engine_options();
        let settings = self.config.stage2_settings(link.grid.len());
        let sm = self.config.optimizer.smoothing.clone();
        let (outcome, evaluation, smoothed) = py
            .detach(|| {
                let outcome = stage2_per_channel_lp(&link, &settings, &options)?;
                let (evaluation, smoothed) =
                    evaluate_profiles(&link, &outcome.launch(), sm.window, sm.order, &options)?;
                Ok((outcome, evaluation, smoothed))
            })
            .map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("stage2", serialize(py, &outcome)?)?;
        out.set_item("evaluation", serialize(py, &evaluation)?)?;
        out.set_item("smoothed_dbm", smoothed.per_channel_dbm)?;
        Ok(out.into_any())
    }

    /// Closed-form NLI against the numerical oracle on `channels` evenly spread channels.
    #[pyo3(signature = (channels = 5))]
    fn oracle_check<'py>(&self, py: Python<'py>, channels: usize) -> PyResult<Bound<'py, PyAny>> {
        let link = self.link()?;
        let n = link.grid.len();
        if channels == 0 || channels > n.min(16) {
            return Err(PyValueError::new_err(format!("channels must lie in 1..={}", n.min(16))));
        }
        let picks: Vec<usize> = if channels == 1 {
            vec![n / 2]
        } else {
            (0..channels).map(|i| i * (n - 1) / (channels - 1)).collect()
        };
        let grid = link.grid.subset(&picks).map_err(py_err)?;
        let launch = LaunchProfile {
            per_channel_dbm: picks.iter().map(|&c| link.launch.per_channel_dbm[c]).collect(),
        };
        let sub = LinkSpec { grid, launch, ..link };
        let options = self.config.engine_options();
        let cmp = py
            .detach(|| oracle_comparison(&sub, &options, &OracleOptions::default()))
            .map_err(py_err)?;
        serialize(py, &cmp)
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(mode={:?}, n_spans={}, seed={})",
            self.config.mode, self.config.link.n_spans, self.config.optimizer.seed
        )
    }
}

/// Σ 2·Rs·log2(1 + SNR) in Tb/s for per-channel SNRs in dB.
#[pyfunction]
#[pyo3(name = "throughput")]
fn py_throughput(snr_db: Vec<f64>, symbol_rate_gbaud: f64) -> PyResult<f64> {
    let linear: Vec<f64> = snr_db.iter().map(|s| 10f64.powf(s / 10.0)).collect();
    uwb_core::link::throughput_linear(&linear, symbol_rate_gbaud * 1e9).map_err(py_err)
}

/// Centre Savitzky–Golay smoothing weights.
#[pyfunction]
#[pyo3(name = "savgol_coefficients")]
fn py_savgol_coefficients(window: usize, order: usize) -> PyResult<Vec<f64>> {
    savgol_coefficients(window, order).map_err(py_err)
}

/// Savitzky–Golay smoothing with truncated windows at the edges.
#[pyfunction]
#[pyo3(signature = (values, window = 7, order = 2))]
fn smooth(values: Vec<f64>, window: usize, order: usize) -> PyResult<Vec<f64>> {
    smooth_values(&values, window, order).map_err(py_err)
}

/// Maximizes `cost(list[float]) -> float` over a box with the global-best swarm.
/// Returns `(best_vector, best_objective, iteration_trace)`.
#[pyfunction]
#[pyo3(name = "pso_maximize", signature = (cost, lower, upper, particles = 50, iterations = 50, seed = 42))]
fn py_pso_maximize(
    py: Python<'_>,
    cost: Py<PyAny>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    particles: usize,
    iterations: usize,
    seed: u64,
) -> PyResult<(Vec<f64>, f64, Vec<f64>)> {
    let config = PsoConfig::new(particles, iterations, lower, upper, seed);
    let f = |x: &[f64]| {
        Python::attach(|py| {
            cost.call1(py, (x.to_vec(),))
                .and_then(|v| v.extract::<f64>(py))
                .unwrap_or(PENALTY)
        })
    };
    let result = py.detach(|| pso_maximize(f, &config, &[])).map_err(py_err)?;
    Ok((result.best_vector, result.best_objective, result.iteration_trace))
}

/// Throughput in Tb/s of per-channel SNRs in dB on the scenario's grid.
#[pyfunction]
fn grid_throughput(scenario: &PyScenario, snr_db: Vec<f64>) -> PyResult<f64> {
    let grid = scenario.config.grid().map_err(py_err)?;
    throughput(&snr_db, &grid).map_err(py_err)
}

#[pymodule]
fn uwb_link(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PySnrReport>()?;
    m.add_function(wrap_pyfunction!(py_throughput, m)?)?;
    m.add_function(wrap_pyfunction!(py_savgol_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(smooth, m)?)?;
    m.add_function(wrap_pyfunction!(py_pso_maximize, m)?)?;
    m.add_function(wrap_pyfunction!(grid_throughput, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
