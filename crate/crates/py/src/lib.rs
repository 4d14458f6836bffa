use heatcascade::config::Settings;
use heatcascade::engine::{run_cascade, BaseCase, Disturbance, RunConfig};
use heatcascade::montecarlo::{run_batch, BatchConfig, CenterPolicy};
use heatcascade::Network;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn settings(config: Option<&str>) -> PyResult<Settings> {
    let s = match config {
        Some(text) => Settings::from_json(text).map_err(value_error)?,
        None => Settings::default(),
    };
    s.validate().map_err(value_error)?;
    Ok(s)
}

/// A loaded case with its solved base operating point.
///
/// `config` is a JSON settings document; omitted keys keep their defaults.
#[pyclass(frozen)]
struct Simulator {
    base: BaseCase,
    settings: Settings,
}

#[pymethods]
impl Simulator {
    #[new]
    #[pyo3(signature = (case=None, config=None))]
    fn new(case: Option<&str>, config: Option<&str>) -> PyResult<Self> {
        let settings = settings(config)?;
        let base = match case {
            Some(path) => {
                let net = Network::from_path(path).map_err(value_error)?;
                let pf = settings.model().map_err(value_error)?.pf;
                BaseCase::new(net, &pf).map_err(value_error)?
            }
            None => BaseCase::rts96(),
        };
        Ok(Simulator { base, settings })
    }

    #[getter]
    fn base_vsi(&self) -> f64 {
        self.base.vsi
    }

    #[getter]
    fn load_buses(&self) -> Vec<u32> {
        self.base.load_bus_ids()
    }

    /// Resolved settings as JSON.
    fn config(&self) -> String {
        self.settings.to_json()
    }

    /// One cascade; returns the trace as JSON.
    #[pyo3(signature = (center_bus, delta_t, gamma=None, seed=None))]
    fn simulate(
        &self,
        py: Python<'_>,
        center_bus: u32,
        delta_t: f64,
        gamma: Option<f64>,
        seed: Option<u64>,
    ) -> PyResult<String> {
        let cfg = RunConfig {
            params: self.settings.model().map_err(value_error)?,
            disturbance: Disturbance { center_bus, gamma: gamma.unwrap_or(self.settings.gamma), delta_t },
            seed: seed.unwrap_or(self.settings.seed),
        };
        let trace = py.detach(|| run_cascade(&self.base, &cfg)).map_err(value_error)?;
        Ok(trace.to_json())
    }

    /// Monte Carlo batch; returns `{"records": [...], "stats": {...}}` as
    /// JSON. A missing `center_bus` draws a load bus per run.
    #[pyo3(signature = (delta_t, runs, seed=None, gamma=None, center_bus=None, workers=None))]
    #[allow(clippy::too_many_arguments)]
    fn batch(
        &self,
        py: Python<'_>,
        delta_t: f64,
        runs: usize,
        seed: Option<u64>,
        gamma: Option<f64>,
        center_bus: Option<u32>,
        workers: Option<usize>,
    ) -> PyResult<String> {
        let center = center_bus.map_or(CenterPolicy::RandomLoadBus, CenterPolicy::Fixed);
        let mut cfg = BatchConfig::new(
            self.settings.model().map_err(value_error)?,
            gamma.unwrap_or(self.settings.gamma),
            delta_t,
            center,
            runs,
            seed.unwrap_or(self.settings.seed),
        );
        cfg.workers = workers.or(self.settings.workers);
        let b = py.detach(|| run_batch(&self.base, &cfg)).map_err(value_error)?;
        let doc = serde_json::json!({ "records": b.records, "stats": b.stats });
        Ok(doc.to_string())
    }
}

/// Default settings as JSON.
#[pyfunction]
fn default_config() -> String {
    Settings::default().to_json()
}

#[pymodule]
#[pyo3(name = "heatcascade")]
fn heatcascade_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Simulator>()?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    Ok(())
}
