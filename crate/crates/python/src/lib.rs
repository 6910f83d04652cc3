//! Python bindings for `cogrelay`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cogrelay::experiment::{self, ExperimentSpec, Method};
use cogrelay::optimizer::{self, OptimizerConfig, QosSpec};
use cogrelay::rates::{self, RateReport, SlotRates};
use cogrelay::sim::{self, Estimate, RelayMode, SimConfig};
use cogrelay::{Decoding, OutageMatrix, SensingErrorParams, Strategy, StrategyParams, TrafficParams};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn strategy(name: &str) -> PyResult<Strategy> {
    name.parse().map_err(value_error)
}

/// Per-link outage probabilities.
#[pyclass(name = "Outages", from_py_object)]
#[derive(Clone)]
struct PyOutages(OutageMatrix);

#[pymethods]
impl PyOutages {
    #[new]
    #[pyo3(signature = (p_pd, s_sd, p_relay=vec![], s_relay=vec![], relay_pd=vec![], relay_sd=vec![]))]
    fn new(
        p_pd: f64,
        s_sd: f64,
        p_relay: Vec<f64>,
        s_relay: Vec<f64>,
        relay_pd: Vec<f64>,
        relay_sd: Vec<f64>,
    ) -> PyResult<Self> {
        let o = OutageMatrix {
            p_pd,
            s_sd,
            p_relay,
            s_relay,
            relay_pd,
            relay_sd,
        };
        o.validate().map_err(value_error)?;
        Ok(Self(o))
    }

    #[getter]
    fn n_relays(&self) -> usize {
        self.0.n_relays()
    }

    #[getter]
    fn p_pd(&self) -> f64 {
        self.0.p_pd
    }

    #[getter]
    fn s_sd(&self) -> f64 {
        self.0.s_sd
    }

    #[getter]
    fn p_relay(&self) -> Vec<f64> {
        self.0.p_relay.clone()
    }

    #[getter]
    fn s_relay(&self) -> Vec<f64> {
        self.0.s_relay.clone()
    }

    /// `(mu_p, mu_s)` bounds reached with full acceptance.
    fn max_service_rates(&self, strategy_name: &str, lambda_p: f64) -> PyResult<(f64, f64)> {
        rates::max_service_rates(&self.0, TrafficParams::new(lambda_p, 0.0), strategy(strategy_name)?)
            .map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!("Outages({:?})", self.0)
    }
}

/// Relay miss-detection and false-alarm probabilities.
#[pyclass(name = "Sensing", from_py_object)]
#[derive(Clone)]
struct PySensing(SensingErrorParams);

#[pymethods]
impl PySensing {
    #[new]
    fn new(p_md_p: Vec<f64>, p_md_s: Vec<f64>, p_fa: Vec<f64>) -> PyResult<Self> {
        let se = SensingErrorParams { p_md_p, p_md_s, p_fa };
        se.validate().map_err(value_error)?;
        Ok(Self(se))
    }
}

/// Strategy parameters. OD orderings are uniform over all rankings unless
/// produced by the optimizer.
#[pyclass(name = "Params", from_py_object)]
#[derive(Clone)]
struct PyParams(StrategyParams);

#[pymethods]
impl PyParams {
    #[staticmethod]
    fn uniform(strategy_name: &str, n_relays: usize) -> PyResult<Self> {
        Ok(Self(StrategyParams::uniform(strategy(strategy_name)?, n_relays)))
    }

    #[getter]
    fn strategy(&self) -> &'static str {
        self.0.strategy().short_name()
    }

    #[getter]
    fn omega(&self) -> Vec<f64> {
        self.0.omega.clone()
    }

    #[setter]
    fn set_omega(&mut self, v: Vec<f64>) {
        self.0.omega = v;
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.0.alpha.clone()
    }

    #[setter]
    fn set_alpha(&mut self, v: Vec<f64>) {
        self.0.alpha = v;
    }

    #[getter]
    fn f_p(&self) -> Vec<f64> {
        self.0.f_p.clone()
    }

    #[setter]
    fn set_f_p(&mut self, v: Vec<f64>) {
        self.0.f_p = v;
    }

    #[getter]
    fn f_s(&self) -> Vec<f64> {
        self.0.f_s.clone()
    }

    #[setter]
    fn set_f_s(&mut self, v: Vec<f64>) {
        self.0.f_s = v;
    }

    /// Decoding assignment; `None` for OD.
    #[getter]
    fn beta(&self) -> Option<Vec<f64>> {
        self.0.assignment()
    }

    #[setter]
    fn set_beta(&mut self, v: Vec<f64>) -> PyResult<()> {
        match &mut self.0.decoding {
            Decoding::Assigned { beta } => {
                *beta = v;
                Ok(())
            }
            _ => Err(PyValueError::new_err("beta applies to the rd strategy only")),
        }
    }

    fn validate(&self) -> PyResult<()> {
        self.0.validate().map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!(
            "Params(strategy={}, omega={:?}, alpha={:?}, f_p={:?}, f_s={:?})",
            self.strategy(),
            self.0.omega,
            self.0.alpha,
            self.0.f_p,
            self.0.f_s
        )
    }
}

fn report_dict<'py>(py: Python<'py>, r: &RateReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mu_p", r.mu_p)?;
    d.set_item("mu_s", r.mu_s)?;
    d.set_item("pi_p0", r.pi_p0)?;
    d.set_item("pi_s0", r.pi_s0)?;
    d.set_item("lambda_pk", r.lambda_pk.clone())?;
    d.set_item("lambda_sk", r.lambda_sk.clone())?;
    d.set_item("mu_pk", r.mu_pk.clone())?;
    d.set_item("mu_sk", r.mu_sk.clone())?;
    d.set_item("stable", r.all_stable())?;
    let delays = r.delays();
    d.set_item("d_p_total", delays.d_p_total.as_f64())?;
    d.set_item("d_s_total", delays.d_s_total.as_f64())?;
    Ok(d)
}

/// Closed-form rates and delays of one operating point.
#[pyfunction]
#[pyo3(signature = (outages, params, lambda_p, lambda_s, sensing=None, eps_stab=1e-6))]
fn analyze<'py>(
    py: Python<'py>,
    outages: &PyOutages,
    params: &PyParams,
    lambda_p: f64,
    lambda_s: f64,
    sensing: Option<&PySensing>,
    eps_stab: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let traffic = TrafficParams::new(lambda_p, lambda_s);
    traffic.validate().map_err(value_error)?;
    let slot = SlotRates::new(&outages.0, &params.0).map_err(value_error)?;
    let slot = match sensing {
        Some(se) => slot.with_sensing_errors(&params.0.omega, &se.0),
        None => slot,
    };
    report_dict(py, &RateReport::from_slot_rates(slot, traffic, eps_stab))
}

/// Maximize the secondary service rate under delay ceilings.
#[pyfunction]
#[pyo3(signature = (outages, strategy_name, lambda_p, lambda_s, d_p_max=f64::INFINITY, d_s_max=f64::INFINITY,
    sensing=None, budget=40_000, restarts=12, seed=0))]
#[allow(clippy::too_many_arguments)]
fn optimize<'py>(
    py: Python<'py>,
    outages: &PyOutages,
    strategy_name: &str,
    lambda_p: f64,
    lambda_s: f64,
    d_p_max: f64,
    d_s_max: f64,
    sensing: Option<&PySensing>,
    budget: usize,
    restarts: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let qos = QosSpec::new(d_p_max, d_s_max, TrafficParams::new(lambda_p, lambda_s));
    let cfg = OptimizerConfig {
        budget,
        restarts,
        seed,
        ..OptimizerConfig::default()
    };
    let s = strategy(strategy_name)?;
    let r = py
        .detach(|| optimizer::maximize_secondary_throughput(&outages.0, s, &qos, sensing.map(|s| &s.0), &cfg))
        .map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("feasible", r.feasible)?;
    d.set_item("mu_s", r.best_mu_s)?;
    d.set_item("evaluations", r.evaluations)?;
    d.set_item("violation", r.first_violation().map(|v| v.to_string()))?;
    d.set_item("params", PyParams(r.best_params))?;
    Ok(d)
}

fn estimate(e: Estimate) -> (Option<f64>, f64) {
    (e.mean, e.half_width)
}

/// Slot-level simulation. Each estimate is `(mean, half_width)`, with
/// `mean = None` when the estimator saw no samples.
#[pyfunction]
#[pyo3(signature = (outages, params, lambda_p, lambda_s, sensing=None, slots=1_000_000, seed=0,
    replications=1, saturated_relays=false, saturated_primary=false))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    outages: &PyOutages,
    params: &PyParams,
    lambda_p: f64,
    lambda_s: f64,
    sensing: Option<&PySensing>,
    slots: u64,
    seed: u64,
    replications: usize,
    saturated_relays: bool,
    saturated_primary: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = SimConfig {
        slots,
        seed,
        saturated_primary,
        mode: if saturated_relays {
            RelayMode::SaturatedRelays
        } else {
            RelayMode::TrueQueues
        },
        ..SimConfig::default()
    };
    let traffic = TrafficParams::new(lambda_p, lambda_s);
    let e = py
        .detach(|| sim::run_replications(&outages.0, &params.0, traffic, sensing.map(|s| &s.0), &cfg, replications))
        .map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("mu_p", estimate(e.mu_p_hat))?;
    d.set_item("mu_s", estimate(e.mu_s_hat))?;
    d.set_item("pi_p0", estimate(e.pi_p0_hat))?;
    d.set_item("pi_s0", estimate(e.pi_s0_hat))?;
    d.set_item("lambda_pk", e.lambda_pk_hat.iter().map(|&x| estimate(x)).collect::<Vec<_>>())?;
    d.set_item("lambda_sk", e.lambda_sk_hat.iter().map(|&x| estimate(x)).collect::<Vec<_>>())?;
    d.set_item("d_p", estimate(e.d_p_hat))?;
    d.set_item("d_s", estimate(e.d_s_hat))?;
    d.set_item("d_p_total", estimate(e.d_p_total_hat))?;
    d.set_item("d_s_total", estimate(e.d_s_total_hat))?;
    d.set_item("collisions", e.collisions)?;
    d.set_item("slots", e.slots)?;
    Ok(d)
}

/// A parsed experiment spec.
#[pyclass(name = "Spec", from_py_object)]
#[derive(Clone)]
struct PySpec(ExperimentSpec);

fn method(name: &str) -> PyResult<Method> {
    Ok(match name {
        "analytic" => Method::Analytic,
        "simulated" => Method::Simulated,
        "optimized" => Method::Optimized,
        "min_relays" => Method::MinRelays,
        _ => return Err(PyValueError::new_err(format!("unknown method {name:?}"))),
    })
}

#[pymethods]
impl PySpec {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        experiment::load_spec(path).map(Self).map_err(value_error)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        experiment::parse_spec(text).map(Self).map_err(value_error)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    #[getter]
    fn n_relays(&self) -> usize {
        self.0.network.n_relays()
    }

    fn set_seed(&mut self, seed: u64) {
        self.0.set_seed(seed);
    }

    fn set_slots(&mut self, slots: u64) {
        self.0.sim.slots = slots;
    }

    /// Run the sweep with the given methods (`analytic`, `simulated`,
    /// `optimized`, `min_relays`) and return the CSV text.
    #[pyo3(signature = (methods=vec!["analytic".to_string()]))]
    fn run_csv(&self, py: Python<'_>, methods: Vec<String>) -> PyResult<String> {
        let methods = methods.iter().map(|m| method(m)).collect::<PyResult<Vec<_>>>()?;
        let rows = py.detach(|| experiment::run_sweep(&self.0, &methods));
        let mut buf = Vec::new();
        experiment::write_csv(&mut buf, &rows).map_err(value_error)?;
        String::from_utf8(buf).map_err(value_error)
    }

    /// Analytic-vs-simulation report text and whether every check passed.
    fn compare(&self, py: Python<'_>) -> PyResult<(String, bool)> {
        let r = py
            .detach(|| experiment::compare_analytic_sim(&self.0))
            .map_err(PyValueError::new_err)?;
        Ok((r.to_string(), r.passed()))
    }
}

#[pymodule]
fn cogrelay_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOutages>()?;
    m.add_class::<PySensing>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PySpec>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("BUILD", experiment::BUILD_ID)?;
    Ok(())
}
