//! Experiment specs, parameter sweeps, analytic/simulation comparison and
//! CSV output.

mod config;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::channel::{ChannelSpec, NetworkConfig, Strategy};
use crate::optimizer::{
    maximize_secondary_throughput, minimize_relay_count, OptError, OptimizerConfig, QosSpec,
};
use crate::orders::Ranking;
use crate::params::{SensingErrorParams, StrategyParams};
use crate::rates::{RateReport, SlotRates};
use crate::sim::{run_replications, Estimate, RelayMode, SimConfig, SimError, SimEstimate};

pub use config::{parse_spec, ParseError, SpecError, ValidationError};
pub use output::{write_csv, CSV_COLUMNS};

/// Build identifier stamped on every CSV row.
pub const BUILD_ID: &str = env!("COGRELAY_BUILD");

/// Variable swept across the points of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    LambdaP,
    LambdaS,
    /// Per-relay feedback duration as a fraction of the slot.
    TauF,
    NRelays,
    DpMax,
    DsMax,
}

impl SweepVar {
    pub const ALL: [SweepVar; 6] = [
        SweepVar::LambdaP,
        SweepVar::LambdaS,
        SweepVar::TauF,
        SweepVar::NRelays,
        SweepVar::DpMax,
        SweepVar::DsMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepVar::LambdaP => "lambda_p",
            SweepVar::LambdaS => "lambda_s",
            SweepVar::TauF => "tau_f",
            SweepVar::NRelays => "n_relays",
            SweepVar::DpMax => "d_p_max",
            SweepVar::DsMax => "d_s_max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub var: SweepVar,
    pub values: Vec<f64>,
}

/// Fixed strategy parameters from the spec file; unset entries take the
/// defaults of [`StrategyParams::uniform`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamTemplate {
    pub omega: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    pub f_p: Option<Vec<f64>>,
    pub f_s: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub order_p: Option<Vec<(Ranking, f64)>>,
    pub order_s: Option<Vec<(Ranking, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub slots: u64,
    pub warmup: u64,
    pub replications: usize,
    pub mode: RelayMode,
}

/// Agreement required between an analytic value and a simulated estimate:
/// within `half_widths` confidence half-widths and within `absolute`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub half_widths: f64,
    pub absolute: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            half_widths: 3.0,
            absolute: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub network: NetworkConfig,
    pub strategies: Vec<Strategy>,
    /// `None` runs a single point.
    pub sweep: Option<Sweep>,
    pub qos: QosSpec,
    pub template: ParamTemplate,
    pub sensing: Option<SensingErrorParams>,
    pub sim: SimSettings,
    pub optimizer: OptimizerConfig,
    /// Largest relay count tried by relay-count minimization.
    pub n_max: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub tolerance: Tolerance,
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<ExperimentSpec, SpecError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_spec(&text)
}

/// One point of a sweep with the swept value substituted.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub value: Option<f64>,
    pub network: NetworkConfig,
    pub qos: QosSpec,
    pub sensing: Option<SensingErrorParams>,
    pub n_max: usize,
}

impl ExperimentSpec {
    /// Seed shared by the simulator and the optimizer.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.optimizer.seed = seed;
    }

    pub fn scenarios(&self) -> Vec<Scenario> {
        match &self.sweep {
            None => vec![self.scenario(None)],
            Some(s) => s.values.iter().map(|&v| self.scenario(Some(v))).collect(),
        }
    }

    fn scenario(&self, value: Option<f64>) -> Scenario {
        let mut sc = Scenario {
            value,
            network: self.network.clone(),
            qos: self.qos,
            sensing: self.sensing.clone(),
            n_max: self.n_max,
        };
        let (Some(sweep), Some(v)) = (&self.sweep, value) else {
            return sc;
        };
        match sweep.var {
            SweepVar::LambdaP => sc.qos.traffic.lambda_p = v,
            SweepVar::LambdaS => sc.qos.traffic.lambda_s = v,
            SweepVar::DpMax => sc.qos.d_p_max = v,
            SweepVar::DsMax => sc.qos.d_s_max = v,
            SweepVar::TauF => {
                if let ChannelSpec::Physical(p) = &mut sc.network.channel {
                    p.timing.tau_f = v * p.timing.slot;
                }
            }
            SweepVar::NRelays => {
                let n = v as usize;
                sc.network = sc.network.with_relays(n);
                sc.sensing = sc.sensing.map(|s| s.truncated(n));
                sc.n_max = sc.n_max.min(n);
            }
        }
        sc
    }

    fn sim_config(&self) -> SimConfig {
        SimConfig {
            slots: self.sim.slots,
            warmup: self.sim.warmup,
            seed: self.seed,
            mode: self.sim.mode,
            ..SimConfig::default()
        }
    }
}

/// How a row was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Closed-form rates at the spec's fixed parameters.
    Analytic,
    /// Monte Carlo estimates at the spec's fixed parameters.
    Simulated,
    /// Closed-form rates at the throughput-maximizing parameters.
    Optimized,
    /// Smallest relay count meeting the QoS targets.
    MinRelays,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Analytic => "analytic",
            Method::Simulated => "simulated",
            Method::Optimized => "optimized",
            Method::MinRelays => "min_relays",
        })
    }
}

/// One CSV row. `None` quantities are written as empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub scenario: String,
    pub strategy: Strategy,
    pub method: Method,
    pub sweep_var: Option<SweepVar>,
    pub sweep_value: Option<f64>,
    pub mu_p: Option<f64>,
    pub mu_s: Option<f64>,
    pub pi_p0: Option<f64>,
    pub pi_s0: Option<f64>,
    pub d_p_total: Option<f64>,
    pub d_s_total: Option<f64>,
    pub min_relays: Option<usize>,
    pub status: String,
    /// Confidence half-width of the simulated `mu_s`.
    pub ci_half_width: Option<f64>,
    pub seed: u64,
    pub build: &'static str,
}

impl Row {
    fn new(spec: &ExperimentSpec, sc: &Scenario, strategy: Strategy, method: Method) -> Self {
        Self {
            scenario: spec.name.clone(),
            strategy,
            method,
            sweep_var: spec.sweep.as_ref().map(|s| s.var),
            sweep_value: sc.value,
            mu_p: None,
            mu_s: None,
            pi_p0: None,
            pi_s0: None,
            d_p_total: None,
            d_s_total: None,
            min_relays: None,
            status: "ok".into(),
            ci_half_width: None,
            seed: spec.seed,
            build: BUILD_ID,
        }
    }

    fn fill_report(&mut self, r: &RateReport) {
        let d = r.delays();
        self.mu_p = Some(r.mu_p);
        self.mu_s = Some(r.mu_s);
        self.pi_p0 = Some(r.pi_p0);
        self.pi_s0 = Some(r.pi_s0);
        self.d_p_total = Some(d.d_p_total.as_f64());
        self.d_s_total = Some(d.d_s_total.as_f64());
        if let Some((id, ..)) = r.queues().into_iter().find(|q| !q.3) {
            self.status = format!("unstable: {id}");
        }
    }

    fn fill_estimate(&mut self, e: &SimEstimate) {
        self.mu_p = e.mu_p_hat.mean;
        self.mu_s = e.mu_s_hat.mean;
        self.pi_p0 = e.pi_p0_hat.mean;
        self.pi_s0 = e.pi_s0_hat.mean;
        self.d_p_total = e.d_p_total_hat.mean;
        self.d_s_total = e.d_s_total_hat.mean;
        self.ci_half_width = e.mu_s_hat.mean.map(|_| e.mu_s_hat.half_width).filter(|h| h.is_finite());
    }
}

/// Closed-form rates for fixed parameters; relays are saturated when
/// sensing errors are present, giving lower bounds.
pub fn analytic_report(
    network: &NetworkConfig,
    params: &StrategyParams,
    qos: &QosSpec,
    sensing: Option<&SensingErrorParams>,
    eps_stab: f64,
) -> Result<RateReport, String> {
    let outages = network.outages(params.strategy()).map_err(|e| e.to_string())?;
    let slot = SlotRates::new(&outages, params).map_err(|e| e.to_string())?;
    let slot = match sensing {
        Some(se) => slot.with_sensing_errors(&params.omega, se),
        None => slot,
    };
    Ok(RateReport::from_slot_rates(slot, qos.traffic, eps_stab))
}

fn simulate(
    spec: &ExperimentSpec,
    sc: &Scenario,
    params: &StrategyParams,
    cfg: &SimConfig,
) -> Result<SimEstimate, String> {
    let outages = sc.network.outages(params.strategy()).map_err(|e| e.to_string())?;
    run_replications(
        &outages,
        params,
        sc.qos.traffic,
        sc.sensing.as_ref(),
        cfg,
        spec.sim.replications,
    )
    .map_err(|e| match e {
        SimError::Unstable { queue, .. } => format!("unstable: {queue}"),
        e => e.to_string(),
    })
}

fn point_rows(spec: &ExperimentSpec, sc: &Scenario, strategy: Strategy, methods: &[Method]) -> Vec<Row> {
    let n = sc.network.n_relays();
    let params = spec.template.params(strategy, n);
    let eps = spec.optimizer.eps_stab;
    methods
        .iter()
        .map(|&method| {
            let mut row = Row::new(spec, sc, strategy, method);
            let result: Result<(), String> = (|| match method {
                Method::Analytic => {
                    let p = params.clone()?;
                    row.fill_report(&analytic_report(&sc.network, &p, &sc.qos, sc.sensing.as_ref(), eps)?);
                    Ok(())
                }
                Method::Simulated => {
                    let p = params.clone()?;
                    row.fill_estimate(&simulate(spec, sc, &p, &spec.sim_config())?);
                    Ok(())
                }
                Method::Optimized => {
                    let outages = sc.network.outages(strategy).map_err(|e| e.to_string())?;
                    let r = maximize_secondary_throughput(
                        &outages,
                        strategy,
                        &sc.qos,
                        sc.sensing.as_ref(),
                        &spec.optimizer,
                    )
                    .map_err(|e| e.to_string())?;
                    match (&r.evaluation, r.feasible) {
                        (Some(e), true) => row.fill_report(&e.report),
                        _ => {
                            row.status = match r.first_violation() {
                                Some(v) => format!("infeasible: {v}"),
                                None => "infeasible".into(),
                            }
                        }
                    }
                    Ok(())
                }
                Method::MinRelays => {
                    match minimize_relay_count(
                        &sc.network,
                        strategy,
                        &sc.qos,
                        sc.sensing.as_ref(),
                        sc.n_max,
                        &spec.optimizer,
                    ) {
                        Ok(m) => {
                            row.min_relays = Some(m.n_relays);
                            if let Some(e) = &m.result.evaluation {
                                row.fill_report(&e.report);
                            }
                        }
                        Err(OptError::NoFeasibleN { n_max }) => {
                            row.status = format!("infeasible: no relay count up to {n_max}");
                        }
                        Err(e) => return Err(e.to_string()),
                    }
                    Ok(())
                }
            })();
            if let Err(m) = result {
                row.status = format!("error: {m}");
            }
            row
        })
        .collect()
}

/// Rows for every sweep point × strategy × method, in that order. Points
/// run concurrently; errors are recorded in the row status.
pub fn run_sweep(spec: &ExperimentSpec, methods: &[Method]) -> Vec<Row> {
    let scenarios = spec.scenarios();
    let jobs: Vec<(&Scenario, Strategy)> = scenarios
        .iter()
        .flat_map(|sc| spec.strategies.iter().map(move |&s| (sc, s)))
        .collect();
    jobs.par_iter()
        .map(|&(sc, s)| point_rows(spec, sc, s, methods))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// The simulation produced no samples for a conditional quantity.
    NoSamples,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub strategy: Strategy,
    pub sweep_value: Option<f64>,
    pub quantity: String,
    pub analytic: f64,
    pub simulated: Estimate,
    pub verdict: Verdict,
}

/// Judge one quantity against `tol`.
pub fn judge(analytic: f64, simulated: Estimate, tol: Tolerance) -> Verdict {
    let Some(m) = simulated.mean else {
        return Verdict::NoSamples;
    };
    let d = (m - analytic).abs();
    // zero-variance estimates may still differ by rounding
    if d <= tol.half_widths * simulated.half_width + 1e-12 && d <= tol.absolute {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Compare `report` with a true-traffic estimate `sim` and a
/// saturated-primary estimate `saturated` of the same operating point.
pub fn compare_point(
    report: &RateReport,
    sim: &SimEstimate,
    saturated: &SimEstimate,
    tol: Tolerance,
) -> Vec<(String, f64, Estimate, Verdict)> {
    let mut q = vec![
        ("mu_p_saturated".to_string(), report.slot.primary_service, saturated.mu_p_hat),
        ("mu_s".to_string(), report.mu_s, sim.mu_s_hat),
        ("pi_p0".to_string(), report.pi_p0, sim.pi_p0_hat),
        ("pi_s0".to_string(), report.pi_s0, sim.pi_s0_hat),
    ];
    for k in 0..report.n_relays() {
        q.push((format!("lambda_p{}", k + 1), report.lambda_pk[k], sim.lambda_pk_hat[k]));
        q.push((format!("lambda_s{}", k + 1), report.lambda_sk[k], sim.lambda_sk_hat[k]));
    }
    q.into_iter()
        .map(|(name, a, e)| {
            let v = judge(a, e, tol);
            (name, a, e, v)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub scenario: String,
    pub entries: Vec<Comparison>,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.verdict != Verdict::Fail)
    }
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let point = e.sweep_value.map(|v| format!(" @ {v}")).unwrap_or_default();
            let sim = match e.simulated.mean {
                Some(m) => format!("{m:.6} ± {:.6}", e.simulated.half_width),
                None => "no samples".into(),
            };
            let verdict = match e.verdict {
                Verdict::Pass => "PASS",
                Verdict::Fail => "FAIL",
                Verdict::NoSamples => "SKIP",
            };
            writeln!(
                f,
                "{verdict} {}{point} {} {}: analytic {:.6}, simulated {sim}",
                self.scenario, e.strategy, e.quantity, e.analytic
            )?;
        }
        let fails = self.entries.iter().filter(|e| e.verdict == Verdict::Fail).count();
        write!(f, "{} quantities compared, {fails} failed", self.entries.len())
    }
}

/// Analytic versus simulated rates at every sweep point and strategy.
/// Relays are simulated saturated when sensing errors are present, matching
/// the analytic lower-bound model.
pub fn compare_analytic_sim(spec: &ExperimentSpec) -> Result<CompareReport, String> {
    let scenarios = spec.scenarios();
    let jobs: Vec<(&Scenario, Strategy)> = scenarios
        .iter()
        .flat_map(|sc| spec.strategies.iter().map(move |&s| (sc, s)))
        .collect();
    let parts = jobs
        .par_iter()
        .map(|&(sc, strategy)| -> Result<Vec<Comparison>, String> {
            let params = spec.template.params(strategy, sc.network.n_relays())?;
            let report = analytic_report(
                &sc.network,
                &params,
                &sc.qos,
                sc.sensing.as_ref(),
                spec.optimizer.eps_stab,
            )?;
            let mut cfg = spec.sim_config();
            if sc.sensing.is_some() {
                cfg.mode = RelayMode::SaturatedRelays;
            }
            let sim = simulate(spec, sc, &params, &cfg)?;
            let saturated = simulate(
                spec,
                sc,
                &params,
                &SimConfig {
                    saturated_primary: true,
                    ..cfg
                },
            )?;
            Ok(compare_point(&report, &sim, &saturated, spec.tolerance)
                .into_iter()
                .map(|(quantity, analytic, simulated, verdict)| Comparison {
                    strategy,
                    sweep_value: sc.value,
                    quantity,
                    analytic,
                    simulated,
                    verdict,
                })
                .collect())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CompareReport {
        scenario: spec.name.clone(),
        entries: parts.into_iter().flatten().collect(),
    })
}
