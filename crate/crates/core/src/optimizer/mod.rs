//! QoS-constrained maximization of the secondary service rate and
//! relay-count minimization.
//!
//! The search is split in two levels. Acceptance probabilities and decoding
//! distributions are explored by a multi-start projected pattern search;
//! for each such point the relay schedule `(omega, alpha)` is solved exactly
//! by a convex allocation (see [`inner`]), since the user rates and relay
//! arrival rates do not depend on it. Strict stability inequalities are
//! enforced with the `eps_stab` slack.

mod inner;
mod search;

use std::cmp::Ordering;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{ChannelError, NetworkConfig, OutageMatrix, Strategy};
use crate::params::{SensingErrorParams, StrategyParams, TrafficParams};
use crate::rates::{
    max_service_rates, queue_delay, Delay, DelayReport, QueueId, RateError, RateReport, SlotRates,
    DEFAULT_EPS_STAB,
};
use crate::sim::derive_replication_seed;

pub use inner::Allocation;
pub use search::DENSE_SEARCH_LIMIT;

use inner::{allocate, Group};
use search::{local_search, Layout, Point, Scored};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosSpec {
    /// End-to-end mean delay ceilings in slots; may be infinite.
    pub d_p_max: f64,
    pub d_s_max: f64,
    pub traffic: TrafficParams,
}

impl QosSpec {
    pub fn new(d_p_max: f64, d_s_max: f64, traffic: TrafficParams) -> Self {
        Self {
            d_p_max,
            d_s_max,
            traffic,
        }
    }

    /// No delay requirements, only stability.
    pub fn stability_only(traffic: TrafficParams) -> Self {
        Self::new(f64::INFINITY, f64::INFINITY, traffic)
    }

    pub fn validate(&self) -> Result<(), OptError> {
        if !(self.d_p_max > 0.0) || !(self.d_s_max > 0.0) {
            return Err(OptError::InvalidConfig("delay ceilings must be positive".into()));
        }
        self.traffic
            .validate()
            .map_err(|e| OptError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Model evaluations shared by all restarts.
    pub budget: usize,
    pub restarts: usize,
    pub seed: u64,
    pub eps_stab: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            budget: 40_000,
            restarts: 12,
            seed: 0,
            eps_stab: DEFAULT_EPS_STAB,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<(), OptError> {
        if self.budget == 0 || self.restarts == 0 {
            return Err(OptError::InvalidConfig("budget and restarts must be positive".into()));
        }
        if !(self.eps_stab >= 0.0) {
            return Err(OptError::InvalidConfig("eps_stab must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintClass {
    Stability,
    Delay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    Stability(QueueId),
    DelayPrimary,
    DelaySecondary,
}

impl Constraint {
    pub fn class(&self) -> ConstraintClass {
        match self {
            Constraint::Stability(_) => ConstraintClass::Stability,
            _ => ConstraintClass::Delay,
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Stability(q) => write!(f, "{q} stability"),
            Constraint::DelayPrimary => f.write_str("primary delay"),
            Constraint::DelaySecondary => f.write_str("secondary delay"),
        }
    }
}

/// Violated constraints, all of the reported class.
#[derive(Debug, Clone, PartialEq)]
pub struct Infeasible {
    pub class: ConstraintClass,
    pub constraints: Vec<Constraint>,
}

impl fmt::Display for Infeasible {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.constraints.iter().map(ToString::to_string).collect();
        write!(f, "{:?} constraints violated: {}", self.class, names.join(", "))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("invalid optimizer input: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("infeasible: {0}")]
    Infeasible(Infeasible),
    #[error("no relay count up to {n_max} meets the QoS requirements")]
    NoFeasibleN { n_max: usize },
}

/// Slack of one constraint; negative means violated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub constraint: Constraint,
    pub slack: f64,
}

/// Exact assessment of one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: RateReport,
    pub delays: DelayReport,
    pub residuals: Vec<Residual>,
    pub feasible: bool,
    /// Aggregate constraint violation, zero when feasible.
    pub violation: f64,
}

impl Evaluation {
    /// `mu_s` when feasible, otherwise `-(1 + violation)`.
    pub fn score(&self) -> f64 {
        if self.feasible {
            self.report.mu_s
        } else {
            -(1.0 + self.violation)
        }
    }

    pub fn first_violation(&self) -> Option<Infeasible> {
        let bad: Vec<Constraint> = self
            .residuals
            .iter()
            .filter(|r| r.slack < 0.0)
            .map(|r| r.constraint)
            .collect();
        let class = bad.first()?.class();
        Some(Infeasible {
            class,
            constraints: bad.into_iter().filter(|c| c.class() == class).collect(),
        })
    }
}

/// Rates, delays and constraint slacks of `params`, with relay sensing
/// errors applied when given.
pub fn evaluate(
    outages: &OutageMatrix,
    params: &StrategyParams,
    qos: &QosSpec,
    sensing: Option<&SensingErrorParams>,
    eps_stab: f64,
) -> Result<Evaluation, RateError> {
    let slot = SlotRates::new(outages, params)?;
    let slot = match sensing {
        Some(se) => slot.with_sensing_errors(&params.omega, se),
        None => slot,
    };
    let report = RateReport::from_slot_rates(slot, qos.traffic, eps_stab);
    let delays = report.delays();
    let mut residuals = Vec::new();
    let mut violation = 0.0;
    for (id, lambda, mu, _) in report.queues() {
        let slack = if lambda <= 0.0 { mu.max(0.0) } else { mu - eps_stab - lambda };
        if slack < 0.0 {
            violation += 10.0 * -slack;
        }
        residuals.push(Residual {
            constraint: Constraint::Stability(id),
            slack,
        });
    }
    let delay_slack = |lambda: f64, d: Delay, max: f64| -> (f64, f64) {
        if lambda <= 0.0 {
            return (f64::INFINITY, 0.0);
        }
        match d {
            Delay::Finite(d) => (max - d, if max.is_finite() { (d / max - 1.0).max(0.0) } else { 0.0 }),
            // unstable queues are already penalised above
            Delay::Infinite => (f64::NEG_INFINITY, 0.0),
        }
    };
    let (sp, vp) = delay_slack(qos.traffic.lambda_p, delays.d_p_total, qos.d_p_max);
    let (ss, vs) = delay_slack(qos.traffic.lambda_s, delays.d_s_total, qos.d_s_max);
    violation += vp + vs;
    residuals.push(Residual {
        constraint: Constraint::DelayPrimary,
        slack: sp,
    });
    residuals.push(Residual {
        constraint: Constraint::DelaySecondary,
        slack: ss,
    });
    let feasible = residuals.iter().all(|r| r.slack >= 0.0);
    if feasible {
        violation = 0.0;
    } else if violation == 0.0 {
        violation = 1.0;
    }
    Ok(Evaluation {
        report,
        delays,
        residuals,
        feasible,
        violation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub best_params: StrategyParams,
    pub best_mu_s: f64,
    pub feasible: bool,
    pub constraint_residuals: Vec<Residual>,
    pub restarts_used: usize,
    pub evaluations: usize,
    /// Some restart ran out of budget before its step size converged.
    pub budget_exhausted: bool,
    pub evaluation: Option<Evaluation>,
}

impl OptResult {
    pub fn first_violation(&self) -> Option<Infeasible> {
        self.evaluation.as_ref().and_then(Evaluation::first_violation)
    }
}

/// Relay queue groups seen by the inner allocation for a given operating
/// point, plus any violation the schedule cannot repair.
fn inner_groups(
    outages: &OutageMatrix,
    report: &RateReport,
    qos: &QosSpec,
    sensing: Option<&SensingErrorParams>,
) -> (Group, Group, Vec<Constraint>) {
    let n = outages.n_relays();
    let c = report.pi_p0 * report.pi_s0;
    let idle = |k: usize| sensing.map_or(1.0, |se| se.idle_detection(k));
    let mut fixed = Vec::new();
    let budget = |lambda: f64, mu: f64, max: f64, id: QueueId, delay: Constraint, fixed: &mut Vec<Constraint>| {
        if lambda <= 0.0 {
            return f64::INFINITY;
        }
        if lambda > mu - report.eps_stab {
            fixed.push(Constraint::Stability(id));
            return -1.0;
        }
        let d = queue_delay(lambda, mu).unwrap_or(f64::INFINITY);
        if d > max {
            fixed.push(delay);
            return -1.0;
        }
        lambda * (max - d)
    };
    let bp = budget(
        qos.traffic.lambda_p,
        report.mu_p,
        qos.d_p_max,
        QueueId::Primary,
        Constraint::DelayPrimary,
        &mut fixed,
    );
    let bs = budget(
        qos.traffic.lambda_s,
        report.mu_s,
        qos.d_s_max,
        QueueId::Secondary,
        Constraint::DelaySecondary,
        &mut fixed,
    );
    let p = Group {
        lambda: report.lambda_pk.clone(),
        gain: (0..n).map(|k| c * (1.0 - outages.relay_pd[k]) * idle(k)).collect(),
        budget: bp,
        primary: true,
    };
    let s = Group {
        lambda: report.lambda_sk.clone(),
        gain: (0..n).map(|k| c * (1.0 - outages.relay_sd[k]) * idle(k)).collect(),
        budget: bs,
        primary: false,
    };
    (p, s, fixed)
}

/// Feasible relay schedule for fixed full acceptance and decoding, in the
/// variables `z_k = alpha_k omega_k`, `y_k = (1 - alpha_k) omega_k`.
/// The delay ceilings in `qos` are honoured; use
/// [`QosSpec::stability_only`] for the pure stability problem.
pub fn solve_feasibility_saturated(
    outages: &OutageMatrix,
    params: &StrategyParams,
    qos: &QosSpec,
    eps_stab: f64,
) -> Result<Allocation, OptError> {
    qos.validate()?;
    let mut p = params.clone();
    p.f_p.iter_mut().for_each(|f| *f = 1.0);
    p.f_s.iter_mut().for_each(|f| *f = 1.0);
    let slot = SlotRates::new(outages, &p)?;
    let report = RateReport::from_slot_rates(slot, qos.traffic, eps_stab);
    let (gp, gs, fixed) = inner_groups(outages, &report, qos, None);
    if !fixed.is_empty() {
        let class = fixed[0].class();
        return Err(OptError::Infeasible(Infeasible {
            class,
            constraints: fixed.into_iter().filter(|c| c.class() == class).collect(),
        }));
    }
    match allocate(&gp, &gs, eps_stab) {
        (a, None) => Ok(a),
        (_, Some(v)) => Err(OptError::Infeasible(v)),
    }
}

struct Problem<'a> {
    outages: &'a OutageMatrix,
    strategy: Strategy,
    qos: &'a QosSpec,
    sensing: Option<&'a SensingErrorParams>,
    eps: f64,
    n: usize,
    layout: Layout,
}

#[derive(Debug, Clone)]
struct Candidate {
    params: StrategyParams,
    eval: Evaluation,
}

impl Scored for Candidate {
    fn score(&self) -> f64 {
        self.eval.score()
    }
}

impl Candidate {
    fn key(&self) -> Vec<f64> {
        let p = &self.params;
        let mut v: Vec<f64> = p.omega.iter().chain(&p.alpha).chain(&p.f_p).chain(&p.f_s).copied().collect();
        match &p.decoding {
            crate::params::Decoding::Ordered { primary, secondary } => {
                v.extend(primary.iter().map(|(_, w)| w));
                v.extend(secondary.iter().map(|(_, w)| w));
            }
            crate::params::Decoding::Assigned { beta } => v.extend(beta),
            crate::params::Decoding::RoundRobin => {}
        }
        v
    }

    /// Higher score first, then lexicographically smaller parameters.
    fn better_than(&self, other: &Candidate) -> bool {
        match self.score().total_cmp(&other.score()) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => {
                let (a, b) = (self.key(), other.key());
                for (x, y) in a.iter().zip(&b) {
                    match x.total_cmp(y) {
                        Ordering::Less => return true,
                        Ordering::Greater => return false,
                        Ordering::Equal => {}
                    }
                }
                false
            }
        }
    }
}

impl Problem<'_> {
    /// Complete `point` with the inner schedule and evaluate it. Under
    /// sensing errors the user rates depend on the schedule, so the
    /// allocation is repeated from the previous schedule a few times.
    fn complete(&self, point: &Point) -> Result<(Candidate, usize), RateError> {
        let n = self.n;
        let u = 1.0 / n.max(1) as f64;
        let mut params = StrategyParams {
            omega: vec![u; n],
            alpha: vec![0.5; n],
            f_p: point.f_p.clone(),
            f_s: point.f_s.clone(),
            decoding: point.decoding(self.strategy, n, &self.layout),
        };
        let rounds = if self.sensing.is_some() { 3 } else { 1 };
        let mut best: Option<Candidate> = None;
        for _ in 0..rounds {
            let slot = SlotRates::new(self.outages, &params)?;
            let slot = match self.sensing {
                Some(se) => slot.with_sensing_errors(&params.omega, se),
                None => slot,
            };
            let report = RateReport::from_slot_rates(slot, self.qos.traffic, self.eps);
            let (gp, gs, _) = inner_groups(self.outages, &report, self.qos, self.sensing);
            let (alloc, _) = allocate(&gp, &gs, self.eps);
            if n > 0 {
                params.omega = alloc.omega();
                params.alpha = alloc.alpha();
            }
            let eval = evaluate(self.outages, &params, self.qos, self.sensing, self.eps)?;
            let cand = Candidate {
                params: params.clone(),
                eval,
            };
            if best.as_ref().is_none_or(|b| cand.better_than(b)) {
                best = Some(cand);
            }
        }
        Ok((best.expect("at least one round"), rounds))
    }
}

/// Maximize the secondary service rate subject to stability of every queue
/// and the end-to-end delay ceilings.
pub fn maximize_secondary_throughput(
    outages: &OutageMatrix,
    strategy: Strategy,
    qos: &QosSpec,
    sensing: Option<&SensingErrorParams>,
    config: &OptimizerConfig,
) -> Result<OptResult, OptError> {
    config.validate()?;
    qos.validate()?;
    outages.validate()?;
    let n = outages.n_relays();
    if let Some(se) = sensing {
        se.validate().map_err(|e| OptError::InvalidConfig(e.to_string()))?;
        if se.n_relays() != n {
            return Err(OptError::InvalidConfig(format!(
                "sensing errors cover {} relays, expected {n}",
                se.n_relays()
            )));
        }
    }
    let layout = Layout::new(strategy, n);
    let problem = Problem {
        outages,
        strategy,
        qos,
        sensing,
        eps: config.eps_stab,
        n,
        layout,
    };

    // primary stability is out of reach for any parameters
    let protection = sensing.map_or(1.0, |se| {
        (0..n).map(|r| se.primary_protection(r)).fold(0.0, f64::max)
    });
    let mu_p_max = match max_service_rates(outages, TrafficParams::new(0.0, 0.0), strategy) {
        Ok((m, _)) => m * if n > 0 { protection } else { 1.0 },
        Err(_) => 0.0,
    };
    if qos.traffic.lambda_p > 0.0 && qos.traffic.lambda_p >= mu_p_max {
        let params = StrategyParams::uniform(strategy, n);
        let eval = evaluate(outages, &params, qos, sensing, config.eps_stab)?;
        return Ok(OptResult {
            best_mu_s: eval.report.mu_s,
            constraint_residuals: eval.residuals.clone(),
            best_params: params,
            feasible: false,
            restarts_used: 0,
            evaluations: 0,
            budget_exhausted: false,
            evaluation: Some(eval),
        });
    }

    let restarts = config.restarts.min(config.budget);
    let per_restart = config.budget / restarts;
    let runs: Vec<Result<(Candidate, usize, bool), RateError>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_replication_seed(config.seed, r as u64));
            let mut used = 0;
            let mut start = Point::uniform(strategy, n, &problem.layout);
            if r == 0 && strategy == Strategy::RandomAssignment && n > 1 {
                // single-relay assignments are the unconstrained optima
                let (mut best, c) = problem.complete(&start)?;
                used += c;
                for k in 0..n {
                    let mut p = start.clone();
                    p.w_p = (0..n).map(|j| if j == k { 1.0 } else { 0.0 }).collect();
                    let (cand, c) = problem.complete(&p)?;
                    used += c;
                    if cand.better_than(&best) {
                        best = cand;
                        start = p;
                    }
                }
            } else if r > 0 {
                start = Point::random(strategy, n, &problem.layout, &mut rng);
            }
            let mut err = None;
            let out = local_search(start, per_restart.saturating_sub(used), &mut rng, |p| {
                match problem.complete(p) {
                    Ok(x) => x,
                    Err(e) => {
                        err.get_or_insert(e);
                        let params = StrategyParams::uniform(strategy, n);
                        let eval = evaluate(outages, &params, qos, sensing, config.eps_stab)
                            .expect("uniform parameters evaluate");
                        (Candidate { params, eval }, 1)
                    }
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            Ok((out.best, used + out.evaluations, out.exhausted))
        })
        .collect();

    let mut best: Option<Candidate> = None;
    let mut evaluations = 0;
    let mut exhausted = false;
    for run in runs {
        let (cand, used, ex) = run?;
        evaluations += used;
        exhausted |= ex;
        if best.as_ref().is_none_or(|b| cand.better_than(b)) {
            best = Some(cand);
        }
    }
    let best = best.expect("at least one restart");
    Ok(OptResult {
        best_mu_s: best.eval.report.mu_s,
        feasible: best.eval.feasible,
        constraint_residuals: best.eval.residuals.clone(),
        best_params: best.params,
        restarts_used: restarts,
        evaluations,
        budget_exhausted: exhausted,
        evaluation: Some(best.eval),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinRelays {
    pub n_relays: usize,
    pub result: OptResult,
    /// Feasibility verdict for every candidate count tried, in order.
    pub tried: Vec<(usize, bool)>,
}

/// Smallest relay count, using the first `N` relays of `network`, for which
/// the throughput maximization finds a feasible point.
pub fn minimize_relay_count(
    network: &NetworkConfig,
    strategy: Strategy,
    qos: &QosSpec,
    sensing: Option<&SensingErrorParams>,
    n_max: usize,
    config: &OptimizerConfig,
) -> Result<MinRelays, OptError> {
    if n_max > network.n_relays() {
        return Err(OptError::InvalidConfig(format!(
            "n_max = {n_max} exceeds the {} relays described",
            network.n_relays()
        )));
    }
    let mut tried = Vec::new();
    for n in 0..=n_max {
        let outages = network.with_relays(n).outages(strategy)?;
        let se = sensing.map(|s| s.truncated(n));
        let result = maximize_secondary_throughput(&outages, strategy, qos, se.as_ref(), config)?;
        tried.push((n, result.feasible));
        if result.feasible {
            return Ok(MinRelays {
                n_relays: n,
                result,
                tried,
            });
        }
    }
    Err(OptError::NoFeasibleN { n_max })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> OutageMatrix {
        OutageMatrix {
            p_pd: 0.1,
            s_sd: 0.2,
            p_relay: vec![0.1, 0.02],
            s_relay: vec![0.1, 0.1],
            relay_pd: vec![0.1, 0.1],
            relay_sd: vec![0.1, 0.1],
        }
    }

    #[test]
    fn unreachable_primary_is_infeasible_immediately() {
        let qos = QosSpec::stability_only(TrafficParams::new(0.9999, 0.1));
        let r = maximize_secondary_throughput(
            &table1(),
            Strategy::OrderedAcceptance,
            &qos,
            None,
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!(!r.feasible);
        assert_eq!(r.evaluations, 0);
    }

    #[test]
    fn feasible_results_revalidate() {
        let qos = QosSpec::new(5.0, 10.0, TrafficParams::new(0.3, 0.2));
        for s in Strategy::ALL {
            let r = maximize_secondary_throughput(&table1(), s, &qos, None, &OptimizerConfig::default()).unwrap();
            assert!(r.feasible, "{s}");
            let e = evaluate(&table1(), &r.best_params, &qos, None, DEFAULT_EPS_STAB).unwrap();
            assert!(e.feasible);
            assert!(r.best_mu_s <= 1.0 - qos.traffic.lambda_p);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let qos = QosSpec::new(3.0, 6.0, TrafficParams::new(0.4, 0.2));
        let cfg = OptimizerConfig {
            budget: 2000,
            ..Default::default()
        };
        let a = maximize_secondary_throughput(&table1(), Strategy::OrderedAcceptance, &qos, None, &cfg).unwrap();
        let b = maximize_secondary_throughput(&table1(), Strategy::OrderedAcceptance, &qos, None, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_budget_is_rejected() {
        let qos = QosSpec::stability_only(TrafficParams::new(0.3, 0.2));
        let cfg = OptimizerConfig {
            budget: 0,
            ..Default::default()
        };
        assert!(matches!(
            maximize_secondary_throughput(&table1(), Strategy::RoundRobin, &qos, None, &cfg),
            Err(OptError::InvalidConfig(_))
        ));
    }

    #[test]
    fn saturated_feasibility_uniform_without_traffic() {
        let qos = QosSpec::stability_only(TrafficParams::new(0.0, 0.0));
        let p = StrategyParams::uniform(Strategy::RoundRobin, 2);
        let a = solve_feasibility_saturated(&table1(), &p, &qos, DEFAULT_EPS_STAB).unwrap();
        assert_eq!(a.omega(), vec![0.5, 0.5]);
    }

    #[test]
    fn no_direct_links_need_relays() {
        let mut o = table1();
        o.p_pd = 1.0;
        o.s_sd = 1.0;
        let net = NetworkConfig::from_outages(o);
        let qos = QosSpec::stability_only(TrafficParams::new(0.1, 0.05));
        let m = minimize_relay_count(&net, Strategy::RoundRobin, &qos, None, 2, &OptimizerConfig::default())
            .unwrap();
        assert!(m.n_relays >= 1);
        assert_eq!(m.tried[0], (0, false));
    }
}
