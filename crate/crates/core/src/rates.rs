//! Closed-form service rates, arrival rates, idle probabilities and delays.
//!
//! Every queue is treated as a discrete-time Geo/Geo/1 queue. The rates are
//! evaluated in the triangular order primary → secondary → relays: the
//! primary queue's idle probability gates the secondary transmitter, both
//! gate the relays. No fixed-point iteration is involved.

use std::fmt;

use thiserror::Error;

use crate::channel::{OutageMatrix, Strategy};
use crate::params::{Decoding, ParamError, SensingErrorParams, StrategyParams, TrafficParams};

/// Slack used for strict stability inequalities: a queue is stable when
/// `lambda <= mu - DEFAULT_EPS_STAB`.
pub const DEFAULT_EPS_STAB: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueueId {
    Primary,
    Secondary,
    PrimaryRelay(usize),
    SecondaryRelay(usize),
}

impl fmt::Display for QueueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueueId::Primary => f.write_str("primary"),
            QueueId::Secondary => f.write_str("secondary"),
            QueueId::PrimaryRelay(k) => write!(f, "relay {} primary", k + 1),
            QueueId::SecondaryRelay(k) => write!(f, "relay {} secondary", k + 1),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("outage matrix covers {outages} relays but parameters cover {params}")]
    RelayCountMismatch { outages: usize, params: usize },
    #[error("primary queue unstable: lambda_p = {lambda} >= mu_p = {mu}")]
    UnstablePrimary { lambda: f64, mu: f64 },
    #[error("{0} queue unstable")]
    UnstableQueue(QueueId),
    #[error("queue unstable: lambda = {lambda} >= mu = {mu}")]
    Unstable { lambda: f64, mu: f64 },
}

/// Queue delay, with an explicit marker for unstable queues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delay {
    Finite(f64),
    Infinite,
}

impl Delay {
    pub fn finite(self) -> Option<f64> {
        match self {
            Delay::Finite(d) => Some(d),
            Delay::Infinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Delay::Finite(_))
    }

    /// `+inf` for unstable queues; convenient for comparisons.
    pub fn as_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for Delay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Delay::Finite(d) => write!(f, "{d}"),
            Delay::Infinite => f.write_str("inf"),
        }
    }
}

/// Per-slot conditional probabilities that do not depend on queue
/// occupancy. Everything in [`RateReport`] is derived from these plus the
/// traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRates {
    /// P(primary packet leaves the source | primary transmits).
    pub primary_service: f64,
    /// P(secondary packet leaves the source | secondary transmits).
    pub secondary_service: f64,
    /// P(relay k admits the packet | primary transmits).
    pub primary_admission: Vec<f64>,
    /// P(relay k admits the packet | secondary transmits).
    pub secondary_admission: Vec<f64>,
    /// P(head of Q_{p,k} delivered | both users idle, Q_{p,k} nonempty).
    pub primary_relay_service: Vec<f64>,
    /// P(head of Q_{s,k} delivered | both users idle, Q_{s,k} nonempty).
    pub secondary_relay_service: Vec<f64>,
}

impl SlotRates {
    pub fn new(outages: &OutageMatrix, params: &StrategyParams) -> Result<Self, RateError> {
        check_dims(outages, params)?;
        let acc_p = acceptance_probabilities(&outages.p_relay, &params.f_p, &params.decoding, Side::Primary);
        let acc_s = acceptance_probabilities(&outages.s_relay, &params.f_s, &params.decoding, Side::Secondary);
        let n = outages.n_relays();
        Ok(Self {
            primary_service: (1.0 - outages.p_pd) + outages.p_pd * acc_p.iter().sum::<f64>(),
            secondary_service: (1.0 - outages.s_sd) + outages.s_sd * acc_s.iter().sum::<f64>(),
            primary_admission: acc_p.iter().map(|a| outages.p_pd * a).collect(),
            secondary_admission: acc_s.iter().map(|a| outages.s_sd * a).collect(),
            primary_relay_service: (0..n)
                .map(|k| params.omega[k] * params.alpha[k] * (1.0 - outages.relay_pd[k]))
                .collect(),
            secondary_relay_service: (0..n)
                .map(|k| params.omega[k] * (1.0 - params.alpha[k]) * (1.0 - outages.relay_sd[k]))
                .collect(),
        })
    }

    /// Scale by the relay sensing-error factors. `omega` is the transmit
    /// schedule the errors are averaged over.
    pub fn with_sensing_errors(&self, omega: &[f64], se: &SensingErrorParams) -> Self {
        let fp = se.primary_factor(omega);
        let fs = se.secondary_factor(omega);
        Self {
            primary_service: self.primary_service * fp,
            secondary_service: self.secondary_service * fs,
            primary_admission: self.primary_admission.iter().map(|a| a * fp).collect(),
            secondary_admission: self.secondary_admission.iter().map(|a| a * fs).collect(),
            primary_relay_service: self
                .primary_relay_service
                .iter()
                .enumerate()
                .map(|(k, m)| m * se.idle_detection(k))
                .collect(),
            secondary_relay_service: self
                .secondary_relay_service
                .iter()
                .enumerate()
                .map(|(k, m)| m * se.idle_detection(k))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Primary,
    Secondary,
}

/// P(relay k decodes and admits | destination NACK), per relay.
fn acceptance_probabilities(
    outage_to_relay: &[f64],
    accept: &[f64],
    decoding: &Decoding,
    side: Side,
) -> Vec<f64> {
    let n = outage_to_relay.len();
    let take: Vec<f64> = (0..n).map(|k| (1.0 - outage_to_relay[k]) * accept[k]).collect();
    match decoding {
        Decoding::Ordered { primary, secondary } => {
            let dist = match side {
                Side::Primary => primary,
                Side::Secondary => secondary,
            };
            let mut acc = vec![0.0; n];
            for (ranking, rho) in dist.iter() {
                let mut nobody_yet = rho;
                for relay in ranking.acceptance_order() {
                    acc[relay] += nobody_yet * take[relay];
                    nobody_yet *= 1.0 - take[relay];
                }
            }
            acc
        }
        Decoding::Assigned { beta } => take.iter().zip(beta).map(|(t, b)| t * b).collect(),
        Decoding::RoundRobin => take.iter().map(|t| t / n as f64).collect(),
    }
}

fn check_dims(outages: &OutageMatrix, params: &StrategyParams) -> Result<(), RateError> {
    params.validate()?;
    if outages.n_relays() != params.n_relays() {
        return Err(RateError::RelayCountMismatch {
            outages: outages.n_relays(),
            params: params.n_relays(),
        });
    }
    Ok(())
}

/// Probability that a Geo/Geo/1 queue is empty; zero when unstable.
pub fn idle_probability(lambda: f64, mu: f64) -> f64 {
    if lambda <= 0.0 {
        1.0
    } else if lambda < mu {
        1.0 - lambda / mu
    } else {
        0.0
    }
}

fn is_stable(lambda: f64, mu: f64, eps: f64) -> bool {
    lambda <= 0.0 || lambda <= mu - eps
}

/// All analytic rates of one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub traffic: TrafficParams,
    pub eps_stab: f64,
    pub slot: SlotRates,
    pub mu_p: f64,
    pub mu_s: f64,
    pub pi_p0: f64,
    pub pi_s0: f64,
    pub lambda_pk: Vec<f64>,
    pub lambda_sk: Vec<f64>,
    pub mu_pk: Vec<f64>,
    pub mu_sk: Vec<f64>,
    pub stable_p: bool,
    pub stable_s: bool,
    pub stable_pk: Vec<bool>,
    pub stable_sk: Vec<bool>,
}

impl RateReport {
    pub fn from_slot_rates(slot: SlotRates, traffic: TrafficParams, eps_stab: f64) -> Self {
        let mu_p = slot.primary_service;
        let pi_p0 = idle_probability(traffic.lambda_p, mu_p);
        let mu_s = pi_p0 * slot.secondary_service;
        let pi_s0 = idle_probability(traffic.lambda_s, mu_s);
        let lambda_pk: Vec<f64> = slot.primary_admission.iter().map(|a| (1.0 - pi_p0) * a).collect();
        let lambda_sk: Vec<f64> = slot
            .secondary_admission
            .iter()
            .map(|a| (1.0 - pi_s0) * pi_p0 * a)
            .collect();
        let both_idle = pi_p0 * pi_s0;
        let mu_pk: Vec<f64> = slot.primary_relay_service.iter().map(|m| both_idle * m).collect();
        let mu_sk: Vec<f64> = slot.secondary_relay_service.iter().map(|m| both_idle * m).collect();
        let stable_pk = lambda_pk.iter().zip(&mu_pk).map(|(&l, &m)| is_stable(l, m, eps_stab)).collect();
        let stable_sk = lambda_sk.iter().zip(&mu_sk).map(|(&l, &m)| is_stable(l, m, eps_stab)).collect();
        Self {
            stable_p: is_stable(traffic.lambda_p, mu_p, eps_stab),
            stable_s: is_stable(traffic.lambda_s, mu_s, eps_stab),
            traffic,
            eps_stab,
            slot,
            mu_p,
            mu_s,
            pi_p0,
            pi_s0,
            lambda_pk,
            lambda_sk,
            mu_pk,
            mu_sk,
            stable_pk,
            stable_sk,
        }
    }

    pub fn n_relays(&self) -> usize {
        self.lambda_pk.len()
    }

    pub fn all_stable(&self) -> bool {
        self.stable_p && self.stable_s && self.stable_pk.iter().all(|&s| s) && self.stable_sk.iter().all(|&s| s)
    }

    /// Every queue with its arrival rate, service rate and stability flag.
    pub fn queues(&self) -> Vec<(QueueId, f64, f64, bool)> {
        let mut q = vec![
            (QueueId::Primary, self.traffic.lambda_p, self.mu_p, self.stable_p),
            (QueueId::Secondary, self.traffic.lambda_s, self.mu_s, self.stable_s),
        ];
        for k in 0..self.n_relays() {
            q.push((QueueId::PrimaryRelay(k), self.lambda_pk[k], self.mu_pk[k], self.stable_pk[k]));
            q.push((QueueId::SecondaryRelay(k), self.lambda_sk[k], self.mu_sk[k], self.stable_sk[k]));
        }
        q
    }

    pub fn delays(&self) -> DelayReport {
        let d = |l: f64, m: f64, stable: bool| -> Delay {
            if !stable {
                return Delay::Infinite;
            }
            queue_delay(l, m).map(Delay::Finite).unwrap_or(Delay::Infinite)
        };
        let d_p = d(self.traffic.lambda_p, self.mu_p, self.stable_p);
        let d_s = d(self.traffic.lambda_s, self.mu_s, self.stable_s);
        let relay = |lam: &[f64], mu: &[f64], st: &[bool]| -> Vec<Delay> {
            lam.iter()
                .zip(mu)
                .zip(st)
                .map(|((&l, &m), &s)| if l <= 0.0 { Delay::Finite(0.0) } else { d(l, m, s) })
                .collect()
        };
        let d_pk = relay(&self.lambda_pk, &self.mu_pk, &self.stable_pk);
        let d_sk = relay(&self.lambda_sk, &self.mu_sk, &self.stable_sk);
        let total = |own: Delay, lam_user: f64, lam: &[f64], dk: &[Delay]| -> Delay {
            let Delay::Finite(own) = own else {
                return Delay::Infinite;
            };
            let mut extra = 0.0;
            for (&l, &dd) in lam.iter().zip(dk) {
                if l > 0.0 {
                    match dd {
                        Delay::Finite(x) => extra += l * x,
                        Delay::Infinite => return Delay::Infinite,
                    }
                }
            }
            if lam_user > 0.0 {
                Delay::Finite(own + extra / lam_user)
            } else {
                Delay::Finite(own)
            }
        };
        DelayReport {
            d_p_total: total(d_p, self.traffic.lambda_p, &self.lambda_pk, &d_pk),
            d_s_total: total(d_s, self.traffic.lambda_s, &self.lambda_sk, &d_sk),
            d_p,
            d_s,
            d_pk,
            d_sk,
        }
    }
}

/// Queueing delays in slots. Relay queues without traffic report zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayReport {
    pub d_p: Delay,
    pub d_s: Delay,
    pub d_pk: Vec<Delay>,
    pub d_sk: Vec<Delay>,
    pub d_p_total: Delay,
    pub d_s_total: Delay,
}

/// Evaluate every rate of an operating point.
pub fn analyze(
    outages: &OutageMatrix,
    params: &StrategyParams,
    traffic: TrafficParams,
    eps_stab: f64,
) -> Result<RateReport, RateError> {
    traffic.validate()?;
    let slot = SlotRates::new(outages, params)?;
    Ok(RateReport::from_slot_rates(slot, traffic, eps_stab))
}

/// Mean service rate of the primary queue.
pub fn primary_service_rate(outages: &OutageMatrix, params: &StrategyParams) -> Result<f64, RateError> {
    Ok(SlotRates::new(outages, params)?.primary_service)
}

/// Mean service rate of the secondary queue; requires a stable primary.
pub fn secondary_service_rate(
    outages: &OutageMatrix,
    params: &StrategyParams,
    traffic: TrafficParams,
) -> Result<f64, RateError> {
    let slot = SlotRates::new(outages, params)?;
    if traffic.lambda_p >= slot.primary_service {
        return Err(RateError::UnstablePrimary {
            lambda: traffic.lambda_p,
            mu: slot.primary_service,
        });
    }
    Ok(idle_probability(traffic.lambda_p, slot.primary_service) * slot.secondary_service)
}

/// Arrival rates `(lambda_pk, lambda_sk)` at the relaying queues; both user
/// queues must be stable.
pub fn relay_arrival_rates(
    outages: &OutageMatrix,
    params: &StrategyParams,
    traffic: TrafficParams,
) -> Result<(Vec<f64>, Vec<f64>), RateError> {
    let slot = SlotRates::new(outages, params)?;
    let r = RateReport::from_slot_rates(slot, traffic, 0.0);
    if traffic.lambda_p > 0.0 && traffic.lambda_p >= r.mu_p {
        return Err(RateError::UnstableQueue(QueueId::Primary));
    }
    if traffic.lambda_s > 0.0 && traffic.lambda_s >= r.mu_s {
        return Err(RateError::UnstableQueue(QueueId::Secondary));
    }
    Ok((r.lambda_pk, r.lambda_sk))
}

/// Service rates `(mu_pk, mu_sk)` of the relaying queues given the users'
/// idle probabilities.
pub fn relay_service_rates(
    outages: &OutageMatrix,
    params: &StrategyParams,
    pi_p0: f64,
    pi_s0: f64,
) -> Result<(Vec<f64>, Vec<f64>), RateError> {
    let slot = SlotRates::new(outages, params)?;
    let both = pi_p0 * pi_s0;
    Ok((
        slot.primary_relay_service.iter().map(|m| m * both).collect(),
        slot.secondary_relay_service.iter().map(|m| m * both).collect(),
    ))
}

/// Largest achievable `(mu_p, mu_s)` under a strategy, reached with full
/// acceptance.
pub fn max_service_rates(
    outages: &OutageMatrix,
    traffic: TrafficParams,
    strategy: Strategy,
) -> Result<(f64, f64), RateError> {
    let residual = |direct: f64, to_relay: &[f64]| -> f64 {
        if to_relay.is_empty() {
            return direct;
        }
        let relay_term = match strategy {
            Strategy::OrderedAcceptance => to_relay.iter().product::<f64>(),
            Strategy::RandomAssignment => to_relay.iter().copied().fold(f64::INFINITY, f64::min),
            Strategy::RoundRobin => {
                1.0 - to_relay.iter().map(|p| 1.0 - p).sum::<f64>() / to_relay.len() as f64
            }
        };
        direct * relay_term
    };
    let mu_p = 1.0 - residual(outages.p_pd, &outages.p_relay);
    if traffic.lambda_p >= mu_p {
        return Err(RateError::UnstablePrimary {
            lambda: traffic.lambda_p,
            mu: mu_p,
        });
    }
    let mu_s = (1.0 - residual(outages.s_sd, &outages.s_relay)) * (1.0 - traffic.lambda_p / mu_p);
    Ok((mu_p, mu_s))
}

/// Upper bound on the secondary service rate for any strategy.
pub fn secondary_rate_cap(traffic: TrafficParams) -> f64 {
    1.0 - traffic.lambda_p
}

/// Mean queueing delay in slots of a stable Geo/Geo/1 queue.
pub fn queue_delay(lambda: f64, mu: f64) -> Result<f64, RateError> {
    if mu <= lambda {
        return Err(RateError::Unstable { lambda, mu });
    }
    Ok((1.0 - lambda) / (mu - lambda))
}

/// End-to-end delays `(D_p, D_s)`: source delay plus traffic-weighted relay
/// delay.
pub fn end_to_end_delays(report: &RateReport) -> Result<(f64, f64), RateError> {
    for (id, lambda, mu, stable) in report.queues() {
        if lambda > 0.0 && (!stable || mu <= lambda) {
            return Err(RateError::UnstableQueue(id));
        }
    }
    let d = report.delays();
    match (d.d_p_total, d.d_s_total) {
        (Delay::Finite(p), Delay::Finite(s)) => Ok((p, s)),
        (Delay::Infinite, _) => Err(RateError::UnstableQueue(QueueId::Primary)),
        (_, Delay::Infinite) => Err(RateError::UnstableQueue(QueueId::Secondary)),
    }
}

/// Rates under relay sensing errors with relays that always have something
/// to send. The per-slot probabilities are scaled by the protection factors
/// and the idle probabilities are re-derived from the reduced service rates.
pub fn apply_sensing_errors(
    report: &RateReport,
    params: &StrategyParams,
    se: &SensingErrorParams,
) -> RateReport {
    let slot = report.slot.with_sensing_errors(&params.omega, se);
    RateReport::from_slot_rates(slot, report.traffic, report.eps_stab)
}
