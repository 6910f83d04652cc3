//! Slot-level Monte Carlo simulation of the cognitive relaying MAC.
//!
//! One replication is a sequential loop over slots. Within a slot: Bernoulli
//! arrivals join the user queues, the primary user transmits if it has a
//! packet, the secondary user transmits if it has a packet and senses the
//! first interval idle, and the scheduled relay transmits if it senses both
//! intervals idle. A packet that misses its destination is offered to the
//! relays that decoded it; at most one relay admits it.

mod stats;
mod trace;

use std::collections::VecDeque;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::OutageMatrix;
use crate::params::{Decoding, ParamError, SensingErrorParams, StrategyParams, TrafficParams};
use crate::rates::QueueId;

pub use stats::{
    half_width, measure_conditional_service, ratio_estimate, t_quantile, BatchCounters,
    DelayCounter, Estimate, QueueCounters,
};
pub use trace::{read_trace, write_trace, Feedback, SlotOutcome, Transmitter};

/// Queue length at which a run is declared unstable and aborted.
pub const QUEUE_GUARD: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("{queue} queue exceeded {QUEUE_GUARD} packets at slot {slot}; configuration is unstable")]
    Unstable { queue: QueueId, slot: u64 },
}

/// Whether relays hold real packets or always have something to send.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelayMode {
    #[default]
    TrueQueues,
    /// A scheduled relay with an empty queue sends a dummy packet.
    SaturatedRelays,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub slots: u64,
    /// Slots simulated before measurement starts.
    pub warmup: u64,
    pub seed: u64,
    pub mode: RelayMode,
    /// Keep the primary queue permanently backlogged.
    pub saturated_primary: bool,
    /// Batches used for within-run confidence intervals.
    pub batches: usize,
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            slots: 1_000_000,
            warmup: 0,
            seed: 0,
            mode: RelayMode::TrueQueues,
            saturated_primary: false,
            batches: 20,
            trace: false,
        }
    }
}

/// Queue lengths at a point in the run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeQueues {
    pub primary: usize,
    pub secondary: usize,
    pub relay_p: Vec<usize>,
    pub relay_s: Vec<usize>,
}

/// Estimates of the quantities the analytic model predicts. Rates are
/// conditional on the queue being nonempty, delays are in slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEstimate {
    pub mu_p_hat: Estimate,
    pub mu_s_hat: Estimate,
    pub pi_p0_hat: Estimate,
    pub pi_s0_hat: Estimate,
    pub lambda_pk_hat: Vec<Estimate>,
    pub lambda_sk_hat: Vec<Estimate>,
    pub mu_pk_hat: Vec<Estimate>,
    pub mu_sk_hat: Vec<Estimate>,
    /// Source queueing delay.
    pub d_p_hat: Estimate,
    pub d_s_hat: Estimate,
    /// Queueing delay at relay k, from admission to delivery.
    pub d_pk_hat: Vec<Estimate>,
    pub d_sk_hat: Vec<Estimate>,
    pub d_p_total_hat: Estimate,
    pub d_s_total_hat: Estimate,
    pub collisions: u64,
    pub seed: u64,
    /// Measured slots, summed over replications.
    pub slots: u64,
    pub replications: usize,
    pub totals: BatchCounters,
    pub final_queues: Vec<NodeQueues>,
    pub trace: Option<Vec<SlotOutcome>>,
}

impl SimEstimate {
    /// Build estimates from independent groups of counters (batches of one
    /// run, or whole replications).
    fn from_groups(groups: &[BatchCounters], n: usize) -> Self {
        let mut totals = BatchCounters::new(n);
        for g in groups {
            totals.add(g);
        }
        let est = |f: &dyn Fn(&BatchCounters) -> (f64, f64)| {
            let v: Vec<(f64, f64)> = groups.iter().map(f).collect();
            ratio_estimate(&v)
        };
        let service = |sel: &dyn Fn(&BatchCounters) -> QueueCounters| {
            est(&|b| {
                let q = sel(b);
                (q.departures as f64, q.busy_slots as f64)
            })
        };
        let delay = |sel: &dyn Fn(&BatchCounters) -> DelayCounter| {
            est(&|b| {
                let d = sel(b);
                (d.total, d.count as f64)
            })
        };
        let per_relay = |f: &dyn Fn(usize) -> Estimate| (0..n).map(f).collect::<Vec<_>>();
        Self {
            mu_p_hat: service(&|b| b.primary),
            mu_s_hat: service(&|b| b.secondary),
            pi_p0_hat: est(&|b| (b.primary_idle_slots as f64, b.slots as f64)),
            pi_s0_hat: est(&|b| (b.secondary_empty_slots as f64, b.slots as f64)),
            lambda_pk_hat: per_relay(&|k| est(&|b| (b.relay_p[k].arrivals as f64, b.slots as f64))),
            lambda_sk_hat: per_relay(&|k| est(&|b| (b.relay_s[k].arrivals as f64, b.slots as f64))),
            mu_pk_hat: per_relay(&|k| service(&|b| b.relay_p[k])),
            mu_sk_hat: per_relay(&|k| service(&|b| b.relay_s[k])),
            d_p_hat: delay(&|b| b.delay_p_source),
            d_s_hat: delay(&|b| b.delay_s_source),
            d_pk_hat: per_relay(&|k| delay(&|b| b.delay_pk[k])),
            d_sk_hat: per_relay(&|k| delay(&|b| b.delay_sk[k])),
            d_p_total_hat: delay(&|b| b.delay_p_total),
            d_s_total_hat: delay(&|b| b.delay_s_total),
            collisions: totals.collisions,
            seed: 0,
            slots: totals.slots,
            replications: 1,
            totals,
            final_queues: Vec::new(),
            trace: None,
        }
    }
}

/// Seed of replication `index`: a bijective mix of `base + index * K` with
/// odd `K`, hence injective in `index` for a fixed base.
pub fn derive_replication_seed(base_seed: u64, replication_index: u64) -> u64 {
    let mut z = base_seed.wrapping_add(replication_index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Who may admit an undelivered packet.
enum Decoder {
    None,
    Ordered {
        orders: Vec<Vec<usize>>,
        dist: WeightedIndex<f64>,
    },
    Assigned(WeightedIndex<f64>),
}

impl Decoder {
    fn new(decoding: &Decoding, primary: bool, n: usize) -> Result<Self, SimError> {
        if n == 0 {
            return Ok(Decoder::None);
        }
        let bad = |e| SimError::InvalidConfig(format!("decoding distribution: {e}"));
        Ok(match decoding {
            Decoding::Ordered {
                primary: dp,
                secondary: ds,
            } => {
                let d = if primary { dp } else { ds };
                let (orders, w): (Vec<_>, Vec<_>) =
                    d.iter().map(|(r, p)| (r.acceptance_order(), p)).unzip();
                Decoder::Ordered {
                    orders,
                    dist: WeightedIndex::new(w).map_err(bad)?,
                }
            }
            Decoding::Assigned { beta } => Decoder::Assigned(WeightedIndex::new(beta).map_err(bad)?),
            Decoding::RoundRobin => Decoder::Assigned(WeightedIndex::new(vec![1.0; n]).map_err(bad)?),
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum User {
    Primary,
    Secondary,
}

struct Engine<'a> {
    outages: &'a OutageMatrix,
    params: &'a StrategyParams,
    traffic: TrafficParams,
    sensing: Option<&'a SensingErrorParams>,
    cfg: &'a SimConfig,
    schedule: Option<WeightedIndex<f64>>,
    decoder_p: Decoder,
    decoder_s: Decoder,
}

struct State {
    primary: VecDeque<u64>,
    secondary: VecDeque<u64>,
    /// (source arrival slot, admission slot)
    relay_p: Vec<VecDeque<(u64, u64)>>,
    relay_s: Vec<VecDeque<(u64, u64)>>,
    /// Lifetime (arrivals, departures) per queue, for conservation checks.
    #[cfg(debug_assertions)]
    ledger: Vec<(u64, u64)>,
}

impl State {
    fn new(n: usize) -> Self {
        Self {
            primary: VecDeque::new(),
            secondary: VecDeque::new(),
            relay_p: vec![VecDeque::new(); n],
            relay_s: vec![VecDeque::new(); n],
            #[cfg(debug_assertions)]
            ledger: vec![(0, 0); 2 + 2 * n],
        }
    }

    fn snapshot(&self) -> NodeQueues {
        NodeQueues {
            primary: self.primary.len(),
            secondary: self.secondary.len(),
            relay_p: self.relay_p.iter().map(VecDeque::len).collect(),
            relay_s: self.relay_s.iter().map(VecDeque::len).collect(),
        }
    }

    #[cfg(debug_assertions)]
    fn check_conservation(&self, saturated_primary: bool) {
        let n = self.relay_p.len();
        let lens = std::iter::once(self.primary.len())
            .chain(std::iter::once(self.secondary.len()))
            .chain(self.relay_p.iter().map(VecDeque::len))
            .chain(self.relay_s.iter().map(VecDeque::len));
        for (i, (len, (a, d))) in lens.zip(&self.ledger).enumerate() {
            if i == 0 && saturated_primary {
                continue;
            }
            debug_assert_eq!(*a, *d + len as u64, "packet conservation broken at queue {i} of {}", 2 + 2 * n);
        }
    }

    #[cfg(debug_assertions)]
    fn note(&mut self, idx: usize, arrival: bool) {
        if arrival {
            self.ledger[idx].0 += 1;
        } else {
            self.ledger[idx].1 += 1;
        }
    }

    #[cfg(not(debug_assertions))]
    fn note(&mut self, _idx: usize, _arrival: bool) {}
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

impl<'a> Engine<'a> {
    fn new(
        outages: &'a OutageMatrix,
        params: &'a StrategyParams,
        traffic: TrafficParams,
        sensing: Option<&'a SensingErrorParams>,
        cfg: &'a SimConfig,
    ) -> Result<Self, SimError> {
        params.validate()?;
        traffic.validate()?;
        let n = params.n_relays();
        if outages.validate().is_err() || outages.n_relays() != n {
            return Err(SimError::InvalidConfig(format!(
                "outage matrix must be valid and cover {n} relays"
            )));
        }
        if let Some(se) = sensing {
            se.validate()?;
            if se.n_relays() != n {
                return Err(SimError::InvalidConfig(format!(
                    "sensing errors cover {} relays, expected {n}",
                    se.n_relays()
                )));
            }
        }
        if cfg.slots == 0 || cfg.batches == 0 {
            return Err(SimError::InvalidConfig("slots and batches must be positive".into()));
        }
        let schedule = if n == 0 {
            None
        } else {
            Some(
                WeightedIndex::new(&params.omega)
                    .map_err(|e| SimError::InvalidConfig(format!("omega: {e}")))?,
            )
        };
        Ok(Self {
            outages,
            params,
            traffic,
            sensing,
            cfg,
            schedule,
            decoder_p: Decoder::new(&params.decoding, true, n)?,
            decoder_s: Decoder::new(&params.decoding, false, n)?,
        })
    }

    fn n(&self) -> usize {
        self.params.n_relays()
    }

    fn run(&self, seed: u64) -> Result<(Vec<BatchCounters>, NodeQueues, Option<Vec<SlotOutcome>>), SimError> {
        let n = self.n();
        let cfg = self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut st = State::new(n);
        let mut warm = BatchCounters::new(n);
        let mut batches = vec![BatchCounters::new(n); cfg.batches.min(cfg.slots as usize).max(1)];
        let n_batches = batches.len() as u64;
        let mut trace = cfg.trace.then(Vec::new);
        let total = cfg.warmup + cfg.slots;
        for t in 0..total {
            let c = if t < cfg.warmup {
                &mut warm
            } else {
                let b = ((t - cfg.warmup) * n_batches / cfg.slots) as usize;
                &mut batches[b]
            };
            let outcome = self.step(t, &mut rng, &mut st, c)?;
            if let Some(tr) = trace.as_mut() {
                tr.push(outcome);
            }
            #[cfg(debug_assertions)]
            st.check_conservation(cfg.saturated_primary);
        }
        Ok((batches, st.snapshot(), trace))
    }

    fn step(
        &self,
        t: u64,
        rng: &mut ChaCha8Rng,
        st: &mut State,
        c: &mut BatchCounters,
    ) -> Result<SlotOutcome, SimError> {
        let n = self.n();
        c.slots += 1;

        // (1) arrivals at slot start
        if !self.cfg.saturated_primary && bernoulli(rng, self.traffic.lambda_p) {
            st.primary.push_back(t);
            st.note(0, true);
            c.primary.arrivals += 1;
        }
        if bernoulli(rng, self.traffic.lambda_s) {
            st.secondary.push_back(t);
            st.note(1, true);
            c.secondary.arrivals += 1;
        }
        if st.primary.len() > QUEUE_GUARD {
            return Err(SimError::Unstable {
                queue: QueueId::Primary,
                slot: t,
            });
        }
        if st.secondary.len() > QUEUE_GUARD {
            return Err(SimError::Unstable {
                queue: QueueId::Secondary,
                slot: t,
            });
        }

        // (2)-(3) user activity; the secondary senses perfectly
        let pu_active = self.cfg.saturated_primary || !st.primary.is_empty();
        let su_active = !pu_active && !st.secondary.is_empty();
        if pu_active {
            c.primary.busy_slots += 1;
        } else {
            c.primary_idle_slots += 1;
        }
        if st.secondary.is_empty() {
            c.secondary_empty_slots += 1;
        } else {
            c.secondary.busy_slots += 1;
        }
        for k in 0..n {
            if !st.relay_p[k].is_empty() {
                c.relay_p[k].busy_slots += 1;
            }
            if !st.relay_s[k].is_empty() {
                c.relay_s[k].busy_slots += 1;
            }
        }

        // (4) scheduled relay
        let mut relay_tx: Option<(usize, bool)> = None;
        let mut has_real = false;
        if let Some(sched) = &self.schedule {
            let r = sched.sample(rng);
            let serve_primary = bernoulli(rng, self.params.alpha[r]);
            has_real = if serve_primary {
                !st.relay_p[r].is_empty()
            } else {
                !st.relay_s[r].is_empty()
            };
            let wants = match self.cfg.mode {
                RelayMode::TrueQueues => has_real,
                RelayMode::SaturatedRelays => true,
            };
            if wants {
                let idle = match self.sensing {
                    None => !pu_active && !su_active,
                    Some(se) => {
                        let busy1 = if pu_active {
                            !bernoulli(rng, se.p_md_p[r])
                        } else {
                            bernoulli(rng, se.p_fa[r])
                        };
                        let busy2 = if pu_active {
                            !bernoulli(rng, se.p_md_p[r])
                        } else if su_active {
                            !bernoulli(rng, se.p_md_s[r])
                        } else {
                            bernoulli(rng, se.p_fa[r])
                        };
                        !busy1 && !busy2
                    }
                };
                if idle {
                    relay_tx = Some((r, serve_primary));
                }
            }
        }

        let user = if pu_active {
            Some(User::Primary)
        } else if su_active {
            Some(User::Secondary)
        } else {
            None
        };
        let collision = relay_tx.is_some() && user.is_some();
        debug_assert!(self.sensing.is_some() || !collision, "collision under perfect sensing");
        let mut outcome = SlotOutcome {
            slot: t,
            transmitter: match user {
                Some(User::Primary) => Transmitter::Primary,
                Some(User::Secondary) => Transmitter::Secondary,
                None => Transmitter::None,
            },
            relay: relay_tx.map(|(r, _)| r as u8),
            relay_serves_primary: relay_tx.is_some_and(|(_, p)| p),
            collision,
            destination_ok: false,
            relay_decoded: 0,
            feedback: Feedback::None,
            accepted_by: None,
        };
        if collision {
            c.collisions += 1;
            outcome.feedback = Feedback::Nack;
            return Ok(outcome);
        }

        // (5)-(6) user transmission, feedback and relay admission
        if let Some(u) = user {
            let (direct_outage, decode_outage, accept, decoder) = match u {
                User::Primary => (
                    self.outages.p_pd,
                    &self.outages.p_relay,
                    &self.params.f_p,
                    &self.decoder_p,
                ),
                User::Secondary => (
                    self.outages.s_sd,
                    &self.outages.s_relay,
                    &self.params.f_s,
                    &self.decoder_s,
                ),
            };
            if bernoulli(rng, 1.0 - direct_outage) {
                outcome.destination_ok = true;
                outcome.feedback = Feedback::Ack;
                match u {
                    User::Primary => {
                        if let Some(a) = pop_user(&mut st.primary, self.cfg.saturated_primary) {
                            c.delay_p_source.record(t - a + 1);
                            c.delay_p_total.record(t - a + 1);
                        }
                        st.note(0, false);
                        c.primary.departures += 1;
                    }
                    User::Secondary => {
                        let a = st.secondary.pop_front().expect("active secondary has a packet");
                        st.note(1, false);
                        c.secondary.departures += 1;
                        c.delay_s_source.record(t - a + 1);
                        c.delay_s_total.record(t - a + 1);
                    }
                }
                return Ok(outcome);
            }
            outcome.feedback = Feedback::Nack;
            let mut decoded = 0u32;
            for k in 0..n {
                if bernoulli(rng, 1.0 - decode_outage[k]) {
                    decoded |= 1 << k.min(31);
                }
            }
            outcome.relay_decoded = decoded;
            let did = |k: usize| decoded & (1 << k.min(31)) != 0;
            let admitted = match decoder {
                Decoder::None => None,
                Decoder::Ordered { orders, dist } => {
                    let order = &orders[dist.sample(rng)];
                    let mut found = None;
                    for &k in order {
                        if did(k) && bernoulli(rng, accept[k]) {
                            found = Some(k);
                            break;
                        }
                    }
                    found
                }
                Decoder::Assigned(dist) => {
                    let k = dist.sample(rng);
                    (did(k) && bernoulli(rng, accept[k])).then_some(k)
                }
            };
            if let Some(k) = admitted {
                outcome.accepted_by = Some(k as u8);
                match u {
                    User::Primary => {
                        let a = pop_user(&mut st.primary, self.cfg.saturated_primary);
                        st.note(0, false);
                        c.primary.departures += 1;
                        if let Some(a) = a {
                            c.delay_p_source.record(t - a + 1);
                        }
                        // a saturated source has no arrival stamp; use the slot
                        st.relay_p[k].push_back((a.unwrap_or(u64::MAX), t));
                        st.note(2 + k, true);
                        c.relay_p[k].arrivals += 1;
                        if st.relay_p[k].len() > QUEUE_GUARD {
                            return Err(SimError::Unstable {
                                queue: QueueId::PrimaryRelay(k),
                                slot: t,
                            });
                        }
                    }
                    User::Secondary => {
                        let a = st.secondary.pop_front().expect("active secondary has a packet");
                        st.note(1, false);
                        c.secondary.departures += 1;
                        c.delay_s_source.record(t - a + 1);
                        st.relay_s[k].push_back((a, t));
                        st.note(2 + n + k, true);
                        c.relay_s[k].arrivals += 1;
                        if st.relay_s[k].len() > QUEUE_GUARD {
                            return Err(SimError::Unstable {
                                queue: QueueId::SecondaryRelay(k),
                                slot: t,
                            });
                        }
                    }
                }
            }
            return Ok(outcome);
        }

        // (7) relay transmission in an idle slot
        if let Some((r, serve_primary)) = relay_tx {
            let outage = if serve_primary {
                self.outages.relay_pd[r]
            } else {
                self.outages.relay_sd[r]
            };
            let ok = bernoulli(rng, 1.0 - outage);
            outcome.destination_ok = ok;
            outcome.feedback = if ok { Feedback::Ack } else { Feedback::Nack };
            if ok && has_real {
                if serve_primary {
                    let (a, adm) = st.relay_p[r].pop_front().expect("checked nonempty");
                    st.note(2 + r, false);
                    c.relay_p[r].departures += 1;
                    c.delay_pk[r].record(t - adm);
                    if a != u64::MAX {
                        c.delay_p_total.record(t - a + 1);
                    }
                } else {
                    let (a, adm) = st.relay_s[r].pop_front().expect("checked nonempty");
                    st.note(2 + n + r, false);
                    c.relay_s[r].departures += 1;
                    c.delay_sk[r].record(t - adm);
                    c.delay_s_total.record(t - a + 1);
                }
            }
        }
        Ok(outcome)
    }
}

fn pop_user(q: &mut VecDeque<u64>, saturated: bool) -> Option<u64> {
    if saturated {
        None
    } else {
        Some(q.pop_front().expect("active primary has a packet"))
    }
}

/// Simulate one replication seeded with `cfg.seed`. Confidence intervals
/// come from batch means.
pub fn run(
    outages: &OutageMatrix,
    params: &StrategyParams,
    traffic: TrafficParams,
    sensing: Option<&SensingErrorParams>,
    cfg: &SimConfig,
) -> Result<SimEstimate, SimError> {
    let engine = Engine::new(outages, params, traffic, sensing, cfg)?;
    let (batches, queues, trace) = engine.run(cfg.seed)?;
    let mut est = SimEstimate::from_groups(&batches, engine.n());
    est.seed = cfg.seed;
    est.final_queues = vec![queues];
    est.trace = trace;
    Ok(est)
}

/// Run `replications` independent replications in parallel, replication `i`
/// seeded with `derive_replication_seed(cfg.seed, i)`. With two or more
/// replications the confidence intervals are computed across replications.
pub fn run_replications(
    outages: &OutageMatrix,
    params: &StrategyParams,
    traffic: TrafficParams,
    sensing: Option<&SensingErrorParams>,
    cfg: &SimConfig,
    replications: usize,
) -> Result<SimEstimate, SimError> {
    if replications == 0 {
        return Err(SimError::InvalidConfig("replications must be positive".into()));
    }
    let engine = Engine::new(outages, params, traffic, sensing, cfg)?;
    let n = engine.n();
    let runs: Vec<_> = (0..replications)
        .into_par_iter()
        .map(|i| engine.run(derive_replication_seed(cfg.seed, i as u64)))
        .collect::<Result<_, _>>()?;
    let mut groups = Vec::with_capacity(replications);
    let mut all_batches = Vec::new();
    let mut queues = Vec::with_capacity(replications);
    let mut traces: Option<Vec<SlotOutcome>> = cfg.trace.then(Vec::new);
    for (batches, q, tr) in runs {
        let mut sum = BatchCounters::new(n);
        for b in &batches {
            sum.add(b);
        }
        groups.push(sum);
        all_batches.extend(batches);
        queues.push(q);
        if let (Some(all), Some(tr)) = (traces.as_mut(), tr) {
            all.extend(tr);
        }
    }
    let mut est = if replications >= 2 {
        SimEstimate::from_groups(&groups, n)
    } else {
        SimEstimate::from_groups(&all_batches, n)
    };
    est.seed = cfg.seed;
    est.replications = replications;
    est.final_queues = queues;
    est.trace = traces;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Strategy;
    use std::collections::HashSet;

    fn table1() -> OutageMatrix {
        OutageMatrix {
            p_pd: 0.1,
            s_sd: 0.1,
            p_relay: vec![0.1, 0.02],
            s_relay: vec![0.1, 0.02],
            relay_pd: vec![0.1, 0.1],
            relay_sd: vec![0.1, 0.1],
        }
    }

    fn cfg(slots: u64, seed: u64) -> SimConfig {
        SimConfig {
            slots,
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn zero_traffic_keeps_everything_idle() {
        let p = StrategyParams::uniform(Strategy::OrderedAcceptance, 2);
        let e = run(&table1(), &p, TrafficParams::new(0.0, 0.0), None, &cfg(10_000, 1)).unwrap();
        assert_eq!(e.pi_p0_hat.mean, Some(1.0));
        assert_eq!(e.pi_s0_hat.mean, Some(1.0));
        assert_eq!(e.mu_p_hat.mean, None);
        assert!(e.lambda_pk_hat.iter().all(|l| l.mean == Some(0.0)));
    }

    #[test]
    fn identical_seed_is_bit_identical() {
        let p = StrategyParams::uniform(Strategy::RandomAssignment, 2);
        let t = TrafficParams::new(0.3, 0.2);
        let a = run(&table1(), &p, t, None, &cfg(20_000, 7)).unwrap();
        let b = run(&table1(), &p, t, None, &cfg(20_000, 7)).unwrap();
        assert_eq!(a, b);
        let c = run(&table1(), &p, t, None, &cfg(20_000, 8)).unwrap();
        assert_ne!(a.totals, c.totals);
    }

    #[test]
    fn perfect_sensing_never_collides() {
        let p = StrategyParams::uniform(Strategy::OrderedAcceptance, 2);
        let mut c = cfg(50_000, 3);
        c.mode = RelayMode::SaturatedRelays;
        let e = run(&table1(), &p, TrafficParams::new(0.4, 0.3), None, &c).unwrap();
        assert_eq!(e.collisions, 0);
    }

    #[test]
    fn seeds_are_distinct() {
        let s: HashSet<u64> = (0..10_000).map(|i| derive_replication_seed(42, i)).collect();
        assert_eq!(s.len(), 10_000);
        assert_eq!(derive_replication_seed(42, 0), derive_replication_seed(42, 0));
    }

    #[test]
    fn deterministic_link_serves_every_slot() {
        let o = OutageMatrix::direct_only(0.0, 0.0);
        let p = StrategyParams::uniform(Strategy::RoundRobin, 0);
        let mut c = cfg(1000, 0);
        c.saturated_primary = true;
        let e = run(&o, &p, TrafficParams::new(0.0, 0.0), None, &c).unwrap();
        assert_eq!(e.mu_p_hat.mean, Some(1.0));
        assert_eq!(measure_conditional_service(&e.totals.primary), Some(1.0));
    }

    #[test]
    fn trace_records_every_slot() {
        let p = StrategyParams::uniform(Strategy::OrderedAcceptance, 2);
        let mut c = cfg(500, 5);
        c.trace = true;
        let e = run(&table1(), &p, TrafficParams::new(0.5, 0.3), None, &c).unwrap();
        let tr = e.trace.unwrap();
        assert_eq!(tr.len(), 500);
        for o in &tr {
            assert!(!(o.collision && o.destination_ok));
            assert!(o.accepted_by.is_none() || o.feedback == Feedback::Nack);
        }
    }

    #[test]
    fn replications_are_reproducible() {
        let p = StrategyParams::uniform(Strategy::OrderedAcceptance, 2);
        let t = TrafficParams::new(0.3, 0.2);
        let a = run_replications(&table1(), &p, t, None, &cfg(5_000, 9), 4).unwrap();
        let b = run_replications(&table1(), &p, t, None, &cfg(5_000, 9), 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.slots, 20_000);
    }
}
