//! Rayleigh-fading link model: transmission rates, feedback overhead and
//! per-link outage probabilities.
//!
//! A transmitter that starts later in the slot (after sensing) has less
//! airtime, so it must transmit at a higher rate and sees more outage. The
//! feedback phase at the end of the slot eats into the same airtime, and its
//! length depends on the relay decoding strategy.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("sensing and feedback overhead {overhead:.6e}s does not fit in slot of {slot:.6e}s")]
    TimingOverflow { overhead: f64, slot: f64 },
    #[error("invalid slot timing: {0}")]
    InvalidTiming(String),
    #[error("invalid link parameters: {0}")]
    InvalidLink(String),
    #[error("invalid outage matrix: {0}")]
    InvalidOutages(String),
}

/// Relay decoding strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Ordered acceptance: every relay listens, acceptance follows a ranking.
    OrderedAcceptance,
    /// Random assignment: one relay, drawn from `beta`, may decode per slot.
    RandomAssignment,
    /// Round robin: random assignment with uniform `beta`.
    RoundRobin,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::OrderedAcceptance,
        Strategy::RandomAssignment,
        Strategy::RoundRobin,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Strategy::OrderedAcceptance => "od",
            Strategy::RandomAssignment => "rd",
            Strategy::RoundRobin => "rr",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "od" | "ordered" => Ok(Strategy::OrderedAcceptance),
            "rd" | "random" => Ok(Strategy::RandomAssignment),
            "rr" | "round_robin" | "roundrobin" => Ok(Strategy::RoundRobin),
            other => Err(format!("unknown strategy `{other}` (expected od, rd or rr)")),
        }
    }
}

/// Which transmitter starts the transmission, i.e. how many sensing
/// sub-intervals precede it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensingStage {
    /// Primary transmitter, starts at the beginning of the slot.
    Primary,
    /// Secondary transmitter, starts after one sensing interval.
    Secondary,
    /// Relays, start after two sensing intervals.
    Relay,
}

impl SensingStage {
    pub fn index(self) -> u32 {
        match self {
            SensingStage::Primary => 0,
            SensingStage::Secondary => 1,
            SensingStage::Relay => 2,
        }
    }

    pub fn from_index(i: u32) -> Option<Self> {
        match i {
            0 => Some(SensingStage::Primary),
            1 => Some(SensingStage::Secondary),
            2 => Some(SensingStage::Relay),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotTiming {
    /// Slot duration in seconds.
    pub slot: f64,
    /// Sensing sub-interval in seconds.
    pub tau: f64,
    /// Feedback duration per acknowledging node in seconds.
    pub tau_f: f64,
    /// Packet size in bits.
    pub packet_bits: f64,
    /// Channel bandwidth in Hz.
    pub bandwidth: f64,
}

impl SlotTiming {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |msg: &str| Err(ChannelError::InvalidTiming(msg.to_string()));
        if !(self.slot > 0.0) {
            return bad("slot duration must be positive");
        }
        if !(self.tau >= 0.0) {
            return bad("tau must be non-negative");
        }
        if !(self.tau_f >= 0.0) {
            return bad("tau_f must be non-negative");
        }
        if !(self.packet_bits > 0.0) {
            return bad("packet size must be positive");
        }
        if !(self.bandwidth > 0.0) {
            return bad("bandwidth must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    /// Mean received SNR at unit channel gain.
    pub gamma: f64,
    /// Mean channel power gain.
    pub sigma: f64,
}

impl LinkParams {
    pub fn new(gamma: f64, sigma: f64) -> Self {
        Self { gamma, sigma }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.gamma > 0.0) || !(self.sigma > 0.0) {
            return Err(ChannelError::InvalidLink(format!(
                "gamma and sigma must be positive (gamma={}, sigma={})",
                self.gamma, self.sigma
            )));
        }
        Ok(())
    }
}

/// Total feedback duration `T_F` at the end of each slot.
///
/// Ordered acceptance needs one feedback window for the destination plus one
/// per relay; the single-decoder strategies need two.
pub fn feedback_duration(strategy: Strategy, n_relays: usize, tau_f: f64) -> f64 {
    match strategy {
        Strategy::OrderedAcceptance => (n_relays as f64 + 1.0) * tau_f,
        // With no relays only the destination acknowledges.
        Strategy::RandomAssignment | Strategy::RoundRobin if n_relays == 0 => tau_f,
        Strategy::RandomAssignment | Strategy::RoundRobin => 2.0 * tau_f,
    }
}

/// Transmission rate in bit/s for a node starting at `stage`.
pub fn transmission_rate(
    timing: &SlotTiming,
    stage: SensingStage,
    strategy: Strategy,
    n_relays: usize,
) -> Result<f64, ChannelError> {
    let overhead = stage.index() as f64 * timing.tau
        + feedback_duration(strategy, n_relays, timing.tau_f);
    if overhead >= timing.slot {
        return Err(ChannelError::TimingOverflow {
            overhead,
            slot: timing.slot,
        });
    }
    Ok(timing.packet_bits / (timing.slot - overhead))
}

/// Probability that a packet sent over `link` is received correctly.
pub fn success_probability(
    link: &LinkParams,
    timing: &SlotTiming,
    stage: SensingStage,
    strategy: Strategy,
    n_relays: usize,
) -> Result<f64, ChannelError> {
    let rate = transmission_rate(timing, stage, strategy, n_relays)?;
    Ok(success_at_rate(link, rate, timing.bandwidth))
}

pub fn outage_probability(
    link: &LinkParams,
    timing: &SlotTiming,
    stage: SensingStage,
    strategy: Strategy,
    n_relays: usize,
) -> Result<f64, ChannelError> {
    success_probability(link, timing, stage, strategy, n_relays).map(|p| 1.0 - p)
}

fn success_at_rate(link: &LinkParams, rate: f64, bandwidth: f64) -> f64 {
    let threshold = (rate / bandwidth).exp2() - 1.0;
    (-threshold / (link.gamma * link.sigma)).exp()
}

/// Outage probabilities of every link in the network.
///
/// Either supplied directly or derived from [`PhysicalChannel`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutageMatrix {
    /// Primary transmitter to primary destination.
    pub p_pd: f64,
    /// Secondary transmitter to secondary destination.
    pub s_sd: f64,
    /// Primary transmitter to relay k.
    pub p_relay: Vec<f64>,
    /// Secondary transmitter to relay k.
    pub s_relay: Vec<f64>,
    /// Relay k to primary destination.
    pub relay_pd: Vec<f64>,
    /// Relay k to secondary destination.
    pub relay_sd: Vec<f64>,
}

impl OutageMatrix {
    /// Network without relays.
    pub fn direct_only(p_pd: f64, s_sd: f64) -> Self {
        Self {
            p_pd,
            s_sd,
            p_relay: Vec::new(),
            s_relay: Vec::new(),
            relay_pd: Vec::new(),
            relay_sd: Vec::new(),
        }
    }

    pub fn n_relays(&self) -> usize {
        self.p_relay.len()
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let n = self.p_relay.len();
        for (name, v) in [
            ("s_relay", &self.s_relay),
            ("relay_pd", &self.relay_pd),
            ("relay_sd", &self.relay_sd),
        ] {
            if v.len() != n {
                return Err(ChannelError::InvalidOutages(format!(
                    "{name} has {} entries, expected {n}",
                    v.len()
                )));
            }
        }
        let all = [self.p_pd, self.s_sd]
            .into_iter()
            .chain(self.p_relay.iter().copied())
            .chain(self.s_relay.iter().copied())
            .chain(self.relay_pd.iter().copied())
            .chain(self.relay_sd.iter().copied());
        for p in all {
            if !(0.0..=1.0).contains(&p) {
                return Err(ChannelError::InvalidOutages(format!(
                    "outage probability {p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Keep only the first `n` relays.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.n_relays());
        Self {
            p_pd: self.p_pd,
            s_sd: self.s_sd,
            p_relay: self.p_relay[..n].to_vec(),
            s_relay: self.s_relay[..n].to_vec(),
            relay_pd: self.relay_pd[..n].to_vec(),
            relay_sd: self.relay_sd[..n].to_vec(),
        }
    }
}

/// Link statistics and slot timing, from which outages are derived per
/// strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalChannel {
    pub timing: SlotTiming,
    pub p_pd: LinkParams,
    pub s_sd: LinkParams,
    pub p_relay: Vec<LinkParams>,
    pub s_relay: Vec<LinkParams>,
    pub relay_pd: Vec<LinkParams>,
    pub relay_sd: Vec<LinkParams>,
}

impl PhysicalChannel {
    pub fn n_relays(&self) -> usize {
        self.p_relay.len()
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        self.timing.validate()?;
        let n = self.p_relay.len();
        for v in [&self.s_relay, &self.relay_pd, &self.relay_sd] {
            if v.len() != n {
                return Err(ChannelError::InvalidLink(format!(
                    "relay link vectors disagree in length ({} vs {n})",
                    v.len()
                )));
            }
        }
        self.p_pd.validate()?;
        self.s_sd.validate()?;
        for l in self
            .p_relay
            .iter()
            .chain(&self.s_relay)
            .chain(&self.relay_pd)
            .chain(&self.relay_sd)
        {
            l.validate()?;
        }
        Ok(())
    }

    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.n_relays());
        Self {
            timing: self.timing,
            p_pd: self.p_pd,
            s_sd: self.s_sd,
            p_relay: self.p_relay[..n].to_vec(),
            s_relay: self.s_relay[..n].to_vec(),
            relay_pd: self.relay_pd[..n].to_vec(),
            relay_sd: self.relay_sd[..n].to_vec(),
        }
    }

    pub fn outages(&self, strategy: Strategy) -> Result<OutageMatrix, ChannelError> {
        self.validate()?;
        let n = self.n_relays();
        let t = &self.timing;
        let out = |link: &LinkParams, stage| -> Result<f64, ChannelError> {
            outage_probability(link, t, stage, strategy, n)
        };
        let each = |links: &[LinkParams], stage| -> Result<Vec<f64>, ChannelError> {
            links.iter().map(|l| out(l, stage)).collect()
        };
        Ok(OutageMatrix {
            p_pd: out(&self.p_pd, SensingStage::Primary)?,
            s_sd: out(&self.s_sd, SensingStage::Secondary)?,
            p_relay: each(&self.p_relay, SensingStage::Primary)?,
            s_relay: each(&self.s_relay, SensingStage::Secondary)?,
            relay_pd: each(&self.relay_pd, SensingStage::Relay)?,
            relay_sd: each(&self.relay_sd, SensingStage::Relay)?,
        })
    }
}

/// How the network's links are described.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSpec {
    /// Outage probabilities given directly; identical for every strategy.
    Outages(OutageMatrix),
    /// Outages derived from physical parameters; depend on the strategy
    /// through the feedback duration.
    Physical(PhysicalChannel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub channel: ChannelSpec,
}

impl NetworkConfig {
    pub fn from_outages(outages: OutageMatrix) -> Self {
        Self {
            channel: ChannelSpec::Outages(outages),
        }
    }

    pub fn from_physical(physical: PhysicalChannel) -> Self {
        Self {
            channel: ChannelSpec::Physical(physical),
        }
    }

    pub fn n_relays(&self) -> usize {
        match &self.channel {
            ChannelSpec::Outages(o) => o.n_relays(),
            ChannelSpec::Physical(p) => p.n_relays(),
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        match &self.channel {
            ChannelSpec::Outages(o) => o.validate(),
            ChannelSpec::Physical(p) => p.validate(),
        }
    }

    pub fn outages(&self, strategy: Strategy) -> Result<OutageMatrix, ChannelError> {
        match &self.channel {
            ChannelSpec::Outages(o) => {
                o.validate()?;
                Ok(o.clone())
            }
            ChannelSpec::Physical(p) => p.outages(strategy),
        }
    }

    /// The same network restricted to its first `n` relays.
    pub fn with_relays(&self, n: usize) -> Self {
        let channel = match &self.channel {
            ChannelSpec::Outages(o) => ChannelSpec::Outages(o.truncated(n)),
            ChannelSpec::Physical(p) => ChannelSpec::Physical(p.truncated(n)),
        };
        Self { channel }
    }

    pub fn timing_mut(&mut self) -> Option<&mut SlotTiming> {
        match &mut self.channel {
            ChannelSpec::Physical(p) => Some(&mut p.timing),
            ChannelSpec::Outages(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table2_timing(tau_f: f64) -> SlotTiming {
        SlotTiming {
            slot: 1e-3,
            tau: 1e-4,
            tau_f,
            packet_bits: 1000.0,
            bandwidth: 1e7,
        }
    }

    #[test]
    fn rate_without_overhead() {
        let t = SlotTiming {
            tau: 0.0,
            ..table2_timing(0.0)
        };
        let r = transmission_rate(&t, SensingStage::Primary, Strategy::OrderedAcceptance, 2).unwrap();
        assert!((r - 1e6).abs() < 1e-6);
    }

    #[test]
    fn relay_rate_after_two_sensing_intervals() {
        let t = table2_timing(0.0);
        let r = transmission_rate(&t, SensingStage::Relay, Strategy::RandomAssignment, 3).unwrap();
        assert!((r - 1.25e6).abs() < 1e-6);
    }

    #[test]
    fn feedback_filling_the_slot_overflows() {
        let t = SlotTiming {
            tau: 0.0,
            tau_f: 1e-3 / 3.0,
            ..table2_timing(0.0)
        };
        for stage in [SensingStage::Primary, SensingStage::Secondary, SensingStage::Relay] {
            let err = transmission_rate(&t, stage, Strategy::OrderedAcceptance, 2).unwrap_err();
            assert!(matches!(err, ChannelError::TimingOverflow { .. }));
        }
    }

    #[test]
    fn feedback_durations() {
        let tf = 0.24e-3;
        assert!((feedback_duration(Strategy::OrderedAcceptance, 2, tf) - 0.72e-3).abs() < 1e-15);
        assert!((feedback_duration(Strategy::RandomAssignment, 2, tf) - 0.48e-3).abs() < 1e-15);
        assert!((feedback_duration(Strategy::RoundRobin, 2, tf) - 0.48e-3).abs() < 1e-15);
        for s in Strategy::ALL {
            assert_eq!(feedback_duration(s, 4, 0.0), 0.0);
        }
    }

    #[test]
    fn pu_to_relay_success() {
        let t = SlotTiming {
            tau: 0.0,
            ..table2_timing(0.0)
        };
        let link = LinkParams::new(3.0, 0.82);
        let p = success_probability(&link, &t, SensingStage::Primary, Strategy::OrderedAcceptance, 2)
            .unwrap();
        let expected = (-(2f64.powf(0.1) - 1.0) / 2.46).exp();
        assert!((p - expected).abs() < 1e-15);
        assert!((p - 0.9713).abs() < 1e-4);
        let q = outage_probability(&link, &t, SensingStage::Primary, Strategy::OrderedAcceptance, 2)
            .unwrap();
        assert_eq!(p + q, 1.0);
    }

    #[test]
    fn strong_link_is_nearly_perfect() {
        let t = table2_timing(0.0);
        let link = LinkParams::new(1e9, 1.0);
        let p = success_probability(&link, &t, SensingStage::Relay, Strategy::RoundRobin, 1).unwrap();
        assert!(p > 1.0 - 1e-9);
    }

    #[test]
    fn later_start_means_more_outage() {
        let t = table2_timing(0.0);
        let link = LinkParams::new(2.5, 0.9);
        let s0 = success_probability(&link, &t, SensingStage::Primary, Strategy::RandomAssignment, 2)
            .unwrap();
        let s2 = success_probability(&link, &t, SensingStage::Relay, Strategy::RandomAssignment, 2)
            .unwrap();
        assert!(s2 < s0);
    }

    #[test]
    fn ordered_acceptance_pays_for_longer_feedback() {
        let t = table2_timing(0.05e-3);
        let link = LinkParams::new(2.0, 0.8);
        for n in 2..5 {
            for stage in [SensingStage::Primary, SensingStage::Secondary, SensingStage::Relay] {
                let od = success_probability(&link, &t, stage, Strategy::OrderedAcceptance, n).unwrap();
                let rd = success_probability(&link, &t, stage, Strategy::RandomAssignment, n).unwrap();
                assert!(od <= rd, "n={n} stage={stage:?}");
            }
        }
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("OD".parse::<Strategy>().unwrap(), Strategy::OrderedAcceptance);
        assert_eq!("rr".parse::<Strategy>().unwrap(), Strategy::RoundRobin);
        assert!("xx".parse::<Strategy>().is_err());
    }
}
