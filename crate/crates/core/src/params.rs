//! Decision variables, traffic and sensing-error descriptions shared by the
//! analytic model, the optimizer and the simulator.

use thiserror::Error;

use crate::channel::Strategy;
use crate::orders::OrderDistribution;

const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid parameters: {}", .0.join("; "))]
pub struct ParamError(pub Vec<String>);

/// How undelivered packets are handed to relays.
#[derive(Debug, Clone, PartialEq)]
pub enum Decoding {
    /// Ordered acceptance with separate ranking distributions for primary and
    /// secondary packets.
    Ordered {
        primary: OrderDistribution,
        secondary: OrderDistribution,
    },
    /// Random assignment: relay `k` decodes with probability `beta[k]`.
    Assigned { beta: Vec<f64> },
    /// Random assignment with uniform `beta`.
    RoundRobin,
}

impl Decoding {
    pub fn strategy(&self) -> Strategy {
        match self {
            Decoding::Ordered { .. } => Strategy::OrderedAcceptance,
            Decoding::Assigned { .. } => Strategy::RandomAssignment,
            Decoding::RoundRobin => Strategy::RoundRobin,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyParams {
    /// Probability that relay k is scheduled to transmit in a slot.
    pub omega: Vec<f64>,
    /// Probability that a scheduled relay serves its primary relaying queue.
    pub alpha: Vec<f64>,
    /// Acceptance probability for correctly decoded primary packets.
    pub f_p: Vec<f64>,
    /// Acceptance probability for correctly decoded secondary packets.
    pub f_s: Vec<f64>,
    pub decoding: Decoding,
}

impl StrategyParams {
    /// Uniform schedule, `alpha = 1/2`, full acceptance and uniform
    /// decoding assignment.
    pub fn uniform(strategy: Strategy, n_relays: usize) -> Self {
        let n = n_relays;
        let u = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        let decoding = match strategy {
            Strategy::OrderedAcceptance => {
                let d = if n <= crate::orders::MAX_DENSE_RELAYS {
                    OrderDistribution::uniform(n).expect("dense size checked")
                } else {
                    OrderDistribution::from_first_rank_profile(&vec![u; n])
                        .expect("uniform profile is a simplex")
                };
                Decoding::Ordered {
                    primary: d.clone(),
                    secondary: d,
                }
            }
            Strategy::RandomAssignment => Decoding::Assigned { beta: vec![u; n] },
            Strategy::RoundRobin => Decoding::RoundRobin,
        };
        Self {
            omega: vec![u; n],
            alpha: vec![0.5; n],
            f_p: vec![1.0; n],
            f_s: vec![1.0; n],
            decoding,
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.decoding.strategy()
    }

    pub fn n_relays(&self) -> usize {
        self.omega.len()
    }

    /// Per-relay decoding-assignment probabilities for the single-decoder
    /// strategies; `None` under ordered acceptance.
    pub fn assignment(&self) -> Option<Vec<f64>> {
        match &self.decoding {
            Decoding::Ordered { .. } => None,
            Decoding::Assigned { beta } => Some(beta.clone()),
            Decoding::RoundRobin => {
                let n = self.n_relays();
                Some(vec![1.0 / n.max(1) as f64; n])
            }
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let n = self.n_relays();
        let mut v = Vec::new();
        for (name, vec) in [("alpha", &self.alpha), ("f_p", &self.f_p), ("f_s", &self.f_s)] {
            if vec.len() != n {
                v.push(format!("{name} has {} entries, expected {n}", vec.len()));
            }
            if vec.iter().any(|x| !(0.0..=1.0).contains(x)) {
                v.push(format!("{name} entries must lie in [0, 1]"));
            }
        }
        if n > 0 {
            check_simplex("omega", &self.omega, &mut v);
        }
        match &self.decoding {
            Decoding::Ordered { primary, secondary } => {
                for (name, d) in [("order_p", primary), ("order_s", secondary)] {
                    if d.n_relays() != n {
                        v.push(format!("{name} is over {} relays, expected {n}", d.n_relays()));
                    }
                    if n > 0 {
                        if let Err(errs) = d.validate() {
                            v.extend(errs.into_iter().map(|e| format!("{name}: {e}")));
                        }
                    }
                }
            }
            Decoding::Assigned { beta } => {
                if beta.len() != n {
                    v.push(format!("beta has {} entries, expected {n}", beta.len()));
                } else if n > 0 {
                    check_simplex("beta", beta, &mut v);
                }
            }
            Decoding::RoundRobin => {}
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ParamError(v))
        }
    }
}

fn check_simplex(name: &str, x: &[f64], out: &mut Vec<String>) {
    if x.iter().any(|e| !(*e >= 0.0)) {
        out.push(format!("{name} entries must be non-negative"));
    }
    let s: f64 = x.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOLERANCE {
        out.push(format!("{name} sums to {s}, expected 1"));
    }
}

/// Mean Bernoulli arrival rates in packets per slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficParams {
    pub lambda_p: f64,
    pub lambda_s: f64,
}

impl TrafficParams {
    pub fn new(lambda_p: f64, lambda_s: f64) -> Self {
        Self { lambda_p, lambda_s }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let mut v = Vec::new();
        for (name, x) in [("lambda_p", self.lambda_p), ("lambda_s", self.lambda_s)] {
            if !(0.0..=1.0).contains(&x) {
                v.push(format!("{name} = {x} outside [0, 1]"));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ParamError(v))
        }
    }
}

/// Relay sensing errors. The secondary transmitter senses perfectly.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingErrorParams {
    /// Probability relay k misses an active primary transmission.
    pub p_md_p: Vec<f64>,
    /// Probability relay k misses an active secondary transmission.
    pub p_md_s: Vec<f64>,
    /// Probability relay k declares an idle interval busy.
    pub p_fa: Vec<f64>,
}

impl SensingErrorParams {
    pub fn perfect(n_relays: usize) -> Self {
        Self {
            p_md_p: vec![0.0; n_relays],
            p_md_s: vec![0.0; n_relays],
            p_fa: vec![0.0; n_relays],
        }
    }

    pub fn n_relays(&self) -> usize {
        self.p_fa.len()
    }

    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.n_relays());
        Self {
            p_md_p: self.p_md_p[..n].to_vec(),
            p_md_s: self.p_md_s[..n].to_vec(),
            p_fa: self.p_fa[..n].to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let n = self.p_fa.len();
        let mut v = Vec::new();
        for (name, x) in [("p_md_p", &self.p_md_p), ("p_md_s", &self.p_md_s), ("p_fa", &self.p_fa)] {
            if x.len() != n {
                v.push(format!("{name} has {} entries, expected {n}", x.len()));
            }
            if x.iter().any(|e| !(0.0..=1.0).contains(e)) {
                v.push(format!("{name} entries must lie in [0, 1]"));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ParamError(v))
        }
    }

    /// Probability that scheduled relay `r` does not disturb an active
    /// primary transmission: it must miss it in both sensing intervals.
    pub fn primary_protection(&self, r: usize) -> f64 {
        1.0 - self.p_md_p[r] * self.p_md_p[r]
    }

    /// Probability that scheduled relay `r` does not disturb an active
    /// secondary transmission: a collision needs no false alarm on the idle
    /// first interval and a miss on the second.
    pub fn secondary_protection(&self, r: usize) -> f64 {
        1.0 - self.p_md_s[r] * (1.0 - self.p_fa[r])
    }

    /// Probability that relay `k` finds an idle slot idle in both intervals.
    pub fn idle_detection(&self, k: usize) -> f64 {
        (1.0 - self.p_fa[k]).powi(2)
    }

    /// Schedule-averaged primary protection factor; 1 without relays.
    pub fn primary_factor(&self, omega: &[f64]) -> f64 {
        if omega.is_empty() {
            return 1.0;
        }
        omega.iter().enumerate().map(|(r, w)| w * self.primary_protection(r)).sum()
    }

    pub fn secondary_factor(&self, omega: &[f64]) -> f64 {
        if omega.is_empty() {
            return 1.0;
        }
        omega.iter().enumerate().map(|(r, w)| w * self.secondary_protection(r)).sum()
    }

    pub fn is_perfect(&self) -> bool {
        self.p_md_p
            .iter()
            .chain(&self.p_md_s)
            .chain(&self.p_fa)
            .all(|&x| x == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_relays_means_no_sensing_loss() {
        let se = SensingErrorParams::perfect(0);
        assert_eq!(se.primary_factor(&[]), 1.0);
        assert_eq!(se.secondary_factor(&[]), 1.0);
    }

    #[test]
    fn protection_factors() {
        let se = SensingErrorParams {
            p_md_p: vec![0.1],
            p_md_s: vec![0.1],
            p_fa: vec![0.05],
        };
        assert!((se.primary_protection(0) - 0.99).abs() < 1e-15);
        assert!((se.secondary_protection(0) - 0.905).abs() < 1e-15);
        assert!((se.idle_detection(0) - 0.9025).abs() < 1e-15);
        assert!((se.primary_factor(&[1.0]) - 0.99).abs() < 1e-15);
    }

    #[test]
    fn uniform_params_validate() {
        for s in Strategy::ALL {
            for n in 0..5 {
                StrategyParams::uniform(s, n).validate().unwrap();
            }
        }
    }

    #[test]
    fn omega_must_be_a_simplex() {
        let mut p = StrategyParams::uniform(Strategy::RandomAssignment, 2);
        p.omega = vec![0.5, 0.4];
        let err = p.validate().unwrap_err();
        assert!(err.0.iter().any(|m| m.starts_with("omega")), "{err}");
    }

    #[test]
    fn round_robin_assignment_is_uniform() {
        let p = StrategyParams::uniform(Strategy::RoundRobin, 4);
        assert_eq!(p.assignment().unwrap(), vec![0.25; 4]);
        assert!(StrategyParams::uniform(Strategy::OrderedAcceptance, 2)
            .assignment()
            .is_none());
    }
}
