//! Shared fixtures: random configurations and an independent enumeration
//! oracle for the per-slot service probabilities.
#![allow(dead_code)]

use cogrelay::orders::all_rankings;
use cogrelay::{
    Decoding, OrderDistribution, OutageMatrix, SensingErrorParams, Strategy, StrategyParams,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Table 1, relays 1-2, with the Fig. 3 direct links.
pub fn table1_two() -> OutageMatrix {
    OutageMatrix {
        p_pd: 0.1,
        s_sd: 0.2,
        p_relay: vec![0.1, 0.02],
        s_relay: vec![0.1, 0.1],
        relay_pd: vec![0.1, 0.1],
        relay_sd: vec![0.1, 0.1],
    }
}

pub fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

pub fn random_outages(rng: &mut ChaCha8Rng, n: usize) -> OutageMatrix {
    let mut p = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    OutageMatrix {
        p_pd: p(0.0, 0.9),
        s_sd: p(0.0, 0.9),
        p_relay: (0..n).map(|_| p(0.0, 0.9)).collect(),
        s_relay: (0..n).map(|_| p(0.0, 0.9)).collect(),
        relay_pd: (0..n).map(|_| p(0.0, 0.9)).collect(),
        relay_sd: (0..n).map(|_| p(0.0, 0.9)).collect(),
    }
}

pub fn random_ordering(rng: &mut ChaCha8Rng, n: usize) -> OrderDistribution {
    let all = all_rankings(n).unwrap();
    // sparse support exercises distributions that are not uniform
    let w = simplex(rng, all.len());
    let keep: Vec<bool> = (0..all.len()).map(|_| rng.random::<f64>() < 0.6).collect();
    let mass: f64 = w.iter().zip(&keep).filter(|(_, k)| **k).map(|(w, _)| w).sum();
    if mass == 0.0 {
        return OrderDistribution::point_mass(all[0].clone());
    }
    OrderDistribution::from_entries(
        n,
        all.into_iter()
            .zip(w)
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|((r, w), _)| (r, w / mass)),
    )
    .unwrap()
}

pub fn random_params(rng: &mut ChaCha8Rng, strategy: Strategy, n: usize) -> StrategyParams {
    let decoding = match strategy {
        Strategy::OrderedAcceptance => Decoding::Ordered {
            primary: random_ordering(rng, n),
            secondary: random_ordering(rng, n),
        },
        Strategy::RandomAssignment => Decoding::Assigned {
            beta: simplex(rng, n),
        },
        Strategy::RoundRobin => Decoding::RoundRobin,
    };
    StrategyParams {
        omega: simplex(rng, n),
        alpha: (0..n).map(|_| rng.random()).collect(),
        f_p: (0..n).map(|_| rng.random()).collect(),
        f_s: (0..n).map(|_| rng.random()).collect(),
        decoding,
    }
}

pub fn random_sensing(rng: &mut ChaCha8Rng, n: usize) -> SensingErrorParams {
    let mut p = || 0.3 * rng.random::<f64>();
    SensingErrorParams {
        p_md_p: (0..n).map(|_| p()).collect(),
        p_md_s: (0..n).map(|_| p()).collect(),
        p_fa: (0..n).map(|_| p()).collect(),
    }
}

/// Per-slot success probabilities computed by brute force over every
/// decode pattern, acceptance coin, decoding ranking or assignment, and the
/// scheduled relay's sensing outcomes. Returns `(primary, secondary)`:
/// the probability that a transmitted head-of-line packet leaves its
/// source queue in a slot where it is transmitted.
pub fn enumerate_service(
    o: &OutageMatrix,
    params: &StrategyParams,
    sensing: Option<&SensingErrorParams>,
) -> (f64, f64) {
    let n = o.n_relays();
    let handoff_p = enumerate_handoff(&o.p_relay, &params.f_p, &params.decoding, true);
    let handoff_s = enumerate_handoff(&o.s_relay, &params.f_s, &params.decoding, false);
    let deliver = |direct_outage: f64, handoff: f64| (1.0 - direct_outage) + direct_outage * handoff;

    // scheduled relay r and its sensing outcome decide whether it collides
    let (mut no_collision_p, mut no_collision_s) = (0.0, 0.0);
    if n == 0 {
        no_collision_p = 1.0;
        no_collision_s = 1.0;
    }
    for r in 0..n {
        let (md_p, md_s, fa) = match sensing {
            Some(se) => (se.p_md_p[r], se.p_md_s[r], se.p_fa[r]),
            None => (0.0, 0.0, 0.0),
        };
        // primary active in both intervals: the relay transmits only if it
        // misses the primary twice
        for miss1 in [false, true] {
            for miss2 in [false, true] {
                let pr = bern(md_p, miss1) * bern(md_p, miss2);
                if !(miss1 && miss2) {
                    no_collision_p += params.omega[r] * pr;
                }
            }
        }
        // secondary silent in the first interval, active in the second
        for alarm1 in [false, true] {
            for miss2 in [false, true] {
                let pr = bern(fa, alarm1) * bern(md_s, miss2);
                if alarm1 || !miss2 {
                    no_collision_s += params.omega[r] * pr;
                }
            }
        }
    }
    (
        no_collision_p * deliver(o.p_pd, handoff_p),
        no_collision_s * deliver(o.s_sd, handoff_s),
    )
}

fn bern(p: f64, event: bool) -> f64 {
    if event {
        p
    } else {
        1.0 - p
    }
}

/// P(some relay admits an undelivered packet), by enumeration.
fn enumerate_handoff(outage: &[f64], accept: &[f64], decoding: &Decoding, primary: bool) -> f64 {
    let n = outage.len();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for decoded in 0u32..(1 << n) {
        for willing in 0u32..(1 << n) {
            let mut pr = 1.0;
            for k in 0..n {
                pr *= bern(1.0 - outage[k], decoded >> k & 1 == 1);
                pr *= bern(accept[k], willing >> k & 1 == 1);
            }
            let admits = |k: usize| (decoded & willing) >> k & 1 == 1;
            let p_admit = match decoding {
                Decoding::Ordered {
                    primary: dp,
                    secondary: ds,
                } => {
                    let dist = if primary { dp } else { ds };
                    dist.iter()
                        .map(|(ranking, rho)| {
                            // the first relay in acceptance order that both
                            // decoded and is willing takes the packet
                            let taken = ranking.acceptance_order().into_iter().any(admits);
                            if taken {
                                rho
                            } else {
                                0.0
                            }
                        })
                        .sum::<f64>()
                }
                Decoding::Assigned { beta } => (0..n).filter(|&k| admits(k)).map(|k| beta[k]).sum(),
                Decoding::RoundRobin => (0..n).filter(|&k| admits(k)).count() as f64 / n as f64,
            };
            total += pr * p_admit;
        }
    }
    total
}

/// Oracle `(mu_p, mu_s)` at primary arrival rate `lambda_p`.
pub fn oracle_rates(
    o: &OutageMatrix,
    params: &StrategyParams,
    lambda_p: f64,
    sensing: Option<&SensingErrorParams>,
) -> (f64, f64) {
    let (sp, ss) = enumerate_service(o, params, sensing);
    let pi_p0 = if lambda_p < sp { 1.0 - lambda_p / sp } else { 0.0 };
    (sp, pi_p0 * ss)
}
