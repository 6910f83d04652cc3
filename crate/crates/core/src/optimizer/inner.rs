//! Exact relay schedule allocation for fixed acceptance and decoding.
//!
//! With acceptance and decoding fixed, the user rates and the relay arrival
//! rates do not depend on the schedule. Relay queue `j` gets service
//! `g_j * x_j` where `x_j` is its schedule mass (`z_k` or `y_k`). Stability
//! needs `x_j >= (lambda_j + eps) / g_j`; the relay part of the end-to-end
//! delay, `sum_j lambda_j (1 - lambda_j) / (g_j x_j - lambda_j)`, is convex
//! and decreasing in every `x_j`. For a given group mass the minimiser is
//! `x_j = (lambda_j + s_j t) / g_j` with `s_j = sqrt(lambda_j (1 - lambda_j) g_j)`,
//! clamped at the stability bound, and the mass split between the primary
//! and secondary groups is found by bisection on the normalised delay
//! excess.

use super::{Constraint, ConstraintClass, Infeasible};
use crate::rates::QueueId;

/// Stand-in for an infinite delay budget; keeps the mass split balanced.
const LARGE_BUDGET: f64 = 1e9;
const ITERATIONS: usize = 100;

/// Relay queues fed by one user.
#[derive(Debug, Clone)]
pub(crate) struct Group {
    pub lambda: Vec<f64>,
    /// Service per unit of schedule mass.
    pub gain: Vec<f64>,
    /// Allowed value of `sum_j lambda_j D_j`: `lambda_user * (D_max - D_user)`.
    pub budget: f64,
    pub primary: bool,
}

impl Group {
    fn has_traffic(&self) -> bool {
        self.lambda.iter().any(|&l| l > 0.0)
    }

    fn queue(&self, k: usize) -> QueueId {
        if self.primary {
            QueueId::PrimaryRelay(k)
        } else {
            QueueId::SecondaryRelay(k)
        }
    }

    fn lower(&self, eps: f64) -> Vec<f64> {
        self.lambda
            .iter()
            .zip(&self.gain)
            .map(|(&l, &g)| {
                if l <= 0.0 {
                    0.0
                } else if g <= 0.0 {
                    f64::INFINITY
                } else {
                    (l + eps) / g
                }
            })
            .collect()
    }

    fn slope(&self) -> Vec<f64> {
        self.lambda
            .iter()
            .zip(&self.gain)
            .map(|(&l, &g)| (l * (1.0 - l) * g).max(0.0).sqrt())
            .collect()
    }

    /// Schedule masses minimising the relay delay term for total mass `m`.
    /// Queue `k` leaves its stability bound once `t` exceeds
    /// `eps / s_k`; between those breakpoints the total mass is linear in
    /// `t`, so the level is found exactly.
    fn spread(&self, m: f64, eps: f64) -> Vec<f64> {
        let lower = self.lower(eps);
        let s = self.slope();
        let n = self.lambda.len();
        let loaded: Vec<usize> = (0..n).filter(|&k| self.lambda[k] > 0.0).collect();
        let mut x = vec![0.0; n];
        for &k in &loaded {
            x[k] = lower[k];
        }
        let base: f64 = loaded.iter().map(|&k| lower[k]).sum();
        if m <= base {
            return x;
        }
        let mut order: Vec<usize> = loaded.iter().copied().filter(|&k| s[k] > 0.0).collect();
        if order.is_empty() {
            // every loaded queue is saturated at lambda = 1; park the excess
            x[loaded[0]] += m - base;
            return x;
        }
        let brk = |k: usize| eps / s[k];
        order.sort_by(|&a, &b| brk(a).total_cmp(&brk(b)).then(a.cmp(&b)));
        // total(t) = a + b t on the current segment
        let mut a = base;
        let mut b = 0.0;
        let mut t = 0.0;
        for (i, &k) in order.iter().enumerate() {
            a += self.lambda[k] / self.gain[k] - lower[k];
            b += s[k] / self.gain[k];
            let next = order.get(i + 1).map_or(f64::INFINITY, |&j| brk(j));
            t = (m - a) / b;
            if t <= next {
                break;
            }
        }
        for &k in &order {
            if t >= brk(k) {
                x[k] = (self.lambda[k] + s[k] * t) / self.gain[k];
            }
        }
        x
    }

    fn relay_delay_term(&self, x: &[f64]) -> f64 {
        let mut sum = 0.0;
        for k in 0..x.len() {
            let l = self.lambda[k];
            if l <= 0.0 {
                continue;
            }
            let margin = self.gain[k] * x[k] - l;
            if margin <= 0.0 {
                return f64::INFINITY;
            }
            sum += l * (1.0 - l) / margin;
        }
        sum
    }

    /// Relay delay term relative to the budget; above 1 means violated.
    fn ratio(&self, x: &[f64], clamp_budget: bool) -> f64 {
        let g = self.relay_delay_term(x);
        let b = if clamp_budget { self.budget.min(LARGE_BUDGET) } else { self.budget };
        if g == 0.0 {
            0.0
        } else if b <= 0.0 {
            f64::INFINITY
        } else {
            g / b
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Schedule mass spent on primary relaying queues, `alpha_k * omega_k`.
    pub z: Vec<f64>,
    /// Schedule mass spent on secondary relaying queues.
    pub y: Vec<f64>,
}

impl Allocation {
    pub fn omega(&self) -> Vec<f64> {
        self.z.iter().zip(&self.y).map(|(a, b)| a + b).collect()
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.z
            .iter()
            .zip(&self.y)
            .map(|(&z, &y)| if z + y > 0.0 { z / (z + y) } else { 0.0 })
            .collect()
    }
}

/// Best allocation found, plus the reason it is infeasible if it is.
pub(crate) fn allocate(p: &Group, s: &Group, eps: f64) -> (Allocation, Option<Infeasible>) {
    let n = p.lambda.len();
    // pad the slack so that recombined rates keep lambda <= mu - eps
    let eps = eps * (1.0 + 1e-6) + 1e-15;
    if n == 0 {
        return (Allocation { z: vec![], y: vec![] }, None);
    }
    let (tp, ts) = (p.has_traffic(), s.has_traffic());
    if !tp && !ts {
        let u = 0.5 / n as f64;
        return (
            Allocation {
                z: vec![u; n],
                y: vec![u; n],
            },
            None,
        );
    }

    let stab = |g: &Group| -> Vec<Constraint> {
        g.lower(eps)
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.is_finite())
            .map(|(k, _)| Constraint::Stability(g.queue(k)))
            .collect()
    };
    let mut unreachable = stab(p);
    unreachable.extend(stab(s));
    let mp: f64 = if tp { p.lower(eps).iter().sum() } else { 0.0 };
    let ms: f64 = if ts { s.lower(eps).iter().sum() } else { 0.0 };
    if !unreachable.is_empty() || mp + ms > 1.0 {
        let constraints = if unreachable.is_empty() {
            let mut c: Vec<Constraint> = (0..n)
                .filter(|&k| p.lambda[k] > 0.0)
                .map(|k| Constraint::Stability(p.queue(k)))
                .collect();
            c.extend((0..n).filter(|&k| s.lambda[k] > 0.0).map(|k| Constraint::Stability(s.queue(k))));
            c
        } else {
            unreachable
        };
        // best effort: spread the unit mass in proportion to the bounds
        let lp = p.lower(eps);
        let ls = s.lower(eps);
        let finite = |v: f64| if v.is_finite() { v } else { 1.0 };
        let tot: f64 = lp.iter().chain(&ls).map(|&v| finite(v)).sum::<f64>().max(f64::MIN_POSITIVE);
        return (
            Allocation {
                z: lp.iter().map(|&v| finite(v) / tot).collect(),
                y: ls.iter().map(|&v| finite(v) / tot).collect(),
            },
            Some(Infeasible {
                class: ConstraintClass::Stability,
                constraints,
            }),
        );
    }

    let m = if !ts {
        1.0
    } else if !tp {
        0.0
    } else {
        // h(m) = ratio_p(m) - ratio_s(1 - m) is nonincreasing in m
        let h = |m: f64| p.ratio(&p.spread(m, eps), true) - s.ratio(&s.spread(1.0 - m, eps), true);
        let (mut lo, mut hi) = (mp, 1.0 - ms);
        if h(lo) <= 0.0 {
            lo
        } else if h(hi) >= 0.0 {
            hi
        } else {
            for _ in 0..ITERATIONS {
                let mid = 0.5 * (lo + hi);
                if h(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    };
    let z = if tp { p.spread(m, eps) } else { vec![0.0; n] };
    let y = if ts { s.spread(1.0 - m, eps) } else { vec![0.0; n] };
    let mut violated = Vec::new();
    if (tp && p.ratio(&z, false) > 1.0) || (ts && s.ratio(&y, false) > 1.0) {
        // blame a group that fails even with all the mass it can get
        let alone_p = tp && p.ratio(&p.spread(1.0 - ms, eps), false) > 1.0;
        let alone_s = ts && s.ratio(&s.spread(1.0 - mp, eps), false) > 1.0;
        if alone_p || !alone_s {
            violated.push(Constraint::DelayPrimary);
        }
        if alone_s || !alone_p {
            violated.push(Constraint::DelaySecondary);
        }
        violated.retain(|c| match c {
            Constraint::DelayPrimary => tp,
            _ => ts,
        });
    }
    let verdict = (!violated.is_empty()).then_some(Infeasible {
        class: ConstraintClass::Delay,
        constraints: violated,
    });
    (Allocation { z, y }, verdict)
}
