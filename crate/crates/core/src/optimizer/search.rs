//! Projected pattern search over acceptance probabilities and decoding
//! distributions. The schedule is not searched: every point is completed by
//! the exact inner allocation.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::channel::Strategy;
use crate::orders::{all_rankings, OrderDistribution, Ranking};
use crate::params::Decoding;

/// Largest relay count searched over the full ranking simplex.
pub const DENSE_SEARCH_LIMIT: usize = 5;
const INITIAL_STEP: f64 = 0.25;
const MIN_STEP: f64 = 1e-4;

#[derive(Debug, Clone)]
pub(crate) enum Layout {
    /// Weights over every ranking, in this order.
    Dense(Vec<Ranking>),
    /// Probability of each relay being ranked first.
    Profile,
}

impl Layout {
    pub fn new(strategy: Strategy, n: usize) -> Self {
        if strategy == Strategy::OrderedAcceptance && n <= DENSE_SEARCH_LIMIT {
            Layout::Dense(all_rankings(n).expect("within dense limit"))
        } else {
            Layout::Profile
        }
    }

    fn len(&self, n: usize) -> usize {
        match self {
            Layout::Dense(r) => r.len(),
            Layout::Profile => n,
        }
    }

    fn distribution(&self, n: usize, w: &[f64]) -> OrderDistribution {
        match self {
            Layout::Dense(r) => OrderDistribution::from_entries_unchecked(
                n,
                r.iter().cloned().zip(w.iter().copied()).filter(|(_, p)| *p > 0.0),
            ),
            Layout::Profile => OrderDistribution::from_first_rank_profile(w).expect("profile is a simplex"),
        }
    }
}

/// Outer decision variables.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Point {
    pub f_p: Vec<f64>,
    pub f_s: Vec<f64>,
    /// Decoding weights: ranking simplex (primary, secondary) under ordered
    /// acceptance, `beta` under random assignment, empty for round robin.
    pub w_p: Vec<f64>,
    pub w_s: Vec<f64>,
}

impl Point {
    pub fn uniform(strategy: Strategy, n: usize, layout: &Layout) -> Self {
        let simplex = |len: usize| vec![1.0 / len as f64; len];
        let (w_p, w_s) = match strategy {
            Strategy::OrderedAcceptance => (simplex(layout.len(n)), simplex(layout.len(n))),
            Strategy::RandomAssignment => (simplex(n), Vec::new()),
            Strategy::RoundRobin => (Vec::new(), Vec::new()),
        };
        Self {
            f_p: vec![1.0; n],
            f_s: vec![1.0; n],
            w_p,
            w_s,
        }
    }

    pub fn random(strategy: Strategy, n: usize, layout: &Layout, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::uniform(strategy, n, layout);
        for f in p.f_p.iter_mut().chain(p.f_s.iter_mut()) {
            *f = rng.random::<f64>();
        }
        for w in [&mut p.w_p, &mut p.w_s] {
            if w.is_empty() {
                continue;
            }
            // flat Dirichlet
            for x in w.iter_mut() {
                *x = -(1.0 - rng.random::<f64>()).ln();
            }
            let s: f64 = w.iter().sum();
            for x in w.iter_mut() {
                *x /= s;
            }
        }
        p
    }

    pub fn decoding(&self, strategy: Strategy, n: usize, layout: &Layout) -> Decoding {
        match strategy {
            Strategy::OrderedAcceptance => Decoding::Ordered {
                primary: layout.distribution(n, &self.w_p),
                secondary: layout.distribution(n, &self.w_s),
            },
            Strategy::RandomAssignment => Decoding::Assigned {
                beta: self.w_p.clone(),
            },
            Strategy::RoundRobin => Decoding::RoundRobin,
        }
    }
}

#[derive(Debug, Clone)]
enum Move {
    Accept { primary: bool, k: usize, up: bool },
    Vertex { primary: bool, i: usize },
    /// Step along a random box direction and towards a random simplex point.
    Random(Point),
}

fn random_moves(p: &Point, count: usize, rng: &mut ChaCha8Rng) -> Vec<Move> {
    (0..count)
        .map(|_| {
            let mut d = p.clone();
            for x in d.f_p.iter_mut().chain(d.f_s.iter_mut()) {
                // symmetric direction in [-1, 1]
                *x = 2.0 * rng.random::<f64>() - 1.0;
            }
            for w in [&mut d.w_p, &mut d.w_s] {
                for x in w.iter_mut() {
                    *x = -(1.0 - rng.random::<f64>()).ln();
                }
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= s);
            }
            Move::Random(d)
        })
        .collect()
}

fn moves(p: &Point) -> Vec<Move> {
    let mut m = Vec::new();
    for (primary, f) in [(true, &p.f_p), (false, &p.f_s)] {
        for k in 0..f.len() {
            m.push(Move::Accept { primary, k, up: true });
            m.push(Move::Accept { primary, k, up: false });
        }
    }
    for (primary, w) in [(true, &p.w_p), (false, &p.w_s)] {
        if w.len() > 1 {
            m.extend((0..w.len()).map(|i| Move::Vertex { primary, i }));
        }
    }
    m
}

fn apply(p: &Point, mv: &Move, h: f64) -> Point {
    let mut q = p.clone();
    match *mv {
        Move::Accept { primary, k, up } => {
            let f = if primary { &mut q.f_p } else { &mut q.f_s };
            f[k] = if up { (f[k] + h).min(1.0) } else { (f[k] - h).max(0.0) };
        }
        Move::Vertex { primary, i } => {
            let w = if primary { &mut q.w_p } else { &mut q.w_s };
            for (j, x) in w.iter_mut().enumerate() {
                *x = (1.0 - h) * *x + if i == j { h } else { 0.0 };
            }
        }
        Move::Random(ref d) => {
            for (x, dx) in q.f_p.iter_mut().zip(&d.f_p).chain(q.f_s.iter_mut().zip(&d.f_s)) {
                *x = (*x + h * dx).clamp(0.0, 1.0);
            }
            for (w, t) in [(&mut q.w_p, &d.w_p), (&mut q.w_s, &d.w_s)] {
                for (x, tx) in w.iter_mut().zip(t) {
                    *x = (1.0 - h) * *x + h * tx;
                }
            }
        }
    }
    q
}

/// Outcome of scoring one point.
pub(crate) trait Scored {
    fn score(&self) -> f64;
}

pub(crate) struct SearchOutcome<C> {
    pub best: C,
    pub evaluations: usize,
    pub exhausted: bool,
}

/// First-improvement pattern search with step halving. `eval` returns the
/// scored candidate and the number of model evaluations it consumed.
pub(crate) fn local_search<C: Scored>(
    start: Point,
    budget: usize,
    rng: &mut ChaCha8Rng,
    mut eval: impl FnMut(&Point) -> (C, usize),
) -> SearchOutcome<C> {
    let (mut best, mut used) = eval(&start);
    let mut x = start;
    let mut h = INITIAL_STEP;
    let mut mv = moves(&x);
    while used < budget && h >= MIN_STEP && !mv.is_empty() {
        let extra = mv.len() / 2 + 2;
        mv.extend(random_moves(&x, extra, rng));
        mv.shuffle(rng);
        let mut improved = false;
        for m in &mv {
            if used >= budget {
                break;
            }
            let cand = apply(&x, m, h);
            if cand == x {
                continue;
            }
            let (c, cost) = eval(&cand);
            used += cost;
            if c.score() > best.score() + 1e-12 {
                best = c;
                x = cand;
                improved = true;
            }
        }
        if !improved {
            h *= 0.5;
        }
        mv = moves(&x);
    }
    SearchOutcome {
        best,
        evaluations: used,
        exhausted: used >= budget && h >= MIN_STEP && !mv.is_empty(),
    }
}
