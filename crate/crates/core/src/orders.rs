//! Distributions over relay acceptance rankings.
//!
//! A ranking assigns every relay a distinct acceptance rank. Relay `k` only
//! gets to accept an undelivered packet if every relay ranked ahead of it
//! declined or failed to decode. Distributions are stored sparsely so that
//! callers can restrict the support; dense helpers are limited to
//! [`MAX_DENSE_RELAYS`] relays.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Largest relay count for which all `N!` rankings are enumerated.
pub const MAX_DENSE_RELAYS: usize = 8;

const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrderError {
    #[error("invalid probability simplex: {0}")]
    InvalidSimplex(String),
    #[error("invalid order distribution: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("dense enumeration is limited to {MAX_DENSE_RELAYS} relays, got {0}")]
    TooManyRelays(usize),
}

/// `ranks[k]` is the zero-based acceptance rank of relay `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ranking(Vec<u8>);

impl Ranking {
    /// Build from zero-based ranks without checking bijectivity.
    pub fn from_ranks(ranks: Vec<u8>) -> Self {
        Ranking(ranks)
    }

    /// Build from the one-based ranks used in config files.
    pub fn from_one_based(ranks: &[usize]) -> Self {
        Ranking(ranks.iter().map(|&r| r.saturating_sub(1) as u8).collect())
    }

    pub fn identity(n: usize) -> Self {
        Ranking((0..n as u8).collect())
    }

    pub fn ranks(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn rank_of(&self, relay: usize) -> usize {
        self.0[relay] as usize
    }

    pub fn is_bijection(&self) -> bool {
        let n = self.0.len();
        let mut seen = vec![false; n];
        for &r in &self.0 {
            let r = r as usize;
            if r >= n || seen[r] {
                return false;
            }
            seen[r] = true;
        }
        true
    }

    /// Relays listed from first to last rank.
    pub fn acceptance_order(&self) -> Vec<usize> {
        let mut order = vec![0usize; self.0.len()];
        for (relay, &rank) in self.0.iter().enumerate() {
            order[rank as usize] = relay;
        }
        order
    }

    /// One-based ranks, as written in config files.
    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|&r| r as usize + 1).collect()
    }
}

impl fmt::Display for Ranking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.one_based().iter().map(|r| r.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// All `n!` rankings in lexicographic order.
pub fn all_rankings(n: usize) -> Result<Vec<Ranking>, OrderError> {
    if n > MAX_DENSE_RELAYS {
        return Err(OrderError::TooManyRelays(n));
    }
    let mut out = Vec::new();
    let mut current: Vec<u8> = (0..n as u8).collect();
    loop {
        out.push(Ranking(current.clone()));
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else {
            break;
        };
        let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderDistribution {
    n_relays: usize,
    entries: BTreeMap<Ranking, f64>,
}

impl OrderDistribution {
    /// Build without validation; see [`OrderDistribution::validate`].
    pub fn from_entries_unchecked(
        n_relays: usize,
        entries: impl IntoIterator<Item = (Ranking, f64)>,
    ) -> Self {
        let mut map = BTreeMap::new();
        for (k, p) in entries {
            *map.entry(k).or_insert(0.0) += p;
        }
        Self {
            n_relays,
            entries: map,
        }
    }

    pub fn from_entries(
        n_relays: usize,
        entries: impl IntoIterator<Item = (Ranking, f64)>,
    ) -> Result<Self, OrderError> {
        let d = Self::from_entries_unchecked(n_relays, entries);
        d.validate().map_err(OrderError::Invalid)?;
        Ok(d)
    }

    pub fn point_mass(ranking: Ranking) -> Self {
        let n = ranking.len();
        Self::from_entries_unchecked(n, [(ranking, 1.0)])
    }

    pub fn uniform(n_relays: usize) -> Result<Self, OrderError> {
        let all = all_rankings(n_relays)?;
        let p = 1.0 / all.len() as f64;
        Ok(Self::from_entries_unchecked(
            n_relays,
            all.into_iter().map(|r| (r, p)),
        ))
    }

    /// Dense distribution over [`all_rankings`]`(n)` from a weight vector.
    pub fn from_dense(n_relays: usize, weights: &[f64]) -> Result<Self, OrderError> {
        let all = all_rankings(n_relays)?;
        if weights.len() != all.len() {
            return Err(OrderError::InvalidSimplex(format!(
                "expected {} weights, got {}",
                all.len(),
                weights.len()
            )));
        }
        Ok(Self::from_entries_unchecked(
            n_relays,
            all.into_iter()
                .zip(weights.iter().copied())
                .filter(|(_, w)| *w > 0.0),
        ))
    }

    pub fn n_relays(&self) -> usize {
        self.n_relays
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Ranking, f64)> {
        self.entries.iter().map(|(k, &p)| (k, p))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn probability(&self, ranking: &Ranking) -> f64 {
        self.entries.get(ranking).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Lists every simplex or bijection violation; empty when valid.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut violations = Vec::new();
        for (ranking, &p) in &self.entries {
            if ranking.len() != self.n_relays {
                violations.push(format!(
                    "ranking ({ranking}) has {} entries, expected {}",
                    ranking.len(),
                    self.n_relays
                ));
            } else if !ranking.is_bijection() {
                violations.push(format!("ranking ({ranking}) is not a bijection"));
            }
            if !(p >= 0.0) || !p.is_finite() {
                violations.push(format!("ranking ({ranking}) has probability {p}"));
            }
        }
        let mass = self.total_mass();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            violations.push(format!("mass {mass} ≠ 1"));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    /// Per-relay probability of holding each rank.
    pub fn rank_marginals(&self) -> RankMarginals {
        let n = self.n_relays;
        let mut eps = vec![vec![0.0; n]; n];
        for (ranking, &p) in &self.entries {
            for (relay, &rank) in ranking.0.iter().enumerate() {
                eps[rank as usize][relay] += p;
            }
        }
        RankMarginals { eps }
    }

    /// A distribution whose first-rank marginal equals `beta`: with
    /// probability `beta[k]` relay `k` ranks first and the remaining relays
    /// follow in ascending index order.
    pub fn from_first_rank_profile(beta: &[f64]) -> Result<Self, OrderError> {
        check_simplex(beta)?;
        let n = beta.len();
        let entries = beta.iter().enumerate().filter(|(_, &b)| b > 0.0).map(|(k, &b)| {
            let mut ranks = vec![0u8; n];
            let mut next = 1u8;
            for (relay, slot) in ranks.iter_mut().enumerate() {
                if relay != k {
                    *slot = next;
                    next += 1;
                }
            }
            (Ranking(ranks), b)
        });
        Ok(Self::from_entries_unchecked(n, entries))
    }
}

/// `eps[m][k]`: probability that relay `k` holds rank `m` (zero-based).
#[derive(Debug, Clone, PartialEq)]
pub struct RankMarginals {
    pub eps: Vec<Vec<f64>>,
}

impl RankMarginals {
    pub fn n_relays(&self) -> usize {
        self.eps.len()
    }

    pub fn first_rank(&self) -> &[f64] {
        self.eps.first().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        let n = self.eps.len();
        let rows_ok = self
            .eps
            .iter()
            .all(|row| row.len() == n && (row.iter().sum::<f64>() - 1.0).abs() <= tol);
        let cols_ok = (0..n).all(|k| (self.eps.iter().map(|r| r[k]).sum::<f64>() - 1.0).abs() <= tol);
        let range_ok = self
            .eps
            .iter()
            .flatten()
            .all(|&e| (-tol..=1.0 + tol).contains(&e));
        rows_ok && cols_ok && range_ok
    }
}

pub(crate) fn check_simplex(v: &[f64]) -> Result<(), OrderError> {
    if v.is_empty() {
        return Err(OrderError::InvalidSimplex("empty vector".into()));
    }
    if let Some(x) = v.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(OrderError::InvalidSimplex(format!("negative or non-finite entry {x}")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > MASS_TOLERANCE {
        return Err(OrderError::InvalidSimplex(format!("entries sum to {s}, expected 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn two_relay_marginals() {
        let d = OrderDistribution::from_entries(
            2,
            [
                (Ranking::from_one_based(&[1, 2]), 0.7),
                (Ranking::from_one_based(&[2, 1]), 0.3),
            ],
        )
        .unwrap();
        let m = d.rank_marginals();
        assert!(close(m.eps[0][0], 0.7) && close(m.eps[0][1], 0.3));
        assert!(close(m.eps[1][0], 0.3) && close(m.eps[1][1], 0.7));
    }

    #[test]
    fn uniform_marginals_are_flat() {
        for n in 1..=5 {
            let m = OrderDistribution::uniform(n).unwrap().rank_marginals();
            for row in &m.eps {
                for &e in row {
                    assert!((e - 1.0 / n as f64).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_point_mass() {
        let m = OrderDistribution::point_mass(Ranking::identity(4)).rank_marginals();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.eps[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn first_rank_profile_vertex() {
        let d = OrderDistribution::from_first_rank_profile(&[1.0, 0.0]).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.probability(&Ranking::from_one_based(&[1, 2])), 1.0);
    }

    #[test]
    fn first_rank_profile_matches_beta() {
        let d = OrderDistribution::from_first_rank_profile(&[0.6, 0.4]).unwrap();
        let m = d.rank_marginals();
        assert!(close(m.first_rank()[0], 0.6) && close(m.first_rank()[1], 0.4));

        let third = 1.0 / 3.0;
        let d = OrderDistribution::from_first_rank_profile(&[third; 3]).unwrap();
        for &e in d.rank_marginals().first_rank() {
            assert!(close(e, third));
        }
        // lower ranks follow ascending index
        assert!(close(d.probability(&Ranking::from_one_based(&[2, 1, 3])), third));
    }

    #[test]
    fn first_rank_profile_rejects_bad_beta() {
        assert!(matches!(
            OrderDistribution::from_first_rank_profile(&[0.5, 0.4]),
            Err(OrderError::InvalidSimplex(_))
        ));
        assert!(OrderDistribution::from_first_rank_profile(&[1.2, -0.2]).is_err());
    }

    #[test]
    fn validate_reports_mass() {
        let d = OrderDistribution::from_entries_unchecked(
            2,
            [
                (Ranking::from_one_based(&[1, 2]), 0.5),
                (Ranking::from_one_based(&[2, 1]), 0.4),
            ],
        );
        let v = d.validate().unwrap_err();
        assert_eq!(v.len(), 1);
        assert!(v[0].starts_with("mass 0.9"), "{v:?}");
    }

    #[test]
    fn validate_reports_non_bijection() {
        let d = OrderDistribution::from_entries_unchecked(2, [(Ranking::from_one_based(&[1, 1]), 1.0)]);
        let v = d.validate().unwrap_err();
        assert!(v.iter().any(|s| s.contains("not a bijection")));
    }

    #[test]
    fn uniform_three_is_valid() {
        assert!(OrderDistribution::uniform(3).unwrap().validate().is_ok());
    }

    #[test]
    fn enumeration_is_complete() {
        let mut fact = 1usize;
        for n in 0..=MAX_DENSE_RELAYS {
            if n > 0 {
                fact *= n;
            }
            let all = all_rankings(n).unwrap();
            assert_eq!(all.len(), fact.max(1));
            assert!(all.iter().all(Ranking::is_bijection));
            assert!(all.windows(2).all(|w| w[0] < w[1]));
        }
        assert!(all_rankings(MAX_DENSE_RELAYS + 1).is_err());
    }

    #[test]
    fn acceptance_order_inverts_ranks() {
        let r = Ranking::from_one_based(&[3, 1, 2]);
        assert_eq!(r.acceptance_order(), vec![1, 2, 0]);
    }
}
