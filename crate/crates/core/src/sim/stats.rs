//! Batch counters and confidence intervals.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Point estimate with a 95% confidence half-width. `mean` is `None` when
/// the estimator had no samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: Option<f64>,
    pub half_width: f64,
}

impl Estimate {
    pub const NO_SAMPLES: Estimate = Estimate {
        mean: None,
        half_width: 0.0,
    };

    pub fn value(&self) -> f64 {
        self.mean.unwrap_or(f64::NAN)
    }

    /// `|mean - target| <= k * half_width`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        match self.mean {
            Some(m) => (m - target).abs() <= k * self.half_width,
            None => false,
        }
    }
}

/// Two-sided 97.5% Student-t quantile.
pub fn t_quantile(df: usize) -> f64 {
    if df == 0 {
        return f64::INFINITY;
    }
    StudentsT::new(0.0, 1.0, df as f64)
        .map(|t| t.inverse_cdf(0.975))
        .unwrap_or(1.96)
}

/// Overall ratio `num/den` with a half-width from per-group ratios.
pub fn ratio_estimate(groups: &[(f64, f64)]) -> Estimate {
    let num: f64 = groups.iter().map(|g| g.0).sum();
    let den: f64 = groups.iter().map(|g| g.1).sum();
    if den <= 0.0 {
        return Estimate::NO_SAMPLES;
    }
    let mean = num / den;
    let values: Vec<f64> = groups.iter().filter(|g| g.1 > 0.0).map(|g| g.0 / g.1).collect();
    Estimate {
        mean: Some(mean),
        half_width: half_width(&values),
    }
}

pub fn half_width(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let m = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    t_quantile(n - 1) * (var / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueueCounters {
    pub arrivals: u64,
    pub departures: u64,
    /// Slots in which the queue was nonempty when transmissions were decided.
    pub busy_slots: u64,
}

impl QueueCounters {
    pub fn add(&mut self, other: &QueueCounters) {
        self.arrivals += other.arrivals;
        self.departures += other.departures;
        self.busy_slots += other.busy_slots;
    }
}

/// Per-queue service estimator: departures per nonempty slot.
pub fn measure_conditional_service(q: &QueueCounters) -> Option<f64> {
    (q.busy_slots > 0).then(|| q.departures as f64 / q.busy_slots as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DelayCounter {
    pub total: f64,
    pub count: u64,
}

impl DelayCounter {
    pub fn record(&mut self, d: u64) {
        self.total += d as f64;
        self.count += 1;
    }

    pub fn add(&mut self, other: &DelayCounter) {
        self.total += other.total;
        self.count += other.count;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchCounters {
    pub slots: u64,
    pub primary: QueueCounters,
    pub secondary: QueueCounters,
    pub relay_p: Vec<QueueCounters>,
    pub relay_s: Vec<QueueCounters>,
    pub primary_idle_slots: u64,
    pub secondary_empty_slots: u64,
    pub collisions: u64,
    /// Source queueing delay of primary packets (until they leave the source).
    pub delay_p_source: DelayCounter,
    pub delay_s_source: DelayCounter,
    /// Arrival at the source until delivery at the destination.
    pub delay_p_total: DelayCounter,
    pub delay_s_total: DelayCounter,
    pub delay_pk: Vec<DelayCounter>,
    pub delay_sk: Vec<DelayCounter>,
}

impl BatchCounters {
    pub fn new(n_relays: usize) -> Self {
        Self {
            relay_p: vec![QueueCounters::default(); n_relays],
            relay_s: vec![QueueCounters::default(); n_relays],
            delay_pk: vec![DelayCounter::default(); n_relays],
            delay_sk: vec![DelayCounter::default(); n_relays],
            ..Default::default()
        }
    }

    pub fn add(&mut self, o: &BatchCounters) {
        self.slots += o.slots;
        self.primary.add(&o.primary);
        self.secondary.add(&o.secondary);
        for (a, b) in self.relay_p.iter_mut().zip(&o.relay_p) {
            a.add(b);
        }
        for (a, b) in self.relay_s.iter_mut().zip(&o.relay_s) {
            a.add(b);
        }
        self.primary_idle_slots += o.primary_idle_slots;
        self.secondary_empty_slots += o.secondary_empty_slots;
        self.collisions += o.collisions;
        self.delay_p_source.add(&o.delay_p_source);
        self.delay_s_source.add(&o.delay_s_source);
        self.delay_p_total.add(&o.delay_p_total);
        self.delay_s_total.add(&o.delay_s_total);
        for (a, b) in self.delay_pk.iter_mut().zip(&o.delay_pk) {
            a.add(b);
        }
        for (a, b) in self.delay_sk.iter_mut().zip(&o.delay_sk) {
            a.add(b);
        }
    }
}
