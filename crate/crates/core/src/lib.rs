//! Analysis, optimization and simulation of a cognitive network in which `N`
//! buffered relays help one primary and one secondary transmitter.
//!
//! The primary transmitter owns the channel. The secondary transmitter senses
//! the first sub-interval of each slot and transmits only when the primary is
//! idle; relays sense two sub-intervals and forward buffered packets only when
//! both users are idle. Undelivered packets may be admitted by relays under
//! one of three decoding strategies ([`Strategy`]).
//!
//! - [`channel`]: Rayleigh outage model and feedback overhead.
//! - [`orders`]: distributions over relay acceptance rankings.
//! - [`rates`]: closed-form rates and delays, including sensing errors.
//! - [`optimizer`]: QoS-constrained secondary throughput maximization and
//!   relay-count minimization.
//! - [`sim`]: slot-level Monte Carlo simulator of the MAC protocol.
//! - [`experiment`]: config files, sweeps and CSV output used by the CLI.

// `!(x >= 0.0)` is how validation rejects NaN along with negatives
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod experiment;
pub mod optimizer;
pub mod orders;
pub mod params;
pub mod rates;
pub mod sim;

pub use channel::{LinkParams, NetworkConfig, OutageMatrix, PhysicalChannel, SlotTiming, Strategy};
pub use orders::{OrderDistribution, RankMarginals, Ranking};
pub use params::{Decoding, SensingErrorParams, StrategyParams, TrafficParams};
pub use rates::{Delay, RateReport};
