//! Multi-agent reinforcement learning with a single shared Q-network for
//! remote electrical tilt (RET) optimization.
//!
//! The crate is `no_std` + `alloc` and contains only the algorithmic core:
//!
//! - [`topology`]: hexagonal tri-sector site layouts and per-episode
//!   configuration sampling.
//! - [`radiosim`]: static Monte Carlo downlink evaluation (UE drop, antenna
//!   pattern, path loss, RSRP, SINR, throughput and congestion).
//! - [`kpi`]: per-cell KPIs, overlapping factors, neighbour aggregates, the
//!   reward metric, the relative reward and the 11-feature state.
//! - [`rlcore`]: the shared multilayer perceptron with manual backprop and
//!   Adam, experience replay and epsilon-greedy selection.
//! - [`expert`]: a crisp rule-based tilt controller used as a baseline.
//! - [`marl`]: episode orchestration for pre-training and evaluation.
//!
//! File formats, the CLI and parallel campaign execution live in the `retopt`
//! companion crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod expert;
pub mod kpi;
pub mod marl;
mod math;
pub mod radiosim;
pub mod rlcore;
pub mod topology;

pub use error::Error;

/// Index of a cell in a [`topology::SiteLayout`]; cell `c` belongs to site `c / 3`.
pub type CellId = usize;

/// Deterministic RNG used everywhere in the crate.
pub type SimRng = rand_chacha::ChaCha8Rng;
