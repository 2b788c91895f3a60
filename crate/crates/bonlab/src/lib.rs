//! Finite-support laboratory for inference-time selection rules
//! (best-of-N and its regularized variants) judged by win-rate.
//!
//! Everything is exact where a closed form exists: policies are explicit
//! [`FiniteDist`]s, rewards are tables, and each selector has an exact
//! induced law next to its sampler.

// `!(x > y)` is how NaN gets rejected along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dist;
pub mod divergences;
pub mod error;
pub mod instances;
pub mod mc;
pub mod random;
pub mod rewards;
pub mod rng;
pub mod selectors;
pub mod special;

pub use dist::{density_ratio, DensityRatio, FiniteDist};
pub use error::{Error, Result};
pub use instances::Instance;
pub use mc::McEstimate;
pub use rewards::{RewardChoice, RewardModel, WinRateReport};
pub use rng::Rng;
pub use selectors::{InducedPolicy, SelectorSpec};

/// Artifact version stamped into every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
