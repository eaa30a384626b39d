//! Minority game of arbitrageurs on an imbalance market.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod engine;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod price;
pub mod rng;
pub mod stats;
pub mod strategies;
pub mod weights;

pub use config::GameConfig;
pub use engine::{run_until_converged, Game, RunResult};
pub use error::{ConfigError, DomainError, PriceError};
pub use price::{MeritLadder, PriceSpec};
pub use weights::{WeightSpec, WeightVector};
