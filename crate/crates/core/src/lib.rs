//! Coded-caching delivery laboratory.
//!
//! A server holds `N` files of `F` bits, `K` users hold arbitrary caches and
//! each requests one file. The crate models the delivery phase at bit
//! granularity and provides:
//!
//! - [`model`]: caches, demands, outstanding bits and XOR decoding,
//! - [`env`]: the episodic broadcast environment with its state and reward,
//! - [`baselines`]: uncoded, greedy coded multicast, greedy clique cover and
//!   an exact minimum clique cover,
//! - [`agent`]: an actor-critic agent with a factored Bernoulli action head,
//! - [`experiment`]: configuration, training/comparison/benchmark runners and
//!   their CSV outputs.

pub mod agent;
pub mod baselines;
pub mod env;
pub mod error;
pub mod experiment;
pub mod model;
pub mod sampler;
pub mod trace;

pub use error::{Error, Result};
pub use model::{
    BitId, BitMatrix, CacheMatrix, CodedPacket, DeliveryProblem, DemandVector, ProblemInstance, RequestMatrix,
};
