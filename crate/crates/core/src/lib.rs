//! Tabular offline reinforcement learning via distributionally robust
//! optimization.
//!
//! The pipeline: estimate an empirical MDP from a fixed transition dataset,
//! wrap each empirical transition row in an L1 uncertainty set whose radius
//! shrinks with the visit count, and plan against the worst kernel in the
//! set with robust value iteration. LCB (reward-penalty) and plain empirical
//! dynamic programming are provided as baselines, together with a Garnet
//! random-MDP generator and a sweep harness that measures sub-optimality
//! gaps across dataset sizes and seeds.

pub mod baselines;
pub mod data;
pub mod error;
pub mod experiment;
pub mod garnet;
mod linalg;
pub mod mdp;
pub mod robust;

pub use error::Error;
pub use mdp::{DeterministicPolicy, TabularMdp, ValueFunction};

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
