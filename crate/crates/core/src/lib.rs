//! Strategic exploration in a two-armed Bayesian bandit game where actions
//! are public and payoffs private.
//!
//! The crate computes cutoff beliefs and stopping times, evaluates cascade
//! outcomes exactly and by Monte Carlo, verifies cascade equilibria by
//! one-shot-deviation checks with exact continuation values, and reproduces
//! the worked examples (reversed cutoff order, over-exploration with
//! heterogeneous priors, ex-ante buyouts).

pub mod beliefs;
pub mod contracts;
pub mod cutoffs;
pub mod equilibrium;
pub mod error;
pub mod model;
pub mod scenarios;
pub mod sim;

pub use error::{CascadeError, ModelError, Result};
pub use model::{
    Action, AgentStatus, Belief, Cutoff, CutoffProfile, GameState, Params, PriorProfile, RawParams,
    RevelationCause,
};
