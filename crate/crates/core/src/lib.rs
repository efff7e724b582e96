//! Forecast-aware cooperative multi-robot planning on temporal graphs.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`forecast`] propagates adversary stay–move dynamics into time-indexed
//!    edge risk `ρ[t][e]`.
//! 2. [`support`] allocates support nodes to edges that become risky anywhere
//!    in the horizon.
//! 3. [`planner`] searches the joint time-expanded state space for a team plan
//!    minimizing expected cost.
//! 4. [`eval`] replays plans against sampled adversaries and runs experiment
//!    grids against baselines.

pub mod eval;
pub mod forecast;
pub mod graph;
pub mod planner;
pub mod scenario;
pub mod seed;
pub mod support;
