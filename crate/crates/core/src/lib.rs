//! Symbolic-planning meta-control for the taxi and crafting worlds: goal
//! spaces, goal execution, the learning agents and baselines, and the
//! experiment harness.

pub mod agent;
pub mod checkpoint;
pub mod craft_agents;
pub mod control;
pub mod error;
pub mod goals;
pub mod harness;
pub mod pretrain;
pub mod rollout;
pub mod taxi_agents;

pub use error::{CoreError, Result};
