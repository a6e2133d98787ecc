//! Environments with a symbolic (PDDL) view of their state.

pub mod craft;
pub mod domains;
pub mod taxi;
pub mod trace;

use sage_pddl::{Domain, SymbolicState, TypedObject};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("episode is over; call reset")]
    EpisodeOver,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("unknown recipe id {0}")]
    UnknownRecipe(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
}

/// Common interface the agents drive.
pub trait SymbolicEnv {
    type Action: Copy + std::fmt::Debug + PartialEq;

    fn domain(&self) -> &Domain;
    /// Objects of the current planning instance (domain constants excluded).
    fn objects(&self) -> Vec<TypedObject>;
    fn symbolic_state(&self) -> SymbolicState;
    /// The symbolic state without static facts; enough to test step
    /// postconditions, and cheaper on large maps.
    fn dynamic_state(&self) -> SymbolicState {
        self.symbolic_state()
    }
    /// Flat feature vector consumed by the meta-controller networks.
    fn observation(&self) -> Vec<f32>;
    fn observation_len(&self) -> usize;
    fn step(&mut self, action: Self::Action) -> Result<StepResult, EnvError>;
    fn noop(&self) -> Self::Action;
    fn frame(&self) -> usize;
    fn is_done(&self) -> bool;
    fn reset(&mut self, seed: u64);
}
