use sage_envs::EnvError;
use sage_pddl::{PddlError, PlanError};
use sage_rl::RlError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("planner failure: {0}")]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Pddl(#[from] PddlError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("goal table: {0}")]
    GoalTable(String),
    #[error("checkpoint does not fit: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
