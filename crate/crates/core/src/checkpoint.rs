//! Serialized final state of a trained agent.

use std::path::Path;

use sage_rl::{NetworkDump, PolicyDump};
use serde::{Deserialize, Serialize};

use crate::agent::TrainConfig;
use crate::control::AgentConfig;
use crate::error::Result;
use crate::goals::CraftGoalTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "agent", rename_all = "kebab-case")]
pub enum Checkpoint {
    Scripted {
        env: String,
        control: AgentConfig,
    },
    RandomGoal {
        env: String,
        control: AgentConfig,
    },
    SageTaxi {
        env: String,
        control: AgentConfig,
        policy: PolicyDump,
    },
    FlatPpo {
        env: String,
        policy: PolicyDump,
    },
    SageCraft {
        env: String,
        control: AgentConfig,
        train: TrainConfig,
        table: CraftGoalTable,
        q: NetworkDump,
        low_level: PolicyDump,
    },
    Hdqn {
        env: String,
        control: AgentConfig,
        train: TrainConfig,
        q: NetworkDump,
        low_level: PolicyDump,
    },
    LowLevel {
        env: String,
        control: AgentConfig,
        policy: PolicyDump,
    },
}

impl Checkpoint {
    pub fn env(&self) -> &str {
        match self {
            Checkpoint::Scripted { env, .. }
            | Checkpoint::RandomGoal { env, .. }
            | Checkpoint::SageTaxi { env, .. }
            | Checkpoint::FlatPpo { env, .. }
            | Checkpoint::SageCraft { env, .. }
            | Checkpoint::Hdqn { env, .. }
            | Checkpoint::LowLevel { env, .. } => env,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
