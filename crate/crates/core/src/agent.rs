//! Interface the harness drives, and the per-episode bookkeeping shared by
//! every agent.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::control::{Outcome, Segment};
use crate::error::Result;

/// Summary of one finished episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Total frames the agent had consumed when the episode ended.
    pub frame: u64,
    pub episode: u64,
    /// Undiscounted environment return.
    pub ret: f64,
    pub plans_issued: u64,
    pub invalid_goals: u64,
    pub timeouts: u64,
}

impl EpisodeRecord {
    pub fn invalid_rate(&self) -> f64 {
        ratio(self.invalid_goals, self.plans_issued)
    }

    pub fn timeout_rate(&self) -> f64 {
        ratio(self.timeouts, self.plans_issued)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Running totals of the episode in progress.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpisodeStats {
    pub ret: f64,
    pub plans_issued: u64,
    pub invalid_goals: u64,
    pub timeouts: u64,
}

impl EpisodeStats {
    /// Counts one meta decision and its environment reward.
    pub fn add_segment(&mut self, segment: &Segment) {
        self.ret += segment.rewards.iter().sum::<f64>();
        self.plans_issued += 1;
        match segment.outcome {
            Outcome::InvalidGoal => self.invalid_goals += 1,
            Outcome::StepTimeout => self.timeouts += 1,
            Outcome::Completed | Outcome::EpisodeEnd => {}
        }
    }

    pub fn finish(&mut self, frame: u64, episode: u64) -> EpisodeRecord {
        let s = std::mem::take(self);
        EpisodeRecord {
            frame,
            episode,
            ret: s.ret,
            plans_issued: s.plans_issued,
            invalid_goals: s.invalid_goals,
            timeouts: s.timeouts,
        }
    }
}

/// Deterministic stream of episode seeds for one actor.
#[derive(Debug, Clone)]
pub struct SeedStream {
    rng: ChaCha8Rng,
}

impl SeedStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn next_seed(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// Stream ids keep training, evaluation and auxiliary randomness apart.
pub mod streams {
    pub const EVAL: u64 = 1 << 32;
    pub const POLICY: u64 = 2 << 32;
    pub const LOW_LEVEL: u64 = 3 << 32;
    pub const INIT: u64 = 4 << 32;
}

pub trait Agent: Send {
    /// Frames consumed by training so far.
    fn frames(&self) -> u64;
    /// Trains until at least `frame_target` frames; appends every episode
    /// that finished along the way.
    fn train_until(&mut self, frame_target: u64, episodes: &mut Vec<EpisodeRecord>) -> Result<()>;
    /// Runs `episodes` episodes without exploration.
    fn evaluate(&self, episodes: usize, seed: u64) -> Result<Vec<EpisodeRecord>>;
    fn checkpoint(&self) -> Result<Checkpoint>;
}

/// Learner-side settings shared by the agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Parallel environments of the on-policy learners.
    pub actors: usize,
    /// Decisions per actor between PPO updates.
    pub rollout: usize,
    pub hidden: Vec<usize>,
    /// Initial log standard deviation of Gaussian goal arguments.
    pub init_log_std: f64,
    /// Frames between DQN updates.
    pub train_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            actors: 16,
            rollout: 128,
            hidden: vec![64, 64],
            init_log_std: -0.5,
            train_interval: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        use crate::error::CoreError;
        if self.actors == 0 || self.rollout == 0 {
            return Err(CoreError::Config("actors and rollout must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(CoreError::Config("hidden layer widths must be positive".into()));
        }
        if self.train_interval == 0 {
            return Err(CoreError::Config("train_interval must be positive".into()));
        }
        if !self.init_log_std.is_finite() {
            return Err(CoreError::Config("init_log_std must be finite".into()));
        }
        Ok(())
    }
}
