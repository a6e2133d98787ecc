//! On-policy rollout storage feeding PPO.

use ndarray::Array2;
use sage_rl::{gae_with_discounts, PpoBatch};

use crate::error::{CoreError, Result};

/// One actor's consecutive decisions since the last update.
#[derive(Debug, Clone, Default)]
pub struct Rollout {
    obs: Vec<Vec<f32>>,
    actions: Vec<Vec<f64>>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    discounts: Vec<f64>,
    terminals: Vec<bool>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(&mut self, obs: Vec<f32>, action: Vec<f64>, log_prob: f64, value: f64, reward: f64, discount: f64, terminal: bool) {
        self.obs.push(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.values.push(value);
        self.rewards.push(reward);
        self.discounts.push(discount);
        self.terminals.push(terminal);
    }
}

/// Concatenation of finished rollouts.
#[derive(Debug, Clone, Default)]
pub struct BatchBuilder {
    obs: Vec<Vec<f32>>,
    actions: Vec<Vec<f64>>,
    log_probs: Vec<f64>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
}

impl BatchBuilder {
    /// Adds `rollout` with GAE advantages; `last_value` bootstraps the
    /// state after its final decision.
    pub fn add(&mut self, rollout: Rollout, last_value: f64, lambda: f64) -> Result<()> {
        let mut values = rollout.values;
        values.push(last_value);
        let (adv, ret) = gae_with_discounts(&rollout.rewards, &values, &rollout.terminals, &rollout.discounts, lambda)?;
        self.obs.extend(rollout.obs);
        self.actions.extend(rollout.actions);
        self.log_probs.extend(rollout.log_probs);
        self.advantages.extend(adv);
        self.returns.extend(ret);
        Ok(())
    }

    /// Adds a sample with an externally computed advantage.
    pub fn add_sample(&mut self, obs: Vec<f32>, action: Vec<f64>, log_prob: f64, advantage: f64, ret: f64) {
        self.obs.push(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.advantages.push(advantage);
        self.returns.push(ret);
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn build(self) -> Result<PpoBatch<f32>> {
        let width = self.obs.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(width * self.obs.len());
        for row in &self.obs {
            if row.len() != width {
                return Err(CoreError::Config("ragged observation rows".into()));
            }
            flat.extend_from_slice(row);
        }
        let obs = Array2::from_shape_vec((self.obs.len(), width), flat).map_err(|e| CoreError::Config(e.to_string()))?;
        Ok(PpoBatch {
            obs,
            actions: self.actions,
            old_log_probs: self.log_probs,
            advantages: self.advantages,
            returns: self.returns,
        })
    }
}
