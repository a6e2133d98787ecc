//! Double DQN over semi-MDP transitions: a transition lasting `n` frames
//! bootstraps with `γ^n`.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::error::{Result, RlError};
use crate::net::{batch_from_rows, NetSpec, Network};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub gamma: f64,
    pub batch_size: usize,
    /// Soft target blend per update.
    pub tau: f64,
    pub double_q: bool,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Frames over which ε decays linearly.
    pub epsilon_frames: u64,
    pub replay_capacity: usize,
    /// Minimum stored transitions before updates start.
    pub learning_starts: usize,
    pub adam: AdamConfig,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            batch_size: 32,
            tau: 1e-3,
            double_q: true,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_frames: 600_000,
            replay_capacity: 100_000,
            learning_starts: 32,
            adam: AdamConfig::new(3e-5, 1e-8),
        }
    }
}

impl DqnConfig {
    pub fn epsilon(&self, frame: u64) -> f64 {
        if frame >= self.epsilon_frames {
            return self.epsilon_end;
        }
        let t = frame as f64 / self.epsilon_frames as f64;
        self.epsilon_start + t * (self.epsilon_end - self.epsilon_start)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnTransition {
    pub obs: Vec<f32>,
    pub action: usize,
    /// Discounted reward accumulated over the transition.
    pub reward: f64,
    pub next_obs: Vec<f32>,
    /// Frames spanned; the bootstrap uses `γ^duration`.
    pub duration: u32,
    pub terminal: bool,
}

/// `y = U + γ^n · Q_target(s', argmax_a Q_online(s', a))`, or `y = U` for
/// terminal transitions. Without double-Q the argmax uses the target net.
pub fn dqn_targets<F: Scalar>(
    online: &Network<F>,
    target: &Network<F>,
    next_obs: ArrayView2<F>,
    rewards: &[f64],
    durations: &[u32],
    terminals: &[bool],
    gamma: f64,
    double_q: bool,
) -> Result<Vec<f64>> {
    let n = next_obs.nrows();
    if rewards.len() != n || durations.len() != n || terminals.len() != n {
        return Err(RlError::LengthMismatch("dqn target inputs".into()));
    }
    let q_target = target.forward(next_obs)?;
    let q_select = if double_q { online.forward(next_obs)? } else { q_target.clone() };
    Ok((0..n)
        .map(|i| {
            if terminals[i] {
                return rewards[i];
            }
            let row = q_select.row(i);
            let mut best = 0;
            for a in 1..row.len() {
                if row[a] > row[best] {
                    best = a;
                }
            }
            rewards[i] + gamma.powi(durations[i] as i32) * q_target[(i, best)].f64()
        })
        .collect())
}

/// Mean squared TD error on the taken actions and its parameter gradient.
pub fn dqn_loss_grad<F: Scalar>(online: &Network<F>, obs: ArrayView2<F>, actions: &[usize], targets: &[f64]) -> Result<(f64, Vec<F>)> {
    let n = obs.nrows();
    if n == 0 {
        return Err(RlError::EmptyBatch);
    }
    if actions.len() != n || targets.len() != n {
        return Err(RlError::LengthMismatch("dqn loss inputs".into()));
    }
    let (q, cache) = online.forward_cached(obs)?;
    let mut d = Array2::<F>::zeros(q.raw_dim());
    let mut loss = 0.0;
    for i in 0..n {
        if actions[i] >= q.ncols() {
            return Err(RlError::InvalidAction(format!("action {} of {}", actions[i], q.ncols())));
        }
        let err = q[(i, actions[i])].f64() - targets[i];
        loss += err * err / n as f64;
        d[(i, actions[i])] = F::of(2.0 * err / n as f64);
    }
    if !loss.is_finite() {
        return Err(RlError::NonFinite("dqn loss".into()));
    }
    let mut grad = vec![F::zero(); online.params().len()];
    online.backward(&cache, d.view(), &mut grad)?;
    Ok((loss, grad))
}

/// `θ_target ← (1 − τ)·θ_target + τ·θ_online`.
pub fn soft_update<F: Scalar>(target: &mut Network<F>, online: &Network<F>, tau: f64) {
    let tau = F::of(tau);
    for (t, o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = (F::one() - tau) * *t + tau * *o;
    }
}

#[derive(Debug, Clone)]
pub struct DqnLearner<F: Scalar> {
    pub online: Network<F>,
    pub target: Network<F>,
    pub adam: Adam<F>,
    pub config: DqnConfig,
}

impl<F: Scalar> DqnLearner<F> {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], actions: usize, config: DqnConfig, rng: &mut R) -> Result<Self> {
        let online = Network::new(NetSpec::mlp(obs_dim, hidden, actions), 1.0, rng)?;
        Ok(Self::from_network(online, config))
    }

    pub fn from_network(online: Network<F>, config: DqnConfig) -> Self {
        let adam = Adam::new(config.adam, online.params().len());
        Self {
            target: online.clone(),
            online,
            adam,
            config,
        }
    }

    pub fn actions(&self) -> usize {
        self.online.output_dim()
    }

    pub fn q_values(&self, obs: &[f32]) -> Result<Vec<f64>> {
        let x: Vec<F> = obs.iter().map(|v| F::of(*v as f64)).collect();
        Ok(self.online.forward_one(&x)?.into_iter().map(Scalar::f64).collect())
    }

    /// ε-greedy choice; ties go to the lowest index.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f32], epsilon: f64, rng: &mut R) -> Result<usize> {
        if rng.random::<f64>() < epsilon {
            return Ok(rng.random_range(0..self.actions()));
        }
        let q = self.q_values(obs)?;
        let mut best = 0;
        for a in 1..q.len() {
            if q[a] > q[best] {
                best = a;
            }
        }
        Ok(best)
    }

    /// One gradient step on `batch` followed by the soft target update.
    pub fn update(&mut self, batch: &[&DqnTransition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(RlError::EmptyBatch);
        }
        let obs: Array2<F> = batch_from_rows(&batch.iter().map(|t| t.obs.as_slice()).collect::<Vec<_>>())?;
        let next: Array2<F> = batch_from_rows(&batch.iter().map(|t| t.next_obs.as_slice()).collect::<Vec<_>>())?;
        let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
        let durations: Vec<u32> = batch.iter().map(|t| t.duration).collect();
        let terminals: Vec<bool> = batch.iter().map(|t| t.terminal).collect();
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
        let y = dqn_targets(
            &self.online,
            &self.target,
            next.view(),
            &rewards,
            &durations,
            &terminals,
            self.config.gamma,
            self.config.double_q,
        )?;
        let (loss, grad) = dqn_loss_grad(&self.online, obs.view(), &actions, &y)?;
        self.adam.step(&mut [self.online.params_mut()], &[&grad]);
        soft_update(&mut self.target, &self.online, self.config.tau);
        Ok(loss)
    }
}
