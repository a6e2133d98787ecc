//! Actor-critic with a shared trunk and clipped-surrogate PPO updates.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::error::{Result, RlError};
use crate::heads::Heads;
use crate::net::{NetSpec, Network};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub normalize_advantages: bool,
    pub adam: AdamConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.1,
            epochs: 4,
            minibatches: 4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            normalize_advantages: true,
            adam: AdamConfig {
                max_grad_norm: Some(0.5),
                ..AdamConfig::new(2.5e-4, 1e-5)
            },
        }
    }
}

impl PpoConfig {
    /// Meta-controller and flat-agent settings for taxi.
    pub fn taxi() -> Self {
        let mut c = Self::default();
        c.entropy_coef = 0.006;
        c.adam.lr = 2.5e-4;
        c.adam.eps = 1e-7;
        c
    }

    /// Goal-conditioned low-level controller for the crafting world.
    pub fn craft_low_level() -> Self {
        let mut c = Self::default();
        c.entropy_coef = 0.02;
        c.adam.lr = 1e-3;
        c.adam.eps = 1e-5;
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic<F: Scalar> {
    pub net: Network<F>,
    pub heads: Heads,
    pub log_std: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyStep {
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

impl<F: Scalar> ActorCritic<F> {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], heads: Heads, init_log_std: f64, rng: &mut R) -> Result<Self> {
        let net = Network::new(NetSpec::mlp(obs_dim, hidden, heads.width() + 1), 0.01, rng)?;
        Self::with_net(net, heads, init_log_std)
    }

    /// The net's last output is the critic; the rest feed the heads.
    pub fn with_net(net: Network<F>, heads: Heads, init_log_std: f64) -> Result<Self> {
        if net.output_dim() != heads.width() + 1 {
            return Err(RlError::DimensionMismatch {
                expected: heads.width() + 1,
                found: net.output_dim(),
            });
        }
        let log_std = vec![F::of(init_log_std); heads.gaussians()];
        Ok(Self { net, heads, log_std })
    }

    pub fn param_count(&self) -> usize {
        self.net.params().len() + self.log_std.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn value_index(&self) -> usize {
        self.heads.width()
    }

    fn to_f(obs: &[f32]) -> Vec<F> {
        obs.iter().map(|v| F::of(*v as f64)).collect()
    }

    pub fn step<R: Rng + ?Sized>(&self, obs: &[f32], rng: &mut R) -> Result<PolicyStep> {
        let row = self.net.forward_one(&Self::to_f(obs))?;
        let action = self.heads.sample(&row, &self.log_std, rng)?;
        let log_prob = self.heads.log_prob(&row, &self.log_std, &action)?;
        Ok(PolicyStep {
            action,
            log_prob,
            value: row[self.value_index()].f64(),
        })
    }

    /// Batched sampling, one output row per observation.
    pub fn step_batch<R: Rng + ?Sized>(&self, obs: ArrayView2<F>, rng: &mut R) -> Result<Vec<PolicyStep>> {
        let out = self.net.forward(obs)?;
        out.rows()
            .into_iter()
            .map(|r| {
                let row = r.to_vec();
                let action = self.heads.sample(&row, &self.log_std, rng)?;
                let log_prob = self.heads.log_prob(&row, &self.log_std, &action)?;
                Ok(PolicyStep {
                    action,
                    log_prob,
                    value: row[self.value_index()].f64(),
                })
            })
            .collect()
    }

    pub fn greedy(&self, obs: &[f32]) -> Result<Vec<f64>> {
        let row = self.net.forward_one(&Self::to_f(obs))?;
        self.heads.mode(&row, &self.log_std)
    }

    pub fn value(&self, obs: &[f32]) -> Result<f64> {
        Ok(self.net.forward_one(&Self::to_f(obs))?[self.value_index()].f64())
    }

    pub fn cast<G: Scalar>(&self) -> ActorCritic<G> {
        ActorCritic {
            net: self.net.cast(),
            heads: self.heads.clone(),
            log_std: self.log_std.iter().map(|v| G::of(v.f64())).collect(),
        }
    }
}

/// Samples for one update; rows of `obs` align with the vectors.
#[derive(Debug, Clone)]
pub struct PpoBatch<F: Scalar> {
    pub obs: Array2<F>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl<F: Scalar> PpoBatch<F> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.obs.nrows();
        for (name, len) in [
            ("actions", self.actions.len()),
            ("old_log_probs", self.old_log_probs.len()),
            ("advantages", self.advantages.len()),
            ("returns", self.returns.len()),
        ] {
            if len != n {
                return Err(RlError::LengthMismatch(format!("{name} has {len} rows, obs has {n}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    /// Mean negated clipped surrogate.
    pub policy: f64,
    /// Mean squared value error (before the coefficient).
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    /// Mean of `(r - 1) - ln r` over the batch.
    pub approx_kl: f64,
    /// Fraction of samples with `|r - 1| > clip`.
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefficients {
    pub clip: f64,
    pub value: f64,
    pub entropy: f64,
}

impl From<&PpoConfig> for LossCoefficients {
    fn from(c: &PpoConfig) -> Self {
        Self {
            clip: c.clip,
            value: c.value_coef,
            entropy: c.entropy_coef,
        }
    }
}

/// Loss `policy + c_v·value − c_e·entropy` on the rows `idx` of the batch,
/// with its gradient for the network parameters and the log-stds.
pub fn ppo_loss_grad<F: Scalar>(
    ac: &ActorCritic<F>,
    batch: &PpoBatch<F>,
    idx: &[usize],
    coef: LossCoefficients,
) -> Result<(LossTerms, Vec<F>, Vec<F>)> {
    batch.check()?;
    if idx.is_empty() {
        return Err(RlError::EmptyBatch);
    }
    let obs = batch.obs.select(ndarray::Axis(0), idx);
    let (out, cache) = ac.net.forward_cached(obs.view())?;
    let b = idx.len() as f64;
    let vi = ac.value_index();
    let mut d_out = Array2::<F>::zeros(out.raw_dim());
    let mut d_std = vec![F::zero(); ac.log_std.len()];
    let mut terms = LossTerms::default();
    let mut clipped_count = 0usize;
    for (k, &i) in idx.iter().enumerate() {
        let row = out.row(k).to_vec();
        let action = &batch.actions[i];
        let adv = batch.advantages[i];
        let logp = ac.heads.log_prob(&row, &ac.log_std, action)?;
        let ratio = (logp - batch.old_log_probs[i]).exp();
        let clipped = ratio.clamp(1.0 - coef.clip, 1.0 + coef.clip);
        let unclipped_active = ratio * adv <= clipped * adv;
        terms.policy -= (ratio * adv).min(clipped * adv) / b;
        terms.approx_kl += ((ratio - 1.0) - (logp - batch.old_log_probs[i])) / b;
        if (ratio - 1.0).abs() > coef.clip {
            clipped_count += 1;
        }
        let ent = ac.heads.entropy(&row, &ac.log_std)?;
        terms.entropy += ent / b;
        let v = row[vi].f64();
        let verr = v - batch.returns[i];
        terms.value += verr * verr / b;

        let mut d_row = vec![F::zero(); row.len()];
        if unclipped_active {
            ac.heads.add_log_prob_grad(&row, &ac.log_std, action, -adv * ratio / b, &mut d_row, &mut d_std)?;
        }
        ac.heads.add_entropy_grad(&row, &ac.log_std, -coef.entropy / b, &mut d_row, &mut d_std)?;
        d_row[vi] += F::of(2.0 * coef.value * verr / b);
        for (j, g) in d_row.into_iter().enumerate() {
            d_out[(k, j)] = g;
        }
    }
    terms.clip_fraction = clipped_count as f64 / b;
    terms.total = terms.policy + coef.value * terms.value - coef.entropy * terms.entropy;
    if !terms.total.is_finite() {
        return Err(RlError::NonFinite("ppo loss".into()));
    }
    let mut grad = vec![F::zero(); ac.net.params().len()];
    ac.net.backward(&cache, d_out.view(), &mut grad)?;
    Ok((terms, grad, d_std))
}

/// Mean loss terms over all minibatch updates.
pub fn ppo_update<F: Scalar, R: Rng + ?Sized>(
    ac: &mut ActorCritic<F>,
    adam: &mut Adam<F>,
    batch: &PpoBatch<F>,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<LossTerms> {
    batch.check()?;
    if batch.is_empty() {
        return Err(RlError::EmptyBatch);
    }
    let mut batch = batch.clone();
    if config.normalize_advantages && batch.len() > 1 {
        let n = batch.len() as f64;
        let mean = batch.advantages.iter().sum::<f64>() / n;
        let var = batch.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt() + 1e-8;
        for a in &mut batch.advantages {
            *a = (*a - mean) / sd;
        }
    }
    let coef = LossCoefficients::from(config);
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let chunk = batch.len().div_ceil(config.minibatches.max(1));
    let mut sum = LossTerms::default();
    let mut count = 0.0;
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for idx in order.chunks(chunk) {
            let (terms, g_net, g_std) = ppo_loss_grad(ac, &batch, idx, coef)?;
            let ActorCritic { net, log_std, .. } = ac;
            adam.step(&mut [net.params_mut(), log_std.as_mut_slice()], &[&g_net, &g_std]);
            sum.policy += terms.policy;
            sum.value += terms.value;
            sum.entropy += terms.entropy;
            sum.total += terms.total;
            sum.approx_kl += terms.approx_kl;
            sum.clip_fraction += terms.clip_fraction;
            count += 1.0;
        }
    }
    Ok(LossTerms {
        policy: sum.policy / count,
        value: sum.value / count,
        entropy: sum.entropy / count,
        total: sum.total / count,
        approx_kl: sum.approx_kl / count,
        clip_fraction: sum.clip_fraction / count,
    })
}

pub fn adam_for<F: Scalar>(ac: &ActorCritic<F>, config: &PpoConfig) -> Adam<F> {
    Adam::new(config.adam, ac.param_count())
}
