//! Central finite-difference checks of the hand-written gradients. Losses
//! are recomputed here from forward passes only.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dqn::{dqn_loss_grad, dqn_targets};
use crate::error::Result;
use crate::heads::{HeadSpec, Heads};
use crate::net::{LayerSpec, NetSpec, Network};
use crate::ppo::{ppo_loss_grad, ActorCritic, LossCoefficients, PpoBatch};

pub const STEP: f64 = 1e-5;
const KINK_MARGIN: f64 = 1e-3;

/// `‖a − b‖ / max(‖a‖ + ‖b‖, 1e-12)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-12)
}

pub fn central_difference(params: &mut [f64], h: f64, mut loss: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let keep = params[i];
        params[i] = keep + h;
        let up = loss(params);
        params[i] = keep - h;
        let down = loss(params);
        params[i] = keep;
        out.push((up - down) / (2.0 * h));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub label: String,
    pub params: usize,
    pub ppo_error: f64,
    pub log_std_error: f64,
    pub dqn_error: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.ppo_error.max(self.log_std_error).max(self.dqn_error)
    }
}

fn random_spec<R: Rng + ?Sized>(index: usize, outputs: usize, rng: &mut R) -> NetSpec {
    if index % 4 == 3 {
        let channels = rng.random_range(1..=2);
        let side = rng.random_range(4..=6);
        let conv = LayerSpec::Conv2d {
            channels,
            height: side,
            width: side,
            filters: rng.random_range(2..=3),
            kernel: rng.random_range(2..=3),
            stride: rng.random_range(1..=2),
        };
        let hidden = rng.random_range(3..=8);
        NetSpec {
            layers: vec![
                conv,
                LayerSpec::Dense {
                    inputs: conv.outputs(),
                    outputs: hidden,
                },
                LayerSpec::Dense { inputs: hidden, outputs },
            ],
        }
    } else {
        let depth = rng.random_range(0..=3);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=9)).collect();
        NetSpec::mlp(rng.random_range(1..=7), &hidden, outputs)
    }
}

fn random_heads<R: Rng + ?Sized>(rng: &mut R) -> Heads {
    let count = rng.random_range(1..=4);
    let specs = (0..count)
        .map(|_| match rng.random_range(0..3) {
            0 => HeadSpec::Bernoulli,
            1 => HeadSpec::Categorical(rng.random_range(2..=4)),
            _ => HeadSpec::Gaussian,
        })
        .collect();
    Heads::new(specs).expect("non-empty heads")
}

/// Fresh initialisation with every parameter jittered, so that no
/// pre-activation sits exactly on a ReLU kink.
fn jittered<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Result<Network<f64>> {
    let mut net = Network::<f64>::new(spec, 1.0, rng)?;
    for p in net.params_mut() {
        let noise: f64 = StandardNormal.sample(rng);
        *p += 0.1 * noise;
    }
    Ok(net)
}

fn ppo_loss_by_forward(ac: &ActorCritic<f64>, batch: &PpoBatch<f64>, coef: LossCoefficients) -> f64 {
    let out = ac.net.forward(batch.obs.view()).expect("forward");
    let b = batch.len() as f64;
    let vi = ac.heads.width();
    let mut total = 0.0;
    for i in 0..batch.len() {
        let row = out.row(i).to_vec();
        let logp = ac.heads.log_prob(&row, &ac.log_std, &batch.actions[i]).expect("log prob");
        let ratio = (logp - batch.old_log_probs[i]).exp();
        let adv = batch.advantages[i];
        let surrogate = (ratio * adv).min(ratio.clamp(1.0 - coef.clip, 1.0 + coef.clip) * adv);
        let entropy = ac.heads.entropy(&row, &ac.log_std).expect("entropy");
        let verr = row[vi] - batch.returns[i];
        total += (-surrogate + coef.value * verr * verr - coef.entropy * entropy) / b;
    }
    total
}

/// Checks the PPO, log-std and DQN gradients of `count` random networks.
pub fn check_random_networks<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Result<Vec<GradCheckReport>> {
    let mut reports = Vec::with_capacity(count);
    for index in 0..count {
        let heads = random_heads(rng);
        let spec = random_spec(index, heads.width() + 1, rng);
        let mut ac = ActorCritic::with_net(jittered(spec.clone(), rng)?, heads, 0.0)?;
        for s in &mut ac.log_std {
            *s = rng.random_range(-0.5..0.5);
        }
        let q_net = jittered(spec.clone(), rng)?;
        let rows = rng.random_range(2..=6);
        // Central differences are only valid away from the ReLU kinks.
        let obs = loop {
            let obs: Array2<f64> = Array2::from_shape_fn((rows, spec.inputs()), |_| StandardNormal.sample(rng));
            let (_, a) = ac.net.forward_cached(obs.view())?;
            let (_, b) = q_net.forward_cached(obs.view())?;
            if a.relu_margin().min(b.relu_margin()) > KINK_MARGIN {
                break obs;
            }
        };
        let out = ac.net.forward(obs.view())?;
        let mut actions = Vec::with_capacity(rows);
        let mut old = Vec::with_capacity(rows);
        for i in 0..rows {
            let row = out.row(i).to_vec();
            let a = ac.heads.sample(&row, &ac.log_std, rng)?;
            let logp = ac.heads.log_prob(&row, &ac.log_std, &a)?;
            actions.push(a);
            // Likewise keep the ratio off the clip boundaries 1 ± 0.1.
            let old_logp = loop {
                let candidate = logp + rng.random_range(-0.3..0.3);
                let ratio = (logp - candidate).exp();
                if (ratio - 0.9).abs().min((ratio - 1.1).abs()) > KINK_MARGIN {
                    break candidate;
                }
            };
            old.push(old_logp);
        }
        let batch = PpoBatch {
            obs: obs.clone(),
            actions,
            old_log_probs: old,
            advantages: (0..rows).map(|_| StandardNormal.sample(rng)).collect(),
            returns: (0..rows).map(|_| StandardNormal.sample(rng)).collect(),
        };
        let coef = LossCoefficients {
            clip: 0.1,
            value: 0.5,
            entropy: 0.02,
        };
        let idx: Vec<usize> = (0..rows).collect();
        let (_, g_net, g_std) = ppo_loss_grad(&ac, &batch, &idx, coef)?;

        let mut params = ac.net.params().to_vec();
        let mut probe = ac.clone();
        let numeric_net = central_difference(&mut params, STEP, |p| {
            probe.net.set_params(p).expect("same length");
            ppo_loss_by_forward(&probe, &batch, coef)
        });
        let mut stds = ac.log_std.clone();
        let mut probe = ac.clone();
        let numeric_std = central_difference(&mut stds, STEP, |s| {
            probe.log_std = s.to_vec();
            ppo_loss_by_forward(&probe, &batch, coef)
        });

        let q_target = jittered(spec.clone(), rng)?;
        let next = Array2::from_shape_fn((rows, spec.inputs()), |_| StandardNormal.sample(rng));
        let n_actions = q_net.output_dim();
        let taken: Vec<usize> = (0..rows).map(|_| rng.random_range(0..n_actions)).collect();
        let rewards: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        let durations: Vec<u32> = (0..rows).map(|_| rng.random_range(1..=5)).collect();
        let terminals: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.2)).collect();
        let y = dqn_targets(&q_net, &q_target, next.view(), &rewards, &durations, &terminals, 0.95, true)?;
        let (_, g_q) = dqn_loss_grad(&q_net, obs.view(), &taken, &y)?;
        let mut qp = q_net.params().to_vec();
        let mut probe = q_net.clone();
        let numeric_q = central_difference(&mut qp, STEP, |p| {
            probe.set_params(p).expect("same length");
            let q = probe.forward(obs.view()).expect("forward");
            (0..rows).map(|i| (q[(i, taken[i])] - y[i]).powi(2)).sum::<f64>() / rows as f64
        });

        let label = if matches!(spec.layers[0], LayerSpec::Conv2d { .. }) { "conv" } else { "dense" };
        reports.push(GradCheckReport {
            label: format!("{label} #{index} {:?}", ac.heads.specs()),
            params: ac.param_count(),
            ppo_error: relative_error(&g_net, &numeric_net),
            log_std_error: if g_std.is_empty() { 0.0 } else { relative_error(&g_std, &numeric_std) },
            dqn_error: relative_error(&g_q, &numeric_q),
        });
    }
    Ok(reports)
}
