//! Pre-training of the goal-conditioned crafting controller on randomly
//! sampled feasible steps.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sage_envs::craft::{CraftAction, CraftConfig, CraftEnv, CONTROLLER_FEATURES};
use sage_envs::SymbolicEnv;
use sage_pddl::{GroundStep, GroundedTask, SymbolicState};
use sage_rl::{adam_for, ppo_update, ActorCritic, HeadSpec, Heads, PpoConfig};
use serde::{Deserialize, Serialize};

use crate::agent::{streams, SeedStream};
use crate::control::{check_step_complete, AgentConfig};
use crate::error::{CoreError, Result};
use crate::rollout::{BatchBuilder, Rollout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub frames: u64,
    pub actors: usize,
    pub rollout: usize,
    pub hidden: Vec<usize>,
    /// Reward per unit of distance closed towards the step's target.
    pub shaping: f64,
    pub ppo: PpoConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            frames: 400_000,
            actors: 16,
            rollout: 128,
            hidden: vec![64, 64],
            shaping: 0.1,
            ppo: PpoConfig::craft_low_level(),
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.actors == 0 || self.rollout == 0 || self.hidden.contains(&0) {
            return Err(CoreError::Config("pretrain actors, rollout and hidden widths must be positive".into()));
        }
        if !self.shaping.is_finite() {
            return Err(CoreError::Config("pretrain shaping must be finite".into()));
        }
        Ok(())
    }
}

pub fn controller_heads() -> Heads {
    Heads::new(vec![HeadSpec::Categorical(CraftAction::CONTROL.len())]).expect("fixed head layout")
}

/// Steps whose precondition holds in `state`.
pub fn feasible_steps<'a>(steps: &'a [GroundStep], state: &SymbolicState) -> Result<Vec<&'a GroundStep>> {
    let mut out = Vec::new();
    for s in steps {
        if state.holds(&s.precondition)? {
            out.push(s);
        }
    }
    Ok(out)
}

/// Uniform over operators with a feasible instance, then uniform over
/// that operator's instances.
pub fn sample_step<'a, R: Rng + ?Sized>(feasible: &[&'a GroundStep], rng: &mut R) -> Option<&'a GroundStep> {
    let mut by_op: BTreeMap<&str, Vec<&'a GroundStep>> = BTreeMap::new();
    for s in feasible {
        by_op.entry(s.operator.as_str()).or_default().push(s);
    }
    let ops: Vec<_> = by_op.values().collect();
    let group = ops.choose(rng)?;
    group.choose(rng).copied()
}

/// Shaped low-level reward bookkeeping of one step instance.
#[derive(Debug, Clone)]
pub struct LowLevelTask {
    pub step: GroundStep,
    before: SymbolicState,
    distance: Option<f64>,
    elapsed: usize,
    paid: bool,
}

impl LowLevelTask {
    pub fn new(env: &CraftEnv, step: GroundStep) -> Self {
        Self {
            distance: env.target_distance(&step),
            before: env.dynamic_state(),
            step,
            elapsed: 0,
            paid: false,
        }
    }

    /// Reward of the frame just taken and whether the step is complete.
    /// The completion bonus is paid once per instance.
    pub fn reward(&mut self, env: &CraftEnv, env_reward: f64, r_complete: f64, shaping: f64) -> Result<(f64, bool)> {
        self.elapsed += 1;
        let mut r = env_reward;
        let complete = check_step_complete(&env.dynamic_state(), &self.step, &self.before)?;
        if complete && !self.paid {
            r += r_complete;
            self.paid = true;
        }
        let now = env.target_distance(&self.step);
        if let (Some(a), Some(b)) = (self.distance, now) {
            r += shaping * (a - b);
        }
        self.distance = now;
        Ok((r, complete))
    }

    pub fn elapsed(&self) -> usize {
        self.elapsed
    }
}

struct Worker {
    env: CraftEnv,
    task_steps: Vec<GroundStep>,
    task: Option<LowLevelTask>,
    seeds: SeedStream,
}

impl Worker {
    fn new(config: &CraftConfig, steps: &[GroundStep], seed: u64, index: usize) -> Result<Self> {
        let mut seeds = SeedStream::new(seed, streams::LOW_LEVEL + index as u64);
        Ok(Self {
            env: CraftEnv::new(config.clone(), seeds.next_seed())?,
            task_steps: steps.to_vec(),
            task: None,
            seeds,
        })
    }

    /// Picks the next step, resetting the world when none is feasible or
    /// the episode is over.
    fn next_task<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for _ in 0..100 {
            if !self.env.is_done() {
                let state = self.env.symbolic_state();
                let feasible = feasible_steps(&self.task_steps, &state)?;
                if let Some(step) = sample_step(&feasible, rng) {
                    self.task = Some(LowLevelTask::new(&self.env, step.clone()));
                    return Ok(());
                }
            }
            let s = self.seeds.next_seed();
            self.env.reset(s);
        }
        Err(CoreError::Config("no feasible craft step after 100 resets".into()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub frames: u64,
    pub tasks: u64,
    pub completed: u64,
    /// Completion share per operator over the last quarter of training.
    pub late_completion: BTreeMap<String, f64>,
}

/// Trains a fresh controller with PPO on the shaped step reward.
pub fn pretrain_low_level(config: &CraftConfig, control: &AgentConfig, pre: &PretrainConfig, seed: u64) -> Result<(ActorCritic<f32>, PretrainReport)> {
    control.validate()?;
    pre.validate()?;
    let probe = CraftEnv::new(config.clone(), 0)?;
    let task = GroundedTask::new(probe.domain(), &probe.objects(), &probe.symbolic_state())?;
    let steps = task.steps().to_vec();
    let mut init = ChaCha8Rng::seed_from_u64(seed ^ streams::INIT);
    let policy: ActorCritic<f64> = ActorCritic::new(CONTROLLER_FEATURES, &pre.hidden, controller_heads(), 0.0, &mut init)?;
    let mut policy: ActorCritic<f32> = policy.cast();
    let mut adam = adam_for(&policy, &pre.ppo);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ streams::POLICY);
    let mut workers = (0..pre.actors).map(|i| Worker::new(config, &steps, seed, i)).collect::<Result<Vec<_>>>()?;
    let mut report = PretrainReport::default();
    let mut late: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    while report.frames < pre.frames {
        let mut batch = BatchBuilder::default();
        for w in &mut workers {
            let mut rollout = Rollout::default();
            for _ in 0..pre.rollout {
                if w.task.is_none() {
                    w.next_task(&mut rng)?;
                }
                let t = w.task.as_mut().expect("task assigned");
                let obs = w.env.controller_features(&t.step);
                let ps = policy.step(&obs, &mut rng)?;
                let result = w.env.step(CraftAction::CONTROL[ps.action[0] as usize])?;
                report.frames += 1;
                let (r, complete) = t.reward(&w.env, result.reward, control.r_complete, pre.shaping)?;
                let over = complete || t.elapsed() >= control.tau_max || result.done;
                rollout.push(obs, ps.action, ps.log_prob, ps.value, r, pre.ppo.gamma, over);
                if over {
                    report.tasks += 1;
                    report.completed += complete as u64;
                    if report.frames * 4 >= pre.frames * 3 {
                        let e = late.entry(t.step.operator.clone()).or_default();
                        e.0 += 1;
                        e.1 += complete as u64;
                    }
                    w.task = None;
                    if result.done {
                        let s = w.seeds.next_seed();
                        w.env.reset(s);
                    }
                }
            }
            let last = match &w.task {
                Some(t) => policy.value(&w.env.controller_features(&t.step))?,
                None => 0.0,
            };
            batch.add(rollout, last, pre.ppo.lambda)?;
        }
        ppo_update(&mut policy, &mut adam, &batch.build()?, &pre.ppo, &mut rng)?;
    }
    report.late_completion = late.into_iter().map(|(k, (n, c))| (k, c as f64 / n.max(1) as f64)).collect();
    Ok((policy, report))
}

/// Share of `trials` sampled instances of `operator` the policy completes
/// within `tau_max` frames, on fresh worlds drawn from `config`.
pub fn completion_rate(policy: &ActorCritic<f32>, config: &CraftConfig, operator: &str, tau_max: usize, trials: usize, seed: u64) -> Result<f64> {
    let probe = CraftEnv::new(config.clone(), 0)?;
    let task = GroundedTask::new(probe.domain(), &probe.objects(), &probe.symbolic_state())?;
    let steps: Vec<GroundStep> = task.steps().iter().filter(|s| s.operator == operator).cloned().collect();
    let mut seeds = SeedStream::new(seed, streams::EVAL);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ streams::LOW_LEVEL);
    let mut done = 0;
    let mut attempted = 0;
    let mut resets = 0;
    while attempted < trials {
        let mut env = CraftEnv::new(config.clone(), seeds.next_seed())?;
        let feasible = feasible_steps(&steps, &env.symbolic_state())?;
        let Some(step) = feasible.choose(&mut rng).map(|s| (*s).clone()) else {
            resets += 1;
            if resets > 100 * trials {
                return Err(CoreError::Config(format!("no feasible `{operator}` instance found")));
            }
            continue;
        };
        attempted += 1;
        let before = env.dynamic_state();
        for _ in 0..tau_max {
            let a = policy.step(&env.controller_features(&step), &mut rng)?;
            env.step(CraftAction::CONTROL[a.action[0] as usize])?;
            if check_step_complete(&env.dynamic_state(), &step, &before)? {
                done += 1;
                break;
            }
            if env.is_done() {
                break;
            }
        }
    }
    Ok(done as f64 / trials as f64)
}
