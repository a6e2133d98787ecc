//! Taxi agents: the planner-backed PPO meta-controller, the scripted and
//! random-goal baselines, and flat PPO over atomic actions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sage_envs::taxi::{TaxiAction, TaxiConfig, TaxiEnv};
use sage_envs::SymbolicEnv;
use sage_pddl::Goal;
use sage_rl::{adam_for, ppo_update, ActorCritic, Adam, HeadSpec, Heads, PolicyDump, PpoConfig};

use crate::agent::{streams, Agent, EpisodeRecord, EpisodeStats, SeedStream, TrainConfig};
use crate::checkpoint::Checkpoint;
use crate::control::{make_transitions, AgentConfig, GoalPlanner, GoalRunner, IdentityExecutor, MetaAction, NoHook};
use crate::error::{CoreError, Result};
use crate::goals::{CoordinateHead, TaxiGoal, TaxiGoalSpace};
use crate::rollout::{BatchBuilder, Rollout};

/// Goal rule of the scripted baseline: deliver the active passenger,
/// otherwise wait.
pub fn scripted_goal(env: &TaxiEnv) -> Option<TaxiGoal> {
    env.passenger().filter(|p| p.is_active()).map(|_| TaxiGoal {
        delivered: true,
        ..TaxiGoal::default()
    })
}

/// Goal with every include-flag a fair coin and a uniformly drawn cell.
pub fn random_goal_action<R: Rng + ?Sized>(rng: &mut R, space: TaxiGoalSpace) -> Vec<f64> {
    let mut flag = || rng.random_bool(0.5) as u8 as f64;
    let (empty, at, in_taxi, delivered) = (flag(), flag(), flag(), flag());
    let mut coordinate = || match space.coordinates() {
        CoordinateHead::Categorical => rng.random_range(0..space.size()) as f64,
        CoordinateHead::Gaussian => rng.random_range(-1.0..=1.0),
    };
    let (x, y) = (coordinate(), coordinate());
    vec![empty, at, x, y, in_taxi, delivered]
}

pub enum TaxiChoice {
    /// Meta action, decoded to a goal when expressible.
    Goal(Option<Goal>),
    /// Advance one frame with the noop.
    Wait,
}

/// Plays one episode to its end, choosing goals with `choose`.
pub fn play_taxi_episode(
    env: &mut TaxiEnv,
    planner: &mut GoalPlanner,
    control: &AgentConfig,
    mut choose: impl FnMut(&TaxiEnv) -> Result<TaxiChoice>,
) -> Result<EpisodeStats> {
    let mut stats = EpisodeStats::default();
    let mut executor = IdentityExecutor;
    while !env.is_done() {
        match choose(env)? {
            TaxiChoice::Goal(goal) => {
                let mut runner = GoalRunner::new(control, planner, &mut executor);
                runner.record_interim = false;
                let (segment, _) = runner.execute_goal(env, goal.as_ref(), &mut NoHook)?;
                stats.add_segment(&segment);
            }
            TaxiChoice::Wait => stats.ret += env.step(TaxiAction::Noop)?.reward,
        }
    }
    Ok(stats)
}

fn eval_episodes(
    config: &TaxiConfig,
    control: &AgentConfig,
    episodes: usize,
    seed: u64,
    frame: u64,
    mut choose: impl FnMut(&TaxiEnv) -> Result<TaxiChoice>,
) -> Result<Vec<EpisodeRecord>> {
    let mut seeds = SeedStream::new(seed, streams::EVAL);
    let mut planner = GoalPlanner::new(control.planner);
    let mut out = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let mut env = TaxiEnv::new(config.clone(), seeds.next_seed())?;
        let mut stats = play_taxi_episode(&mut env, &mut planner, control, &mut choose)?;
        out.push(stats.finish(frame, episode as u64));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Scripted,
    RandomGoal,
}

/// Non-learning goal baselines; "training" just plays episodes.
#[derive(Debug, Clone)]
pub struct GoalBaseline {
    kind: BaselineKind,
    preset: String,
    config: TaxiConfig,
    control: AgentConfig,
    seeds: SeedStream,
    rng: ChaCha8Rng,
    frames: u64,
    episodes: u64,
}

impl GoalBaseline {
    pub fn new(kind: BaselineKind, preset: &str, control: AgentConfig, seed: u64) -> Result<Self> {
        control.validate()?;
        Ok(Self {
            kind,
            preset: preset.to_string(),
            config: TaxiConfig::preset(preset)?,
            control,
            seeds: SeedStream::new(seed, 0),
            rng: ChaCha8Rng::seed_from_u64(seed ^ streams::POLICY),
            frames: 0,
            episodes: 0,
        })
    }

    fn chooser<'a, R: Rng>(kind: BaselineKind, rng: &'a mut R, space: TaxiGoalSpace) -> impl FnMut(&TaxiEnv) -> Result<TaxiChoice> + 'a {
        move |env: &TaxiEnv| {
            Ok(match kind {
                BaselineKind::Scripted => match scripted_goal(env) {
                    Some(g) => TaxiChoice::Goal(Some(g.to_goal())),
                    None => TaxiChoice::Wait,
                },
                BaselineKind::RandomGoal => {
                    let action = random_goal_action(rng, space);
                    TaxiChoice::Goal(space.decode(&action)?.map(|g| g.to_goal()))
                }
            })
        }
    }
}

impl Agent for GoalBaseline {
    fn frames(&self) -> u64 {
        self.frames
    }

    fn train_until(&mut self, frame_target: u64, episodes: &mut Vec<EpisodeRecord>) -> Result<()> {
        let space = TaxiGoalSpace::new(self.config.size)?;
        let mut planner = GoalPlanner::new(self.control.planner);
        while self.frames < frame_target {
            let mut env = TaxiEnv::new(self.config.clone(), self.seeds.next_seed())?;
            let choose = Self::chooser(self.kind, &mut self.rng, space);
            let mut stats = play_taxi_episode(&mut env, &mut planner, &self.control, choose)?;
            self.frames += env.frame() as u64;
            episodes.push(stats.finish(self.frames, self.episodes));
            self.episodes += 1;
        }
        Ok(())
    }

    fn evaluate(&self, episodes: usize, seed: u64) -> Result<Vec<EpisodeRecord>> {
        let space = TaxiGoalSpace::new(self.config.size)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ streams::POLICY);
        let choose = Self::chooser(self.kind, &mut rng, space);
        eval_episodes(&self.config, &self.control, episodes, seed, self.frames, choose)
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        let env = self.preset.clone();
        let control = self.control;
        Ok(match self.kind {
            BaselineKind::Scripted => Checkpoint::Scripted { env, control },
            BaselineKind::RandomGoal => Checkpoint::RandomGoal { env, control },
        })
    }
}

#[derive(Debug, Clone)]
struct TaxiActor {
    env: TaxiEnv,
    planner: GoalPlanner,
    seeds: SeedStream,
    stats: EpisodeStats,
}

impl TaxiActor {
    fn new(config: &TaxiConfig, control: &AgentConfig, seed: u64, index: usize) -> Result<Self> {
        let mut seeds = SeedStream::new(seed, index as u64);
        let env = TaxiEnv::new(config.clone(), seeds.next_seed())?;
        Ok(Self {
            env,
            planner: GoalPlanner::new(control.planner),
            seeds,
            stats: EpisodeStats::default(),
        })
    }

    fn reset(&mut self) {
        let s = self.seeds.next_seed();
        self.env.reset(s);
    }
}

/// The planner-backed agent on taxi: PPO over the hybrid goal space.
#[derive(Debug, Clone)]
pub struct SageTaxi {
    preset: String,
    config: TaxiConfig,
    control: AgentConfig,
    ppo: PpoConfig,
    rollout: usize,
    space: TaxiGoalSpace,
    policy: ActorCritic<f32>,
    adam: Adam<f32>,
    actors: Vec<TaxiActor>,
    rng: ChaCha8Rng,
    frames: u64,
    episodes: u64,
}

impl SageTaxi {
    pub fn new(preset: &str, control: AgentConfig, ppo: PpoConfig, train: &TrainConfig, seed: u64) -> Result<Self> {
        control.validate()?;
        train.validate()?;
        let config = TaxiConfig::preset(preset)?;
        let space = TaxiGoalSpace::new(config.size)?;
        let mut init = ChaCha8Rng::seed_from_u64(seed ^ streams::INIT);
        let probe = TaxiEnv::new(config.clone(), 0)?;
        let policy: ActorCritic<f64> = ActorCritic::new(probe.observation_len(), &train.hidden, space.heads(), train.init_log_std, &mut init)?;
        Self::with_policy(preset, control, ppo, train, policy.cast(), seed)
    }

    pub fn with_policy(preset: &str, control: AgentConfig, ppo: PpoConfig, train: &TrainConfig, policy: ActorCritic<f32>, seed: u64) -> Result<Self> {
        let config = TaxiConfig::preset(preset)?;
        let space = TaxiGoalSpace::new(config.size)?;
        let probe = TaxiEnv::new(config.clone(), 0)?;
        if policy.obs_dim() != probe.observation_len() || policy.heads != space.heads() {
            return Err(CoreError::Checkpoint(format!("policy does not fit {preset}")));
        }
        let actors = (0..train.actors).map(|i| TaxiActor::new(&config, &control, seed, i)).collect::<Result<_>>()?;
        Ok(Self {
            preset: preset.to_string(),
            adam: adam_for(&policy, &ppo),
            config,
            control,
            ppo,
            rollout: train.rollout,
            space,
            policy,
            actors,
            rng: ChaCha8Rng::seed_from_u64(seed ^ streams::POLICY),
            frames: 0,
            episodes: 0,
        })
    }

    pub fn policy(&self) -> &ActorCritic<f32> {
        &self.policy
    }

    fn update(&mut self, episodes: &mut Vec<EpisodeRecord>) -> Result<()> {
        let gamma = self.control.gamma_meta;
        let mut batch = BatchBuilder::default();
        let mut interim = Vec::new();
        let record_interim = self.control.uses_interim();
        for actor in &mut self.actors {
            let mut rollout = Rollout::default();
            for _ in 0..self.rollout {
                let obs = actor.env.observation();
                let step = self.policy.step(&obs, &mut self.rng)?;
                let goal = self.space.decode(&step.action)?.map(|g| g.to_goal());
                let mut executor = IdentityExecutor;
                let mut runner = GoalRunner::new(&self.control, &mut actor.planner, &mut executor);
                runner.record_interim = record_interim;
                let (segment, _) = runner.execute_goal(&mut actor.env, goal.as_ref(), &mut NoHook)?;
                self.frames += segment.frames() as u64;
                actor.stats.add_segment(&segment);
                let n = segment.frames() as i32;
                let u = segment.meta_return(gamma, self.control.r_invalid);
                if record_interim {
                    let all = make_transitions(&segment, MetaAction::Hybrid(step.action.clone()), gamma, self.control.r_invalid, Some(self.control.interim_interval));
                    interim.extend(all.into_iter().skip(1));
                }
                rollout.push(obs, step.action, step.log_prob, step.value, u, gamma.powi(n), segment.terminal);
                if segment.terminal {
                    episodes.push(actor.stats.finish(self.frames, self.episodes));
                    self.episodes += 1;
                    actor.reset();
                }
            }
            let last = self.policy.value(&actor.env.observation())?;
            batch.add(rollout, last, self.ppo.lambda)?;
        }
        // Off-policy interim samples get one-step advantages under the
        // current networks.
        for t in interim {
            let MetaAction::Hybrid(action) = t.goal else { continue };
            let row = self.policy.net.forward_one(&t.obs)?;
            let log_prob = self.policy.heads.log_prob(&row, &self.policy.log_std, &action)?;
            let value = row[self.policy.heads.width()] as f64;
            let next = if t.terminal { 0.0 } else { self.policy.value(&t.next_obs)? };
            let ret = t.ret + gamma.powi(t.duration as i32) * next;
            batch.add_sample(t.obs, action, log_prob, ret - value, ret);
        }
        let batch = batch.build()?;
        ppo_update(&mut self.policy, &mut self.adam, &batch, &self.ppo, &mut self.rng)?;
        Ok(())
    }
}

impl Agent for SageTaxi {
    fn frames(&self) -> u64 {
        self.frames
    }

    fn train_until(&mut self, frame_target: u64, episodes: &mut Vec<EpisodeRecord>) -> Result<()> {
        while self.frames < frame_target {
            self.update(episodes)?;
        }
        Ok(())
    }

    fn evaluate(&self, episodes: usize, seed: u64) -> Result<Vec<EpisodeRecord>> {
        let policy = &self.policy;
        let space = self.space;
        eval_episodes(&self.config, &self.control, episodes, seed, self.frames, |env| {
            let action = policy.greedy(&env.observation())?;
            Ok(TaxiChoice::Goal(space.decode(&action)?.map(|g| g.to_goal())))
        })
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint::SageTaxi {
            env: self.preset.clone(),
            control: self.control,
            policy: PolicyDump::from_policy(&self.policy),
        })
    }
}

#[derive(Debug, Clone)]
struct FlatActor {
    env: TaxiEnv,
    seeds: SeedStream,
    ret: f64,
}

/// PPO over the seven atomic taxi actions, no symbolic access.
#[derive(Debug, Clone)]
pub struct FlatPpo {
    preset: String,
    config: TaxiConfig,
    ppo: PpoConfig,
    rollout: usize,
    policy: ActorCritic<f32>,
    adam: Adam<f32>,
    actors: Vec<FlatActor>,
    rng: ChaCha8Rng,
    frames: u64,
    episodes: u64,
}

impl FlatPpo {
    pub fn heads() -> Heads {
        Heads::new(vec![HeadSpec::Categorical(TaxiAction::ALL.len())]).expect("fixed head layout")
    }

    pub fn new(preset: &str, ppo: PpoConfig, train: &TrainConfig, seed: u64) -> Result<Self> {
        train.validate()?;
        let config = TaxiConfig::preset(preset)?;
        let probe = TaxiEnv::new(config.clone(), 0)?;
        let mut init = ChaCha8Rng::seed_from_u64(seed ^ streams::INIT);
        let policy: ActorCritic<f64> = ActorCritic::new(probe.observation_len(), &train.hidden, Self::heads(), 0.0, &mut init)?;
        Self::with_policy(preset, ppo, train, policy.cast(), seed)
    }

    pub fn with_policy(preset: &str, ppo: PpoConfig, train: &TrainConfig, policy: ActorCritic<f32>, seed: u64) -> Result<Self> {
        let config = TaxiConfig::preset(preset)?;
        let probe = TaxiEnv::new(config.clone(), 0)?;
        if policy.obs_dim() != probe.observation_len() || policy.heads != Self::heads() {
            return Err(CoreError::Checkpoint(format!("policy does not fit {preset}")));
        }
        let actors = (0..train.actors)
            .map(|i| {
                let mut seeds = SeedStream::new(seed, i as u64);
                let env = TaxiEnv::new(config.clone(), seeds.next_seed())?;
                Ok(FlatActor { env, seeds, ret: 0.0 })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            preset: preset.to_string(),
            adam: adam_for(&policy, &ppo),
            config,
            ppo,
            rollout: train.rollout,
            policy,
            actors,
            rng: ChaCha8Rng::seed_from_u64(seed ^ streams::POLICY),
            frames: 0,
            episodes: 0,
        })
    }

    fn update(&mut self, episodes: &mut Vec<EpisodeRecord>) -> Result<()> {
        let mut batch = BatchBuilder::default();
        for actor in &mut self.actors {
            let mut rollout = Rollout::default();
            for _ in 0..self.rollout {
                let obs = actor.env.observation();
                let step = self.policy.step(&obs, &mut self.rng)?;
                let action = TaxiAction::ALL[step.action[0] as usize];
                let result = actor.env.step(action)?;
                self.frames += 1;
                actor.ret += result.reward;
                rollout.push(obs, step.action, step.log_prob, step.value, result.reward, self.ppo.gamma, result.done);
                if result.done {
                    episodes.push(EpisodeRecord {
                        frame: self.frames,
                        episode: self.episodes,
                        ret: std::mem::take(&mut actor.ret),
                        plans_issued: 0,
                        invalid_goals: 0,
                        timeouts: 0,
                    });
                    self.episodes += 1;
                    let s = actor.seeds.next_seed();
                    actor.env.reset(s);
                }
            }
            let last = self.policy.value(&actor.env.observation())?;
            batch.add(rollout, last, self.ppo.lambda)?;
        }
        let batch = batch.build()?;
        ppo_update(&mut self.policy, &mut self.adam, &batch, &self.ppo, &mut self.rng)?;
        Ok(())
    }
}

impl Agent for FlatPpo {
    fn frames(&self) -> u64 {
        self.frames
    }

    fn train_until(&mut self, frame_target: u64, episodes: &mut Vec<EpisodeRecord>) -> Result<()> {
        while self.frames < frame_target {
            self.update(episodes)?;
        }
        Ok(())
    }

    fn evaluate(&self, episodes: usize, seed: u64) -> Result<Vec<EpisodeRecord>> {
        let mut seeds = SeedStream::new(seed, streams::EVAL);
        let mut out = Vec::with_capacity(episodes);
        for episode in 0..episodes {
            let mut env = TaxiEnv::new(self.config.clone(), seeds.next_seed())?;
            let mut ret = 0.0;
            while !env.is_done() {
                let a = self.policy.greedy(&env.observation())?;
                ret += env.step(TaxiAction::ALL[a[0] as usize])?.reward;
            }
            out.push(EpisodeRecord {
                frame: self.frames,
                episode: episode as u64,
                ret,
                plans_issued: 0,
                invalid_goals: 0,
                timeouts: 0,
            });
        }
        Ok(out)
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint::FlatPpo {
            env: self.preset.clone(),
            policy: PolicyDump::from_policy(&self.policy),
        })
    }
}
