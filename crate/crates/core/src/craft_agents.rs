//! Crafting-world agents with a DQN meta-controller: the planner-backed
//! agent choosing goal templates, and the ablation choosing ground steps
//! directly. Both drive the same frozen pre-trained controller.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sage_envs::craft::{CraftConfig, CraftEnv, CONTROLLER_FEATURES};
use sage_envs::SymbolicEnv;
use sage_pddl::{GroundStep, GroundedTask};
use sage_rl::{ActorCritic, DqnConfig, DqnLearner, DqnTransition, NetworkDump, PolicyDump, ReplayBuffer};

use crate::agent::{streams, Agent, EpisodeRecord, EpisodeStats, SeedStream, TrainConfig};
use crate::checkpoint::Checkpoint;
use crate::control::{make_transitions, AgentConfig, GoalPlanner, GoalRunner, LearnedExecutor, MetaAction, Outcome, Segment};
use crate::error::{CoreError, Result};
use crate::goals::CraftGoalTable;
use crate::pretrain::controller_heads;

/// What the meta-controller's discrete actions denote.
#[derive(Debug, Clone, PartialEq)]
pub enum CraftMeta {
    /// Goal templates handed to the planner.
    Goals(CraftGoalTable),
    /// Ground steps executed directly, without a planner.
    Steps(Vec<GroundStep>),
}

impl CraftMeta {
    pub fn len(&self) -> usize {
        match self {
            CraftMeta::Goals(t) => t.len(),
            CraftMeta::Steps(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Step vocabulary of the ablation: every statically possible ground step.
pub fn step_table(config: &CraftConfig) -> Result<Vec<GroundStep>> {
    let env = CraftEnv::new(config.clone(), 0)?;
    Ok(GroundedTask::new(env.domain(), &env.objects(), &env.symbolic_state())?.steps().to_vec())
}

fn check_low_level(policy: &ActorCritic<f32>) -> Result<()> {
    if policy.obs_dim() != CONTROLLER_FEATURES || policy.heads != controller_heads() {
        return Err(CoreError::Checkpoint("low-level policy does not match the craft controller layout".into()));
    }
    Ok(())
}

/// One decision of the meta-controller, run to its segment end.
#[allow(clippy::too_many_arguments)]
fn decide(
    meta: &CraftMeta,
    control: &AgentConfig,
    env: &mut CraftEnv,
    planner: &mut GoalPlanner,
    executor: &mut LearnedExecutor,
    action: usize,
    record_interim: bool,
    hook: &mut dyn crate::control::FrameHook,
) -> Result<Segment> {
    let mut runner = GoalRunner::new(control, planner, executor);
    runner.record_interim = record_interim;
    match meta {
        CraftMeta::Goals(table) => {
            let template = table.get(action).ok_or_else(|| CoreError::GoalTable(format!("no template {action}")))?;
            let goal = template.to_goal(env);
            Ok(runner.execute_goal(env, Some(&goal), hook)?.0)
        }
        CraftMeta::Steps(steps) => {
            let step = steps.get(action).ok_or_else(|| CoreError::GoalTable(format!("no step {action}")))?;
            runner.execute_step(env, step, hook)
        }
    }
}

/// Goals the planner rejected since the world last changed. The next
/// decision picks among the others, so a greedy meta policy cannot loop on
/// one rejected goal while the rest of the world stands still.
#[derive(Debug, Clone, Default)]
struct Rejected(Vec<usize>);

impl Rejected {
    fn note(&mut self, action: usize, segment: &Segment, actions: usize) {
        if segment.outcome == Outcome::InvalidGoal {
            self.0.push(action);
            if self.0.len() >= actions {
                self.0.clear();
            }
        } else {
            self.0.clear();
        }
    }

    /// ε-greedy over the actions not rejected yet; ties go to the lowest index.
    fn choose<R: Rng + ?Sized>(&self, learner: &DqnLearner<f32>, obs: &[f32], epsilon: f64, rng: &mut R) -> Result<usize> {
        let open: Vec<usize> = (0..learner.actions()).filter(|a| !self.0.contains(a)).collect();
        if rng.random::<f64>() < epsilon {
            return Ok(open[rng.random_range(0..open.len())]);
        }
        let q = learner.q_values(obs)?;
        let mut best = open[0];
        for &a in &open[1..] {
            if q[a] > q[best] {
                best = a;
            }
        }
        Ok(best)
    }
}

#[derive(Debug, Clone)]
pub struct CraftDqnAgent {
    preset: String,
    config: CraftConfig,
    control: AgentConfig,
    train: TrainConfig,
    meta: CraftMeta,
    learner: DqnLearner<f32>,
    replay: ReplayBuffer<DqnTransition>,
    low_level: ActorCritic<f32>,
    env: CraftEnv,
    planner: GoalPlanner,
    executor: LearnedExecutor,
    seeds: SeedStream,
    stats: EpisodeStats,
    rejected: Rejected,
    rng: ChaCha8Rng,
    frames: u64,
    episodes: u64,
    updates: u64,
}

impl CraftDqnAgent {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        preset: &str,
        meta: CraftMeta,
        control: AgentConfig,
        dqn: DqnConfig,
        train: TrainConfig,
        low_level: ActorCritic<f32>,
        seed: u64,
    ) -> Result<Self> {
        let config = CraftConfig::preset(preset)?;
        let probe = CraftEnv::new(config.clone(), 0)?;
        let mut init = ChaCha8Rng::seed_from_u64(seed ^ streams::INIT);
        let learner: DqnLearner<f64> = DqnLearner::new(probe.observation_len(), &train.hidden, meta.len(), dqn, &mut init)?;
        let learner = DqnLearner::from_network(learner.online.cast(), dqn);
        Self::with_learner(preset, meta, control, train, learner, low_level, seed)
    }

    pub fn with_learner(
        preset: &str,
        meta: CraftMeta,
        control: AgentConfig,
        train: TrainConfig,
        learner: DqnLearner<f32>,
        low_level: ActorCritic<f32>,
        seed: u64,
    ) -> Result<Self> {
        control.validate()?;
        train.validate()?;
        check_low_level(&low_level)?;
        if meta.is_empty() {
            return Err(CoreError::GoalTable("empty meta action table".into()));
        }
        let config = CraftConfig::preset(preset)?;
        let mut seeds = SeedStream::new(seed, 0);
        let env = CraftEnv::new(config.clone(), seeds.next_seed())?;
        if learner.online.input_dim() != env.observation_len() || learner.actions() != meta.len() {
            return Err(CoreError::Checkpoint(format!("Q-network does not fit {preset} with {} actions", meta.len())));
        }
        let capacity = learner.config.replay_capacity;
        Ok(Self {
            preset: preset.to_string(),
            config,
            planner: GoalPlanner::new(control.planner),
            executor: LearnedExecutor::new(low_level.clone(), seed ^ streams::LOW_LEVEL, false),
            control,
            train,
            meta,
            learner,
            replay: ReplayBuffer::new(capacity),
            low_level,
            env,
            seeds,
            stats: EpisodeStats::default(),
            rejected: Rejected::default(),
            rng: ChaCha8Rng::seed_from_u64(seed ^ streams::POLICY),
            frames: 0,
            episodes: 0,
            updates: 0,
        })
    }

    pub fn meta(&self) -> &CraftMeta {
        &self.meta
    }

    pub fn learner(&self) -> &DqnLearner<f32> {
        &self.learner
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Evaluation with meta-level exploration `epsilon`; `0` is greedy.
    pub fn evaluate_with_epsilon(&self, episodes: usize, seed: u64, epsilon: f64) -> Result<Vec<EpisodeRecord>> {
        let mut seeds = SeedStream::new(seed, streams::EVAL);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ streams::POLICY);
        let mut planner = GoalPlanner::new(self.control.planner);
        let mut executor = LearnedExecutor::new(self.low_level.clone(), seed ^ streams::LOW_LEVEL, false);
        let mut out = Vec::with_capacity(episodes);
        for episode in 0..episodes {
            let mut env = CraftEnv::new(self.config.clone(), seeds.next_seed())?;
            let mut stats = EpisodeStats::default();
            let mut rejected = Rejected::default();
            while !env.is_done() {
                let a = rejected.choose(&self.learner, &env.observation(), epsilon, &mut rng)?;
                let segment = decide(&self.meta, &self.control, &mut env, &mut planner, &mut executor, a, false, &mut crate::control::NoHook)?;
                rejected.note(a, &segment, self.meta.len());
                stats.add_segment(&segment);
            }
            out.push(stats.finish(self.frames, episode as u64));
        }
        Ok(out)
    }
}

impl Agent for CraftDqnAgent {
    fn frames(&self) -> u64 {
        self.frames
    }

    fn train_until(&mut self, frame_target: u64, episodes: &mut Vec<EpisodeRecord>) -> Result<()> {
        let interim = self.control.uses_interim().then_some(self.control.interim_interval);
        let gamma = self.control.gamma_meta;
        while self.frames < frame_target {
            let obs = self.env.observation();
            let epsilon = self.learner.config.epsilon(self.frames);
            let action = self.rejected.choose(&self.learner, &obs, epsilon, &mut self.rng)?;
            let Self {
                learner,
                replay,
                rng,
                frames,
                updates,
                train,
                ..
            } = self;
            let interval = train.train_interval as u64;
            let mut hook = |_reward: f64| -> Result<()> {
                *frames += 1;
                if *frames % interval == 0 && replay.len() >= learner.config.learning_starts.max(learner.config.batch_size) {
                    let batch = replay.sample(learner.config.batch_size, rng);
                    learner.update(&batch)?;
                    *updates += 1;
                }
                Ok(())
            };
            let segment = decide(&self.meta, &self.control, &mut self.env, &mut self.planner, &mut self.executor, action, interim.is_some(), &mut hook)?;
            self.stats.add_segment(&segment);
            self.rejected.note(action, &segment, self.meta.len());
            for t in make_transitions(&segment, MetaAction::Index(action), gamma, self.control.r_invalid, interim) {
                self.replay.push(DqnTransition {
                    obs: t.obs,
                    action,
                    reward: t.ret,
                    next_obs: t.next_obs,
                    duration: t.duration,
                    terminal: t.terminal,
                });
            }
            if segment.terminal {
                episodes.push(self.stats.finish(self.frames, self.episodes));
                self.episodes += 1;
                let s = self.seeds.next_seed();
                self.env.reset(s);
                self.rejected = Rejected::default();
            }
        }
        Ok(())
    }

    fn evaluate(&self, episodes: usize, seed: u64) -> Result<Vec<EpisodeRecord>> {
        self.evaluate_with_epsilon(episodes, seed, 0.0)
    }

    fn checkpoint(&self) -> Result<Checkpoint> {
        let env = self.preset.clone();
        let q = NetworkDump::from_network(&self.learner.online);
        let low_level = PolicyDump::from_policy(&self.low_level);
        Ok(match &self.meta {
            CraftMeta::Goals(table) => Checkpoint::SageCraft {
                env,
                control: self.control,
                train: self.train.clone(),
                table: table.clone(),
                q,
                low_level,
            },
            CraftMeta::Steps(_) => Checkpoint::Hdqn {
                env,
                control: self.control,
                train: self.train.clone(),
                q,
                low_level,
            },
        })
    }
}
