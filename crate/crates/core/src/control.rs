//! Goal execution: planning a meta-controller goal, running its steps
//! through an executor with per-step timeouts, and turning the recorded
//! segment into meta-controller transitions.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sage_envs::craft::{CraftAction, CraftEnv};
use sage_envs::taxi::{TaxiAction, TaxiEnv};
use sage_envs::SymbolicEnv;
use sage_pddl::{
    check_goal, Goal, GoalCheck, GoalIssue, GroundStep, GroundedTask, NumericOp, PlanError, PlanLimits, PlanOutcome,
    SearchMode, SymbolicState,
};
use sage_rl::ActorCritic;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetaAlgorithm {
    Ppo,
    Dqn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerMode {
    Optimal,
    Greedy,
}

impl From<PlannerMode> for SearchMode {
    fn from(m: PlannerMode) -> Self {
        match m {
            PlannerMode::Optimal => SearchMode::Optimal,
            PlannerMode::Greedy => SearchMode::Greedy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub mode: PlannerMode,
    pub max_expanded_nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    /// Atomic actions allowed per symbolic step.
    pub tau_max: usize,
    pub r_complete: f64,
    pub r_invalid: f64,
    pub interim_interval: usize,
    pub meta: MetaAlgorithm,
    pub gamma_meta: f64,
    /// Also feed interim transitions to an on-policy meta-controller.
    pub interim_with_ppo: bool,
    /// Route goals that already hold to the invalid-goal penalty instead of
    /// a one-noop completed plan.
    pub reject_satisfied: bool,
    pub planner: PlannerConfig,
}

impl AgentConfig {
    pub fn taxi() -> Self {
        Self {
            tau_max: 100,
            r_complete: 1.0,
            r_invalid: 1.0,
            interim_interval: 2,
            meta: MetaAlgorithm::Ppo,
            gamma_meta: 0.99,
            interim_with_ppo: false,
            reject_satisfied: false,
            planner: PlannerConfig {
                mode: PlannerMode::Optimal,
                max_expanded_nodes: 200_000,
            },
        }
    }

    pub fn craft() -> Self {
        Self {
            meta: MetaAlgorithm::Dqn,
            gamma_meta: 0.95,
            reject_satisfied: true,
            planner: PlannerConfig {
                mode: PlannerMode::Greedy,
                max_expanded_nodes: 20_000,
            },
            ..Self::taxi()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_max < 1 {
            return Err(CoreError::Config("tau_max must be at least 1".into()));
        }
        if !(self.r_invalid >= 0.0) {
            return Err(CoreError::Config("r_invalid must be non-negative".into()));
        }
        if !self.r_complete.is_finite() {
            return Err(CoreError::Config("r_complete must be finite".into()));
        }
        if self.interim_interval < 1 {
            return Err(CoreError::Config("interim_interval must be at least 1".into()));
        }
        if !(self.gamma_meta > 0.0 && self.gamma_meta <= 1.0) {
            return Err(CoreError::Config("gamma_meta must lie in (0, 1]".into()));
        }
        if self.planner.max_expanded_nodes == 0 {
            return Err(CoreError::Config("planner.max_expanded_nodes must be positive".into()));
        }
        Ok(())
    }

    /// Whether interim transitions go to the meta learner.
    pub fn uses_interim(&self) -> bool {
        match self.meta {
            MetaAlgorithm::Dqn => true,
            MetaAlgorithm::Ppo => self.interim_with_ppo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InvalidReason {
    /// The meta action does not denote a goal (out-of-range argument).
    Inexpressible,
    Goal(GoalIssue),
    Unsolvable,
    LimitReached,
    /// The goal holds already and `reject_satisfied` is set.
    AlreadySatisfied,
}

impl std::fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InvalidReason::Inexpressible => f.write_str("inexpressible"),
            InvalidReason::Goal(issue) => write!(f, "{issue}"),
            InvalidReason::Unsolvable => f.write_str("unsolvable"),
            InvalidReason::LimitReached => f.write_str("search limit reached"),
            InvalidReason::AlreadySatisfied => f.write_str("already satisfied"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanDecision {
    Plan(Vec<GroundStep>),
    Invalid(InvalidReason),
}

/// Planner front end that keeps the grounded task while the instance's
/// objects and static facts stay the same.
#[derive(Debug, Clone)]
pub struct GoalPlanner {
    config: PlannerConfig,
    task: Option<GroundedTask>,
    groundings: usize,
    /// Decisions by (dynamic state, goal) for the current task. Searches
    /// are deterministic, so a hit returns exactly what a search would.
    memo: HashMap<(SymbolicState, Goal), PlanDecision>,
}

const MEMO_CAPACITY: usize = 2048;

impl GoalPlanner {
    pub fn new(config: PlannerConfig) -> Self {
        Self {
            config,
            task: None,
            groundings: 0,
            memo: HashMap::new(),
        }
    }

    /// Number of times the task had to be (re)grounded.
    pub fn groundings(&self) -> usize {
        self.groundings
    }

    pub fn plan<E: SymbolicEnv>(&mut self, env: &E, goal: Option<&Goal>) -> Result<PlanDecision> {
        let Some(goal) = goal else {
            return Ok(PlanDecision::Invalid(InvalidReason::Inexpressible));
        };
        let objects = env.objects();
        if let GoalCheck::Invalid(issue) = check_goal(env.domain(), &objects, goal) {
            return Ok(PlanDecision::Invalid(InvalidReason::Goal(issue)));
        }
        let init = env.symbolic_state();
        let reusable = self
            .task
            .as_ref()
            .is_some_and(|t| t.objects() == objects.as_slice() && t.matches_statics(&init));
        if !reusable {
            self.task = Some(GroundedTask::new(env.domain(), &objects, &init)?);
            self.groundings += 1;
            self.memo.clear();
        }
        let key = (env.dynamic_state(), goal.clone());
        if let Some(hit) = self.memo.get(&key) {
            return Ok(hit.clone());
        }
        let task = self.task.as_ref().expect("grounded above");
        let limits = PlanLimits {
            max_expanded_nodes: self.config.max_expanded_nodes,
            wall_clock_ms: None,
        };
        let decision = match task.solve(&init, goal, limits, self.config.mode.into()) {
            Ok(result) => match result.outcome {
                PlanOutcome::Found { steps, .. } => PlanDecision::Plan(steps),
                PlanOutcome::Unsolvable => PlanDecision::Invalid(InvalidReason::Unsolvable),
                PlanOutcome::LimitReached => PlanDecision::Invalid(InvalidReason::LimitReached),
            },
            Err(PlanError::InvalidGoal(issue)) => PlanDecision::Invalid(InvalidReason::Goal(issue)),
            Err(e) => return Err(e.into()),
        };
        if self.memo.len() >= MEMO_CAPACITY {
            self.memo.clear();
        }
        self.memo.insert(key, decision.clone());
        Ok(decision)
    }
}

/// Low-level controller: picks the atomic action for the current step.
pub trait Executor<E: SymbolicEnv> {
    fn act(&mut self, env: &E, step: &GroundStep) -> Result<E::Action>;
}

/// Taxi steps are atomic actions already.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityExecutor;

impl Executor<TaxiEnv> for IdentityExecutor {
    fn act(&mut self, env: &TaxiEnv, step: &GroundStep) -> Result<TaxiAction> {
        Ok(env.action_for_step(step).unwrap_or(TaxiAction::Noop))
    }
}

/// Goal-conditioned policy over the craft control actions.
#[derive(Debug, Clone)]
pub struct LearnedExecutor {
    policy: ActorCritic<f32>,
    rng: ChaCha8Rng,
    greedy: bool,
}

impl LearnedExecutor {
    pub fn new(policy: ActorCritic<f32>, seed: u64, greedy: bool) -> Self {
        Self {
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            greedy,
        }
    }

    pub fn policy(&self) -> &ActorCritic<f32> {
        &self.policy
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }
}

impl Executor<CraftEnv> for LearnedExecutor {
    fn act(&mut self, env: &CraftEnv, step: &GroundStep) -> Result<CraftAction> {
        let features = env.controller_features(step);
        let action = if self.greedy {
            self.policy.greedy(&features)?
        } else {
            self.policy.step(&features, &mut self.rng)?.action
        };
        let index = action[0] as usize;
        CraftAction::CONTROL
            .get(index)
            .copied()
            .ok_or_else(|| CoreError::Config(format!("controller action {index} out of range")))
    }
}

/// Postcondition test of `step` against the state before it started.
pub fn check_step_complete(state: &SymbolicState, step: &GroundStep, before: &SymbolicState) -> Result<bool> {
    if step.add_effects().any(|a| !state.contains(&a)) || step.delete_effects().any(|a| state.contains(&a)) {
        return Ok(false);
    }
    for (op, term, value) in step.numeric_effects(before)? {
        let now = state.fluent(&term).unwrap_or_default();
        let was = before.fluent(&term).unwrap_or_default();
        let ok = match op {
            NumericOp::Assign => now == value,
            NumericOp::Increase => now >= was + value,
            NumericOp::Decrease => now <= was - value,
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepOutcome {
    Completed,
    Timeout,
    /// The episode ended before the step finished.
    EpisodeEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Completed,
    StepTimeout,
    InvalidGoal,
    EpisodeEnd,
}

/// Frames of one goal (or one directly chosen step) as seen by the meta level.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start_obs: Vec<f32>,
    pub end_obs: Vec<f32>,
    /// Environment reward of every frame.
    pub rewards: Vec<f64>,
    /// Observations after `i` frames for `i` a positive multiple of the
    /// interim interval below the segment length.
    pub interim_obs: Vec<(usize, Vec<f32>)>,
    pub outcome: Outcome,
    pub plan_len: usize,
    pub steps_completed: usize,
    pub terminal: bool,
}

impl Segment {
    pub fn frames(&self) -> usize {
        self.rewards.len()
    }

    /// Meta return: `−r_invalid` for an invalid goal, otherwise the
    /// discounted environment reward over the segment.
    pub fn meta_return(&self, gamma: f64, r_invalid: f64) -> f64 {
        match self.outcome {
            Outcome::InvalidGoal => -r_invalid,
            _ => discounted_sum(&self.rewards, gamma),
        }
    }
}

pub fn discounted_sum(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// `(i, U_{i:n})` for every `i ∈ {k, 2k, …}` with `i < n`.
pub fn interim_returns(rewards: &[f64], gamma: f64, interval: usize) -> Vec<(usize, f64)> {
    let interval = interval.max(1);
    (1..)
        .map(|m| m * interval)
        .take_while(|&i| i < rewards.len())
        .map(|i| (i, discounted_sum(&rewards[i..], gamma)))
        .collect()
}

/// Bookkeeping shared by the frame loop: called after every atomic step
/// with the reward just received.
pub trait FrameHook {
    fn on_frame(&mut self, reward: f64) -> Result<()>;
}

impl<F: FnMut(f64) -> Result<()>> FrameHook for F {
    fn on_frame(&mut self, reward: f64) -> Result<()> {
        self(reward)
    }
}

pub struct NoHook;

impl FrameHook for NoHook {
    fn on_frame(&mut self, _reward: f64) -> Result<()> {
        Ok(())
    }
}

struct Recorder {
    rewards: Vec<f64>,
    interim_obs: Vec<(usize, Vec<f32>)>,
    interval: Option<usize>,
}

impl Recorder {
    fn new(interval: Option<usize>) -> Self {
        Self {
            rewards: Vec::new(),
            interim_obs: Vec::new(),
            interval,
        }
    }

    fn step<E: SymbolicEnv>(&mut self, env: &mut E, action: E::Action, hook: &mut dyn FrameHook) -> Result<()> {
        let result = env.step(action)?;
        self.rewards.push(result.reward);
        hook.on_frame(result.reward)?;
        if let Some(k) = self.interval {
            let i = self.rewards.len();
            if i.is_multiple_of(k) && !env.is_done() {
                self.interim_obs.push((i, env.observation()));
            }
        }
        Ok(())
    }

    fn finish<E: SymbolicEnv>(mut self, env: &E, start_obs: Vec<f32>, outcome: Outcome, plan_len: usize, done: usize) -> Segment {
        let n = self.rewards.len();
        self.interim_obs.retain(|(i, _)| *i < n);
        Segment {
            start_obs,
            end_obs: env.observation(),
            rewards: self.rewards,
            interim_obs: self.interim_obs,
            outcome,
            plan_len,
            steps_completed: done,
            terminal: env.is_done(),
        }
    }
}

/// Runs one symbolic step until its postcondition holds, `tau_max`
/// actions pass, or the episode ends. At least one action is taken.
fn run_step<E: SymbolicEnv, X: Executor<E>>(
    env: &mut E,
    executor: &mut X,
    step: &GroundStep,
    tau_max: usize,
    rec: &mut Recorder,
    hook: &mut dyn FrameHook,
) -> Result<StepOutcome> {
    let before = env.dynamic_state();
    for _ in 0..tau_max {
        let action = executor.act(env, step)?;
        rec.step(env, action, hook)?;
        if check_step_complete(&env.dynamic_state(), step, &before)? {
            return Ok(StepOutcome::Completed);
        }
        if env.is_done() {
            return Ok(StepOutcome::EpisodeEnd);
        }
    }
    Ok(StepOutcome::Timeout)
}

/// Frame-level execution of goals and single steps.
pub struct GoalRunner<'a, E: SymbolicEnv, X: Executor<E>> {
    pub config: &'a AgentConfig,
    pub planner: &'a mut GoalPlanner,
    pub executor: &'a mut X,
    pub record_interim: bool,
    _env: std::marker::PhantomData<fn(&E)>,
}

impl<'a, E: SymbolicEnv, X: Executor<E>> GoalRunner<'a, E, X> {
    pub fn new(config: &'a AgentConfig, planner: &'a mut GoalPlanner, executor: &'a mut X) -> Self {
        Self {
            config,
            planner,
            executor,
            record_interim: config.uses_interim(),
            _env: std::marker::PhantomData,
        }
    }

    fn recorder(&self) -> Recorder {
        Recorder::new(self.record_interim.then_some(self.config.interim_interval))
    }

    /// Plans `goal` and executes the plan step by step. An invalid goal
    /// costs one noop; an empty plan (goal already true) also executes a
    /// single noop and counts as completed unless `reject_satisfied` is set.
    pub fn execute_goal(&mut self, env: &mut E, goal: Option<&Goal>, hook: &mut dyn FrameHook) -> Result<(Segment, PlanDecision)> {
        let start_obs = env.observation();
        let mut decision = self.planner.plan(env, goal)?;
        if self.config.reject_satisfied && matches!(&decision, PlanDecision::Plan(steps) if steps.is_empty()) {
            decision = PlanDecision::Invalid(InvalidReason::AlreadySatisfied);
        }
        let mut rec = self.recorder();
        let segment = match &decision {
            PlanDecision::Invalid(_) => {
                let noop = env.noop();
                rec.step(env, noop, hook)?;
                rec.finish(env, start_obs, Outcome::InvalidGoal, 0, 0)
            }
            PlanDecision::Plan(steps) if steps.is_empty() => {
                let noop = env.noop();
                rec.step(env, noop, hook)?;
                rec.finish(env, start_obs, Outcome::Completed, 0, 0)
            }
            PlanDecision::Plan(steps) => {
                let mut done = 0;
                let mut outcome = Outcome::Completed;
                for step in steps {
                    match run_step(env, self.executor, step, self.config.tau_max, &mut rec, hook)? {
                        StepOutcome::Completed => done += 1,
                        StepOutcome::Timeout => {
                            outcome = Outcome::StepTimeout;
                            break;
                        }
                        StepOutcome::EpisodeEnd => {
                            outcome = Outcome::EpisodeEnd;
                            break;
                        }
                    }
                    if env.is_done() && done < steps.len() {
                        outcome = Outcome::EpisodeEnd;
                        break;
                    }
                }
                rec.finish(env, start_obs, outcome, steps.len(), done)
            }
        };
        Ok((segment, decision))
    }

    /// Executes one directly chosen step, without planning.
    pub fn execute_step(&mut self, env: &mut E, step: &GroundStep, hook: &mut dyn FrameHook) -> Result<Segment> {
        let start_obs = env.observation();
        let mut rec = self.recorder();
        let outcome = match run_step(env, self.executor, step, self.config.tau_max, &mut rec, hook)? {
            StepOutcome::Completed => Outcome::Completed,
            StepOutcome::Timeout => Outcome::StepTimeout,
            StepOutcome::EpisodeEnd => Outcome::EpisodeEnd,
        };
        let done = usize::from(outcome == Outcome::Completed);
        Ok(rec.finish(env, start_obs, outcome, 1, done))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MetaAction {
    Hybrid(Vec<f64>),
    Index(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaTransition {
    pub obs: Vec<f32>,
    pub goal: MetaAction,
    pub ret: f64,
    pub next_obs: Vec<f32>,
    pub duration: u32,
    pub outcome: Outcome,
    pub terminal: bool,
}

/// The segment's transition, followed by its interim transitions when
/// `interval` is given. Invalid goals never produce interim transitions.
pub fn make_transitions(segment: &Segment, goal: MetaAction, gamma: f64, r_invalid: f64, interval: Option<usize>) -> Vec<MetaTransition> {
    let n = segment.frames();
    let mut out = vec![MetaTransition {
        obs: segment.start_obs.clone(),
        goal: goal.clone(),
        ret: segment.meta_return(gamma, r_invalid),
        next_obs: segment.end_obs.clone(),
        duration: n as u32,
        outcome: segment.outcome,
        terminal: segment.terminal,
    }];
    if let (Some(k), false) = (interval, segment.outcome == Outcome::InvalidGoal) {
        for (i, ret) in interim_returns(&segment.rewards, gamma, k) {
            let Some((_, obs)) = segment.interim_obs.iter().find(|(j, _)| *j == i) else {
                continue;
            };
            out.push(MetaTransition {
                obs: obs.clone(),
                goal: goal.clone(),
                ret,
                next_obs: segment.end_obs.clone(),
                duration: (n - i) as u32,
                outcome: segment.outcome,
                terminal: segment.terminal,
            });
        }
    }
    out
}
