//! Experiment runner: configuration, per-seed training with periodic
//! evaluation, CSV metrics and multi-seed aggregation.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sage_envs::craft::{CraftConfig, CraftEnv};
use sage_envs::taxi::TaxiConfig;
use sage_rl::{ActorCritic, DqnConfig, DqnLearner, PpoConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, EpisodeRecord, TrainConfig};
use crate::checkpoint::Checkpoint;
use crate::control::AgentConfig;
use crate::craft_agents::{step_table, CraftDqnAgent, CraftMeta};
use crate::error::{CoreError, Result};
use crate::goals::CraftGoalTable;
use crate::pretrain::{pretrain_low_level, PretrainConfig};
use crate::taxi_agents::{BaselineKind, FlatPpo, GoalBaseline, SageTaxi};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Scripted,
    RandomGoal,
    Ppo,
    Sage,
    Hdqn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvFamily {
    Taxi,
    Craft,
}

impl EnvFamily {
    pub fn of(preset: &str) -> Result<Self> {
        if TaxiConfig::preset(preset).is_ok() {
            Ok(EnvFamily::Taxi)
        } else if CraftConfig::preset(preset).is_ok() {
            Ok(EnvFamily::Craft)
        } else {
            Err(CoreError::Config(format!("unknown env preset `{preset}`")))
        }
    }
}

/// A fully resolved experiment. Every field has a value, so a run is a
/// function of this struct alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: String,
    pub agent: AgentKind,
    pub frames: u64,
    /// Frames between evaluation points; an evaluation also runs at frame 0
    /// and at the end.
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub control: AgentConfig,
    pub train: TrainConfig,
    pub ppo: PpoConfig,
    pub dqn: DqnConfig,
    pub pretrain: PretrainConfig,
    /// Low-level checkpoint shared by every seed; pre-trained per seed when
    /// absent. Craft only.
    pub low_level: Option<PathBuf>,
    /// Goal-template table; the shipped table when absent. Craft only.
    pub goal_table: Option<PathBuf>,
}

/// Top level of the config file. Sections are partial and are laid over
/// the preset defaults of the chosen environment.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    env: String,
    agent: AgentKind,
    frames: Option<u64>,
    eval_every: Option<u64>,
    eval_episodes: Option<usize>,
    seeds: Option<Vec<u64>>,
    control: Option<toml::Table>,
    train: Option<toml::Table>,
    ppo: Option<toml::Table>,
    dqn: Option<toml::Table>,
    pretrain: Option<toml::Table>,
    low_level: Option<PathBuf>,
    goal_table: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Preset defaults of `agent` on `env`.
    pub fn preset(env: &str, agent: AgentKind) -> Result<Self> {
        let family = EnvFamily::of(env)?;
        let (control, ppo, frames) = match family {
            EnvFamily::Taxi => (AgentConfig::taxi(), PpoConfig::taxi(), 2_000_000),
            EnvFamily::Craft => (AgentConfig::craft(), PpoConfig::craft_low_level(), 200_000),
        };
        Ok(Self {
            env: env.to_string(),
            agent,
            frames,
            eval_every: frames / 10,
            eval_episodes: 20,
            seeds: vec![0, 1, 2],
            control,
            train: TrainConfig {
                rollout: if family == EnvFamily::Taxi && agent == AgentKind::Sage { 16 } else { 128 },
                ..TrainConfig::default()
            },
            ppo,
            dqn: DqnConfig {
                epsilon_frames: frames / 2,
                ..DqnConfig::default()
            },
            pretrain: PretrainConfig::default(),
            low_level: None,
            goal_table: None,
        })
    }

    /// Parses a config file. Unknown keys at any level are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text)?;
        let mut config = Self::preset(&file.env, file.agent)?;
        if let Some(f) = file.frames {
            config.set_frames(f);
        }
        if let Some(e) = file.eval_every {
            config.eval_every = e;
        }
        if let Some(e) = file.eval_episodes {
            config.eval_episodes = e;
        }
        if let Some(s) = file.seeds {
            config.seeds = s;
        }
        overlay(&mut config.control, file.control, "control")?;
        overlay(&mut config.train, file.train, "train")?;
        overlay(&mut config.ppo, file.ppo, "ppo")?;
        overlay(&mut config.dqn, file.dqn, "dqn")?;
        overlay(&mut config.pretrain, file.pretrain, "pretrain")?;
        config.low_level = file.low_level;
        config.goal_table = file.goal_table;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut config = Self::from_toml(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.low_level, &mut config.goal_table].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    /// Changes the budget, keeping the evaluation cadence and exploration
    /// schedule proportional to it.
    pub fn set_frames(&mut self, frames: u64) {
        self.frames = frames;
        self.eval_every = (frames / 10).max(1);
        self.dqn.epsilon_frames = frames / 2;
    }

    pub fn family(&self) -> Result<EnvFamily> {
        EnvFamily::of(&self.env)
    }

    pub fn validate(&self) -> Result<()> {
        let family = self.family()?;
        let allowed = match family {
            EnvFamily::Taxi => matches!(self.agent, AgentKind::Scripted | AgentKind::RandomGoal | AgentKind::Ppo | AgentKind::Sage),
            EnvFamily::Craft => matches!(self.agent, AgentKind::Sage | AgentKind::Hdqn),
        };
        if !allowed {
            return Err(CoreError::Config(format!("agent {:?} is not available on {}", self.agent, self.env)));
        }
        if self.seeds.is_empty() {
            return Err(CoreError::Config("at least one seed is required".into()));
        }
        if self.eval_every == 0 {
            return Err(CoreError::Config("eval_every must be positive".into()));
        }
        if family == EnvFamily::Taxi && (self.low_level.is_some() || self.goal_table.is_some()) {
            return Err(CoreError::Config("low_level and goal_table only apply to craft presets".into()));
        }
        self.control.validate()?;
        self.train.validate()?;
        self.pretrain.validate()?;
        if !(0.0..=1.0).contains(&self.dqn.epsilon_end) || !(0.0..=1.0).contains(&self.dqn.epsilon_start) {
            return Err(CoreError::Config("dqn epsilon must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Frames at which evaluations run.
    pub fn eval_points(&self) -> Vec<u64> {
        let mut points: Vec<u64> = (0..).map(|i| i * self.eval_every).take_while(|f| *f < self.frames).collect();
        points.push(self.frames);
        points
    }
}

/// Lays `patch` over the serialized defaults of `target`, refusing keys the
/// defaults do not have.
fn overlay<T: Serialize + DeserializeOwned>(target: &mut T, patch: Option<toml::Table>, section: &str) -> Result<()> {
    let Some(patch) = patch else { return Ok(()) };
    let mut base = toml::Table::try_from(&*target).map_err(|e| CoreError::Config(e.to_string()))?;
    merge(&mut base, patch, section)?;
    *target = base.try_into().map_err(|e: toml::de::Error| CoreError::Config(format!("[{section}]: {e}")))?;
    Ok(())
}

fn merge(base: &mut toml::Table, patch: toml::Table, path: &str) -> Result<()> {
    for (key, value) in patch {
        let here = format!("{path}.{key}");
        match (base.get_mut(&key), value) {
            (None, _) => return Err(CoreError::Config(format!("unknown config field `{here}`"))),
            (Some(toml::Value::Table(b)), toml::Value::Table(p)) => merge(b, p, &here)?,
            (Some(slot), v) => *slot = v,
        }
    }
    Ok(())
}

/// Shared low-level controller of a craft run, keyed by seed when
/// pre-trained per seed.
fn craft_low_level(config: &ExperimentConfig, seed: u64, out: Option<&Path>) -> Result<ActorCritic<f32>> {
    if let Some(path) = &config.low_level {
        return match Checkpoint::load(path)? {
            Checkpoint::LowLevel { policy, .. } => Ok(policy.to_policy()?),
            _ => Err(CoreError::Checkpoint(format!("{} is not a low-level checkpoint", path.display()))),
        };
    }
    let craft = CraftConfig::preset(&config.env)?;
    let (policy, _) = pretrain_low_level(&craft, &config.control, &config.pretrain, seed)?;
    if let Some(dir) = out {
        Checkpoint::LowLevel {
            env: config.env.clone(),
            control: config.control,
            policy: sage_rl::PolicyDump::from_policy(&policy),
        }
        .save(&dir.join("low_level.json"))?;
    }
    Ok(policy)
}

fn craft_goal_table(config: &ExperimentConfig) -> Result<CraftGoalTable> {
    let env = CraftEnv::new(CraftConfig::preset(&config.env)?, 0)?;
    match &config.goal_table {
        Some(path) => CraftGoalTable::from_toml(&fs::read_to_string(path)?, &env),
        None => CraftGoalTable::shipped(&env),
    }
}

/// Builds the untrained agent of `config` for one seed.
pub fn build_agent(config: &ExperimentConfig, seed: u64, out: Option<&Path>) -> Result<Box<dyn Agent>> {
    config.validate()?;
    let env = config.env.as_str();
    Ok(match config.agent {
        AgentKind::Scripted => Box::new(GoalBaseline::new(BaselineKind::Scripted, env, config.control, seed)?),
        AgentKind::RandomGoal => Box::new(GoalBaseline::new(BaselineKind::RandomGoal, env, config.control, seed)?),
        AgentKind::Ppo => Box::new(FlatPpo::new(env, config.ppo, &config.train, seed)?),
        AgentKind::Sage if config.family()? == EnvFamily::Taxi => {
            Box::new(SageTaxi::new(env, config.control, config.ppo, &config.train, seed)?)
        }
        AgentKind::Sage | AgentKind::Hdqn => {
            let meta = match config.agent {
                AgentKind::Sage => CraftMeta::Goals(craft_goal_table(config)?),
                _ => CraftMeta::Steps(step_table(&CraftConfig::preset(env)?)?),
            };
            let low_level = craft_low_level(config, seed, out)?;
            Box::new(CraftDqnAgent::new(env, meta, config.control, config.dqn, config.train.clone(), low_level, seed)?)
        }
    })
}

/// Rebuilds an agent from a checkpoint for evaluation on `env`.
pub fn agent_from_checkpoint(checkpoint: &Checkpoint, env: &str) -> Result<Box<dyn Agent>> {
    let family = EnvFamily::of(env)?;
    let same_family = EnvFamily::of(checkpoint.env())? == family;
    if !same_family {
        return Err(CoreError::Checkpoint(format!("checkpoint for {} cannot run on {env}", checkpoint.env())));
    }
    let train = TrainConfig::default();
    Ok(match checkpoint {
        Checkpoint::Scripted { control, .. } => Box::new(GoalBaseline::new(BaselineKind::Scripted, env, *control, 0)?),
        Checkpoint::RandomGoal { control, .. } => Box::new(GoalBaseline::new(BaselineKind::RandomGoal, env, *control, 0)?),
        Checkpoint::SageTaxi { control, policy, .. } => {
            Box::new(SageTaxi::with_policy(env, *control, PpoConfig::taxi(), &train, policy.to_policy()?, 0)?)
        }
        Checkpoint::FlatPpo { policy, .. } => Box::new(FlatPpo::with_policy(env, PpoConfig::taxi(), &train, policy.to_policy()?, 0)?),
        Checkpoint::SageCraft { control, train, table, q, low_level, .. } => {
            let learner = DqnLearner::from_network(q.to_network()?, DqnConfig::default());
            let meta = CraftMeta::Goals(table.clone());
            Box::new(CraftDqnAgent::with_learner(env, meta, *control, train.clone(), learner, low_level.to_policy()?, 0)?)
        }
        Checkpoint::Hdqn { control, train, q, low_level, .. } => {
            let learner = DqnLearner::from_network(q.to_network()?, DqnConfig::default());
            let meta = CraftMeta::Steps(step_table(&CraftConfig::preset(env)?)?);
            Box::new(CraftDqnAgent::with_learner(env, meta, *control, train.clone(), learner, low_level.to_policy()?, 0)?)
        }
        Checkpoint::LowLevel { .. } => {
            return Err(CoreError::Checkpoint("a low-level controller checkpoint has no meta policy to evaluate".into()))
        }
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    /// `None` when no episode ran.
    pub mean_return: Option<f64>,
    pub plans_issued: u64,
    pub invalid_goals: u64,
    pub timeouts: u64,
}

impl EvalSummary {
    pub fn from_records(records: &[EpisodeRecord]) -> Self {
        let n = records.len();
        Self {
            episodes: n,
            mean_return: (n > 0).then(|| records.iter().map(|r| r.ret).sum::<f64>() / n as f64),
            plans_issued: records.iter().map(|r| r.plans_issued).sum(),
            invalid_goals: records.iter().map(|r| r.invalid_goals).sum(),
            timeouts: records.iter().map(|r| r.timeouts).sum(),
        }
    }

    /// Completed or episode-ended decisions.
    pub fn other_outcomes(&self) -> u64 {
        self.plans_issued - self.invalid_goals - self.timeouts
    }
}

pub fn evaluate(agent: &dyn Agent, episodes: usize, seed: u64) -> Result<EvalSummary> {
    if episodes == 0 {
        return Ok(EvalSummary::default());
    }
    Ok(EvalSummary::from_records(&agent.evaluate(episodes, seed)?))
}

pub fn evaluate_checkpoint(checkpoint: &Checkpoint, env: &str, episodes: usize, seed: u64) -> Result<EvalSummary> {
    let agent = agent_from_checkpoint(checkpoint, env)?;
    evaluate(agent.as_ref(), episodes, seed)
}

/// Evaluation episodes for seed `s` draw worlds from `s + EVAL_SEED_OFFSET`,
/// disjoint from the training seeds in practice.
pub const EVAL_SEED_OFFSET: u64 = 1_000_003;

/// Returns of one seed's evaluation points.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
    /// (frame, summary) per evaluation point.
    pub evals: Vec<(u64, EvalSummary)>,
    pub checkpoint: Checkpoint,
}

/// Trains one seed. `out` receives the per-seed files when given.
pub fn run_seed(config: &ExperimentConfig, seed: u64, out: Option<&Path>) -> Result<SeedRun> {
    let dir = out.map(|o| o.join(format!("seed_{seed}")));
    if let Some(d) = &dir {
        fs::create_dir_all(d)?;
    }
    let mut agent = build_agent(config, seed, dir.as_deref())?;
    let started = Instant::now();
    let mut episodes = Vec::new();
    let mut evals = Vec::new();
    let mut timing = Vec::new();
    for point in config.eval_points() {
        agent.train_until(point, &mut episodes)?;
        let summary = evaluate(agent.as_ref(), config.eval_episodes, seed.wrapping_add(EVAL_SEED_OFFSET))?;
        evals.push((agent.frames(), summary));
        timing.push((agent.frames(), started.elapsed().as_secs_f64()));
    }
    let checkpoint = agent.checkpoint()?;
    if let Some(d) = &dir {
        write_metrics(&d.join("metrics.csv"), &episodes)?;
        write_evals(&d.join("eval.csv"), &evals)?;
        write_timing(&d.join("timing.csv"), &timing)?;
        checkpoint.save(&d.join("checkpoint.json"))?;
    }
    Ok(SeedRun {
        seed,
        episodes,
        evals,
        checkpoint,
    })
}

/// Runs every seed in order and writes the aggregate.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<Vec<SeedRun>> {
    config.validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), toml::to_string(config).map_err(|e| CoreError::Config(e.to_string()))?)?;
    let runs = config.seeds.iter().map(|s| run_seed(config, *s, Some(out))).collect::<Result<Vec<_>>>()?;
    write_aggregate(&out.join("aggregate.csv"), &aggregate(&runs, BOOTSTRAP_RESAMPLES, AGGREGATE_SEED)?)?;
    Ok(runs)
}

#[derive(Debug, Serialize)]
struct MetricsRow {
    frame: u64,
    episode: u64,
    #[serde(rename = "return")]
    ret: f64,
    plans_issued: u64,
    invalid_rate: f64,
    timeout_rate: f64,
}

/// Training episodes, one row each. Wall time lives in `timing.csv` so this
/// file is reproducible byte for byte.
pub fn write_metrics(path: &Path, episodes: &[EpisodeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in episodes {
        w.serialize(MetricsRow {
            frame: e.frame,
            episode: e.episode,
            ret: e.ret,
            plans_issued: e.plans_issued,
            invalid_rate: e.invalid_rate(),
            timeout_rate: e.timeout_rate(),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalRow {
    frame: u64,
    episodes: usize,
    mean_return: Option<f64>,
    plans_issued: u64,
    invalid_goals: u64,
    timeouts: u64,
}

pub fn write_evals(path: &Path, evals: &[(u64, EvalSummary)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (frame, s) in evals {
        w.serialize(EvalRow {
            frame: *frame,
            episodes: s.episodes,
            mean_return: s.mean_return,
            plans_issued: s.plans_issued,
            invalid_goals: s.invalid_goals,
            timeouts: s.timeouts,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn write_timing(path: &Path, timing: &[(u64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["frame", "wall_time_s"])?;
    for (frame, t) in timing {
        w.write_record([frame.to_string(), format!("{t:.3}")])?;
    }
    w.flush()?;
    Ok(())
}

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;
const AGGREGATE_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateRow {
    /// Evaluation point index; frame counts may differ slightly by seed.
    pub point: usize,
    pub frame: u64,
    pub seeds: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Percentile bootstrap interval of the mean at level 95%.
pub fn bootstrap_ci<R: Rng + ?Sized>(samples: &[f64], resamples: usize, rng: &mut R) -> Option<(f64, f64)> {
    if samples.is_empty() || resamples == 0 {
        return None;
    }
    let n = samples.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    Some((at(0.025), at(0.975)))
}

/// Mean and bootstrap interval across seeds of each evaluation point.
pub fn aggregate(runs: &[SeedRun], resamples: usize, seed: u64) -> Result<Vec<AggregateRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = runs.iter().map(|r| r.evals.len()).min().unwrap_or(0);
    let mut out = Vec::with_capacity(points);
    for point in 0..points {
        let values: Vec<f64> = runs.iter().filter_map(|r| r.evals[point].1.mean_return).collect();
        if values.is_empty() {
            continue;
        }
        let (ci_low, ci_high) = bootstrap_ci(&values, resamples, &mut rng).expect("non-empty samples");
        out.push(AggregateRow {
            point,
            frame: runs.iter().map(|r| r.evals[point].0).max().unwrap_or(0),
            seeds: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            ci_low,
            ci_high,
        });
    }
    Ok(out)
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One-sided sign test of "differences are positive": the number of
/// positive differences and the probability of at least that many under a
/// fair coin. Zero differences are dropped.
pub fn sign_test(differences: &[f64]) -> (usize, f64) {
    let nonzero: Vec<f64> = differences.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    let k = nonzero.iter().filter(|d| **d > 0.0).count();
    let mut p = 0.0;
    for j in k..=n {
        p += binomial(n, j) * 0.5f64.powi(n as i32);
    }
    (k, p)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
