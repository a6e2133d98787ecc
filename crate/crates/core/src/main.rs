use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use sage_core::checkpoint::Checkpoint;
use sage_core::harness::{self, ExperimentConfig};
use sage_pddl::{parse_domain, parse_goal, parse_problem, plan, PlanLimits, PlanOutcome, PlanRequest, SearchMode};

#[derive(Parser)]
#[command(name = "sage", about = "Train and evaluate planner-guided agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment and write metrics and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the frame budget.
        #[arg(long)]
        frames: Option<u64>,
    },
    /// Evaluate a checkpoint without exploration.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Environment preset; defaults to the checkpoint's own.
        #[arg(long)]
        env: Option<String>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Solve one planning problem and print the plan, one step per line.
    Plan {
        #[arg(long)]
        domain: PathBuf,
        /// Problem file supplying objects and the initial state.
        #[arg(long)]
        init: PathBuf,
        /// Goal expression; defaults to the problem's own goal.
        #[arg(long)]
        goal: Option<String>,
        /// Uniform-cost search for a shortest plan instead of greedy search.
        #[arg(long)]
        optimal: bool,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train { config, out, seed, frames } => {
            let mut config = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(f) = frames {
                config.set_frames(f);
            }
            if let Some(s) = seed {
                config.seeds = vec![s];
            }
            let runs = harness::run(&config, &out)?;
            for run in &runs {
                if let Some((frame, summary)) = run.evals.last() {
                    println!("seed {:>4}  frames {:>9}  eval return {}", run.seed, frame, fmt_mean(summary.mean_return));
                }
            }
            println!("wrote {}", out.display());
        }
        Command::Eval { checkpoint, env, episodes, seed } => {
            let ckpt = Checkpoint::load(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let env = env.unwrap_or_else(|| ckpt.env().to_string());
            let s = harness::evaluate_checkpoint(&ckpt, &env, episodes, seed)?;
            println!("env {env}  episodes {}", s.episodes);
            println!("mean return {}", fmt_mean(s.mean_return));
            println!("plans issued {}  completed/ended {}  invalid {}  timeouts {}", s.plans_issued, s.other_outcomes(), s.invalid_goals, s.timeouts);
        }
        Command::Plan { domain, init, goal, optimal } => {
            let domain = parse_domain(&std::fs::read_to_string(&domain)?)?;
            let problem = parse_problem(&std::fs::read_to_string(&init)?, &domain)?;
            let goal = match goal {
                Some(text) => parse_goal(&text, &domain)?,
                None => problem.goal.clone(),
            };
            let request = PlanRequest {
                domain: &domain,
                objects: &problem.objects,
                init: &problem.init,
                goal: &goal,
                limits: PlanLimits::default(),
                mode: if optimal { SearchMode::Optimal } else { SearchMode::Greedy },
            };
            match plan(&request)?.outcome {
                PlanOutcome::Found { steps, .. } => {
                    for step in steps {
                        println!("{step}");
                    }
                }
                PlanOutcome::Unsolvable => bail!("goal is unreachable from the initial state"),
                PlanOutcome::LimitReached => bail!("search limit reached before a plan was found"),
            }
        }
    }
    Ok(())
}

fn fmt_mean(m: Option<f64>) -> String {
    m.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}
