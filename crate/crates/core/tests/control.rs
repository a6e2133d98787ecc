use proptest::prelude::*;
use sage_core::control::*;
use sage_core::goals::TaxiGoal;
use sage_core::taxi_agents::scripted_goal;
use sage_envs::craft::{CraftConfig, CraftEnv};
use sage_envs::taxi::{Cell, TaxiAction, TaxiConfig, TaxiEnv};
use sage_envs::SymbolicEnv;
use sage_pddl::GroundStep;

/// Small taxi where a passenger is always waiting after the first frame.
fn busy_taxi(seed: u64) -> TaxiEnv {
    let config = TaxiConfig {
        spawn_prob: 1.0,
        ..TaxiConfig::small()
    };
    let mut env = TaxiEnv::new(config, seed).unwrap();
    while env.passenger().is_none_or(|p| !p.is_active()) {
        env.step(TaxiAction::Noop).unwrap();
    }
    env
}

struct NeverMoves;

impl Executor<TaxiEnv> for NeverMoves {
    fn act(&mut self, _env: &TaxiEnv, _step: &GroundStep) -> sage_core::Result<TaxiAction> {
        Ok(TaxiAction::Noop)
    }
}

fn far_cell(env: &TaxiEnv) -> Cell {
    let t = env.taxi();
    env.free_cells()
        .into_iter()
        .max_by_key(|c| c.x.abs_diff(t.x) + c.y.abs_diff(t.y))
        .unwrap()
}

#[test]
fn invalid_goal_costs_one_noop_and_the_penalty() {
    let control = AgentConfig::taxi();
    let mut planner = GoalPlanner::new(control.planner);
    let mut executor = IdentityExecutor;
    let mut env = busy_taxi(3);
    // (2,0) is a wall: the taxi can never stand there.
    let goal = TaxiGoal {
        at: Some(Cell::new(2, 0)),
        ..TaxiGoal::default()
    }
    .to_goal();
    let frame = env.frame();
    let mut runner = GoalRunner::new(&control, &mut planner, &mut executor);
    let (segment, decision) = runner.execute_goal(&mut env, Some(&goal), &mut NoHook).unwrap();
    assert!(matches!(decision, PlanDecision::Invalid(_)));
    assert_eq!(env.frame(), frame + 1);
    assert_eq!(segment.outcome, Outcome::InvalidGoal);
    let t = make_transitions(&segment, MetaAction::Index(0), 0.99, control.r_invalid, Some(2));
    assert_eq!(t.len(), 1);
    assert_eq!(t[0].ret, -control.r_invalid);
    assert_eq!(t[0].duration, 1);
}

#[test]
fn inexpressible_and_empty_goals_are_invalid() {
    let control = AgentConfig::taxi();
    let mut planner = GoalPlanner::new(control.planner);
    let env = busy_taxi(4);
    assert_eq!(planner.plan(&env, None).unwrap(), PlanDecision::Invalid(InvalidReason::Inexpressible));
    assert!(matches!(planner.plan(&env, Some(&TaxiGoal::default().to_goal())).unwrap(), PlanDecision::Invalid(InvalidReason::Goal(_))));
}

#[test]
fn solvable_goal_return_matches_frame_by_frame_sum() {
    let gamma = 0.99;
    let control = AgentConfig::taxi();
    for seed in 0..10 {
        let mut planner = GoalPlanner::new(control.planner);
        let mut executor = IdentityExecutor;
        let mut env = busy_taxi(seed);
        let goal = scripted_goal(&env).unwrap().to_goal();
        let mut seen = Vec::new();
        let mut hook = |r: f64| -> sage_core::Result<()> {
            seen.push(r);
            Ok(())
        };
        let frame = env.frame();
        let mut runner = GoalRunner::new(&control, &mut planner, &mut executor);
        let (segment, _) = runner.execute_goal(&mut env, Some(&goal), &mut hook).unwrap();
        assert_eq!(segment.outcome, Outcome::Completed);
        assert_eq!(seen.len(), env.frame() - frame);
        assert_eq!(seen.iter().sum::<f64>(), 1.0);
        let mut expected = 0.0;
        let mut discount = 1.0;
        for r in &seen {
            expected += discount * r;
            discount *= gamma;
        }
        let t = make_transitions(&segment, MetaAction::Index(0), gamma, control.r_invalid, None);
        assert!((t[0].ret - expected).abs() < 1e-9);
        assert_eq!(t[0].duration as usize, seen.len());
    }
}

#[test]
fn completed_plan_satisfies_the_goal() {
    let control = AgentConfig::taxi();
    let mut planner = GoalPlanner::new(control.planner);
    let mut executor = IdentityExecutor;
    let mut env = busy_taxi(11);
    let target = far_cell(&env);
    let goal = TaxiGoal {
        at: Some(target),
        empty: true,
        ..TaxiGoal::default()
    }
    .to_goal();
    let mut runner = GoalRunner::new(&control, &mut planner, &mut executor);
    let (segment, _) = runner.execute_goal(&mut env, Some(&goal), &mut NoHook).unwrap();
    assert_eq!(segment.outcome, Outcome::Completed);
    assert_eq!(env.taxi(), target);
    assert!(env.symbolic_state().holds_goal(&goal).unwrap());
}

#[test]
fn empty_plan_is_one_completed_noop_or_rejected() {
    let mut env = busy_taxi(5);
    let here = env.taxi();
    let goal = TaxiGoal {
        at: Some(here),
        ..TaxiGoal::default()
    }
    .to_goal();
    for reject in [false, true] {
        let control = AgentConfig {
            reject_satisfied: reject,
            ..AgentConfig::taxi()
        };
        let mut planner = GoalPlanner::new(control.planner);
        let mut executor = IdentityExecutor;
        let frame = env.frame();
        let mut runner = GoalRunner::new(&control, &mut planner, &mut executor);
        let (segment, _) = runner.execute_goal(&mut env, Some(&goal), &mut NoHook).unwrap();
        assert_eq!(env.frame(), frame + 1);
        let expected = if reject { Outcome::InvalidGoal } else { Outcome::Completed };
        assert_eq!(segment.outcome, expected);
    }
}

#[test]
fn stuck_controller_times_out_after_exactly_tau_max_actions() {
    for tau_max in [1, 7, 100] {
        let control = AgentConfig {
            tau_max,
            ..AgentConfig::taxi()
        };
        let mut planner = GoalPlanner::new(control.planner);
        let mut executor = NeverMoves;
        let mut env = busy_taxi(2);
        let goal = TaxiGoal {
            at: Some(far_cell(&env)),
            ..TaxiGoal::default()
        }
        .to_goal();
        let frame = env.frame();
        let mut runner = GoalRunner::new(&control, &mut planner, &mut executor);
        let (segment, decision) = runner.execute_goal(&mut env, Some(&goal), &mut NoHook).unwrap();
        assert!(matches!(decision, PlanDecision::Plan(ref s) if s.len() > 1));
        assert_eq!(segment.outcome, Outcome::StepTimeout);
        assert_eq!(segment.frames(), tau_max);
        assert_eq!(env.frame() - frame, tau_max);
        assert_eq!(segment.steps_completed, 0);
    }
}

#[test]
fn episode_end_interrupts_a_plan() {
    let config = TaxiConfig {
        spawn_prob: 1.0,
        episode_len: 4,
        ..TaxiConfig::small()
    };
    let mut env = TaxiEnv::new(config, 8).unwrap();
    let control = AgentConfig::taxi();
    let mut planner = GoalPlanner::new(control.planner);
    let mut executor = IdentityExecutor;
    let goal = TaxiGoal {
        at: Some(far_cell(&env)),
        ..TaxiGoal::default()
    }
    .to_goal();
    let mut runner = GoalRunner::new(&control, &mut planner, &mut executor);
    let (segment, _) = runner.execute_goal(&mut env, Some(&goal), &mut NoHook).unwrap();
    assert_eq!(segment.outcome, Outcome::EpisodeEnd);
    assert!(segment.terminal);
    assert_eq!(segment.frames(), 4);
}

#[test]
fn interim_worked_example() {
    let rewards = [1.0, 0.0, 0.0, 1.0];
    let full = discounted_sum(&rewards, 0.9);
    assert!((full - 1.729).abs() < 1e-12);
    let interim = interim_returns(&rewards, 0.9, 2);
    assert_eq!(interim.len(), 1);
    assert_eq!(interim[0].0, 2);
    assert!((interim[0].1 - 0.9).abs() < 1e-12);
    assert!((1.0 + 0.0 + 0.81 * interim[0].1 - full).abs() < 1e-12);
}

#[test]
fn interim_counts() {
    assert_eq!(interim_returns(&[0.0; 3], 0.9, 1).iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 2]);
    assert!(interim_returns(&[0.0; 3], 0.9, 3).is_empty());
    assert!(interim_returns(&[0.0; 3], 0.9, 5).is_empty());
}

#[test]
fn interim_transitions_come_from_recorded_frames() {
    let control = AgentConfig {
        interim_interval: 2,
        ..AgentConfig::taxi()
    };
    let mut planner = GoalPlanner::new(control.planner);
    let mut executor = IdentityExecutor;
    let mut env = busy_taxi(6);
    let goal = scripted_goal(&env).unwrap().to_goal();
    let mut runner = GoalRunner::new(&control, &mut planner, &mut executor);
    runner.record_interim = true;
    let (segment, _) = runner.execute_goal(&mut env, Some(&goal), &mut NoHook).unwrap();
    let n = segment.frames();
    let transitions = make_transitions(&segment, MetaAction::Index(0), 0.95, 1.0, Some(2));
    assert_eq!(transitions.len(), 1 + (n - 1) / 2);
    for (t, (i, obs)) in transitions[1..].iter().zip(&segment.interim_obs) {
        assert_eq!(&t.obs, obs);
        assert_eq!(t.duration as usize, n - i);
        assert_eq!(t.next_obs, segment.end_obs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn return_decomposition_identity(
        rewards in prop::collection::vec(-2.0f64..2.0, 1..60),
        gamma in 0.0f64..=1.0,
        k in 1usize..8,
    ) {
        let full = discounted_sum(&rewards, gamma);
        for (i, tail) in interim_returns(&rewards, gamma, k) {
            let head: f64 = rewards[..i].iter().enumerate().map(|(j, r)| gamma.powi(j as i32) * r).sum();
            prop_assert!((head + gamma.powi(i as i32) * tail - full).abs() < 1e-9);
        }
    }
}

#[test]
fn step_completion_follows_effects() {
    let mut env = CraftEnv::new(CraftConfig::mini(), 1).unwrap();
    let task = sage_pddl::GroundedTask::new(env.domain(), &env.objects(), &env.symbolic_state()).unwrap();
    let before = env.dynamic_state();
    let state = env.symbolic_state();
    let collect = task
        .steps()
        .iter()
        .find(|s| s.operator.starts_with("collect-") && state.holds(&s.precondition).unwrap())
        .expect("some resource in the start room");
    assert!(!check_step_complete(&before, collect, &before).unwrap());
    // Applying the step's own effects to the snapshot completes it.
    let after = state.apply(collect).unwrap();
    assert!(check_step_complete(&after, collect, &before).unwrap());
    env.step(sage_envs::craft::CraftAction::Noop).unwrap();
    assert!(!check_step_complete(&env.dynamic_state(), collect, &before).unwrap());
}
