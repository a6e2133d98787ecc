use std::collections::{HashSet, VecDeque};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sage_pddl::*;

const GRID: &str = r#"
(define (domain grid)
  (:types vehicle passenger - locatable locatable cell - object)
  (:constants taxi - vehicle)
  (:predicates (at ?o - locatable ?c - cell) (connected ?from ?to - cell) (empty)
               (in-taxi ?p - passenger) (destination ?p - passenger ?c - cell) (delivered ?p - passenger))
  (:action move :parameters (?from ?to - cell)
    :precondition (and (at taxi ?from) (connected ?from ?to))
    :effect (and (not (at taxi ?from)) (at taxi ?to)))
  (:action pickup :parameters (?p - passenger ?c - cell)
    :precondition (and (at taxi ?c) (at ?p ?c) (empty))
    :effect (and (not (at ?p ?c)) (not (empty)) (in-taxi ?p)))
  (:action dropoff :parameters (?p - passenger ?c - cell)
    :precondition (and (at taxi ?c) (in-taxi ?p) (destination ?p ?c))
    :effect (and (not (in-taxi ?p)) (empty) (delivered ?p))))
"#;

const CRAFT: &str = r#"
(define (domain kitchen)
  (:functions (wood) (plank) (stick) (wooden-pickaxe) (trees) - number)
  (:action collect-wood :parameters () :precondition (>= (trees) 1)
    :effect (and (decrease (trees) 1) (increase (wood) 1)))
  (:action craft-plank :parameters () :precondition (>= (wood) 1)
    :effect (and (decrease (wood) 1) (increase (plank) 2)))
  (:action craft-stick :parameters () :precondition (>= (plank) 1)
    :effect (and (decrease (plank) 1) (increase (stick) 2)))
  (:action craft-wooden-pickaxe :parameters () :precondition (and (>= (plank) 3) (>= (stick) 2))
    :effect (and (decrease (plank) 3) (decrease (stick) 2) (increase (wooden-pickaxe) 1))))
"#;

fn cell(x: usize, y: usize) -> String {
    format!("cell_{x}_{y}")
}

/// Grid instance: free cells, 4-connected adjacency, taxi, one passenger.
fn grid_instance(n: usize, walls: &HashSet<(usize, usize)>, taxi: (usize, usize), pass: (usize, usize), dest: (usize, usize)) -> (Vec<TypedObject>, SymbolicState) {
    let mut objects = vec![TypedObject::new("p0", "passenger")];
    let mut s = SymbolicState::new();
    for x in 0..n {
        for y in 0..n {
            if walls.contains(&(x, y)) {
                continue;
            }
            objects.push(TypedObject::new(cell(x, y), "cell"));
            let neighbours = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
            for (nx, ny) in neighbours {
                if nx < n && ny < n && !walls.contains(&(nx, ny)) {
                    s.insert(Atom::new("connected", &[cell(x, y), cell(nx, ny)]));
                }
            }
        }
    }
    s.insert(Atom::new("at", &["taxi".to_string(), cell(taxi.0, taxi.1)]));
    s.insert(Atom::new("at", &["p0".to_string(), cell(pass.0, pass.1)]));
    s.insert(Atom::new("destination", &["p0".to_string(), cell(dest.0, dest.1)]));
    s.insert(Atom::new("empty", &[] as &[&str]));
    (objects, s)
}

fn delivered() -> Goal {
    Goal::atom(Atom::new("delivered", &["p0"]))
}

/// Explicit-state BFS over the full (unpruned) ground transition system.
fn bfs_length(domain: &Domain, objects: &[TypedObject], init: &SymbolicState, goal: &Goal) -> Option<usize> {
    let steps = ground(domain, objects).unwrap();
    let mut seen = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(init.clone());
    queue.push_back((init.clone(), 0usize));
    while let Some((s, d)) = queue.pop_front() {
        if s.holds_goal(goal).unwrap() {
            return Some(d);
        }
        for step in &steps {
            if s.holds(&step.precondition).unwrap() {
                let next = s.apply(step).unwrap();
                if seen.insert(next.clone()) {
                    queue.push_back((next, d + 1));
                }
            }
        }
    }
    None
}

fn request<'a>(domain: &'a Domain, objects: &'a [TypedObject], init: &'a SymbolicState, goal: &'a Goal, mode: SearchMode) -> PlanRequest<'a> {
    PlanRequest {
        domain,
        objects,
        init,
        goal,
        limits: PlanLimits {
            max_expanded_nodes: 1_000_000,
            wall_clock_ms: None,
        },
        mode,
    }
}

#[test]
fn open_grid_delivery_has_length_five() {
    let d = parse_domain(GRID).unwrap();
    let (objs, init) = grid_instance(5, &HashSet::new(), (0, 0), (0, 1), (2, 1));
    let goal = delivered();
    let r = plan(&request(&d, &objs, &init, &goal, SearchMode::Optimal)).unwrap();
    let steps = r.outcome.steps().unwrap();
    let ops: Vec<&str> = steps.iter().map(|s| s.operator.as_str()).collect();
    assert_eq!(ops, ["move", "pickup", "move", "move", "dropoff"]);
    assert_eq!(bfs_length(&d, &objs, &init, &goal), Some(5));
    assert!(simulate_plan(&init, steps, &goal).valid);
}

#[test]
fn satisfied_goal_gives_empty_plan() {
    let d = parse_domain(GRID).unwrap();
    let (objs, init) = grid_instance(3, &HashSet::new(), (0, 0), (1, 1), (2, 2));
    let goal = Goal::atom(Atom::new("empty", &[] as &[&str]));
    for mode in [SearchMode::Optimal, SearchMode::Greedy] {
        let r = plan(&request(&d, &objs, &init, &goal, mode)).unwrap();
        assert_eq!(r.outcome, PlanOutcome::Found { steps: vec![], cost: 0 });
    }
}

#[test]
fn goal_on_unknown_object_is_invalid() {
    let d = parse_domain(GRID).unwrap();
    let (objs, init) = grid_instance(3, &HashSet::new(), (0, 0), (1, 1), (2, 2));
    let goal = Goal::atom(Atom::new("delivered", &["p9"]));
    let err = plan(&request(&d, &objs, &init, &goal, SearchMode::Greedy)).unwrap_err();
    assert_eq!(err, PlanError::InvalidGoal(GoalIssue::UnknownObject("p9".into())));
}

#[test]
fn goal_checks() {
    let d = parse_domain(GRID).unwrap();
    let objs: Vec<_> = (0..20)
        .flat_map(|x| (0..20).map(move |y| TypedObject::new(cell(x, y), "cell")))
        .collect();
    let at = Goal::atom(Atom::new("at", &["taxi".to_string(), cell(4, 6)]));
    assert_eq!(check_goal(&d, &objs, &at), GoalCheck::Valid);
    let bad = Goal::atom(Atom::new("at", &["taxi"]));
    assert!(matches!(check_goal(&d, &objs, &bad), GoalCheck::Invalid(GoalIssue::Arity(_))));
    assert_eq!(check_goal(&d, &objs, &Goal::default()), GoalCheck::Invalid(GoalIssue::Empty));
    let typed = Goal::atom(Atom::new("in-taxi", &[cell(0, 0)]));
    assert!(matches!(check_goal(&d, &objs, &typed), GoalCheck::Invalid(GoalIssue::TypeMismatch(_))));
}

#[test]
fn goal_count_heuristic() {
    let wood = FluentTerm::new::<&str>("wood", &[]);
    let mut s = SymbolicState::new();
    s.set_fluent(wood.clone(), Number::from_integer(5));
    let g = Goal::default()
        .with_numeric(Goal::fluent_cmp(&wood, CmpOp::Ge, 2))
        .with_literal(Atom::new("in-taxi", &["p0"]), true);
    assert_eq!(goal_count(&s, &g), 1);
    s.insert(Atom::new("in-taxi", &["p0"]));
    assert_eq!(goal_count(&s, &g), 0);
    let three = Goal::atom(Atom::new("a", &[] as &[&str]))
        .with_literal(Atom::new("b", &[] as &[&str]), true)
        .with_literal(Atom::new("c", &[] as &[&str]), false);
    assert_eq!(goal_count(&SymbolicState::new(), &three), 2);
}

fn zero_inventory(trees: i64) -> SymbolicState {
    let mut s = SymbolicState::new();
    for f in ["wood", "plank", "stick", "wooden-pickaxe"] {
        s.set_fluent(FluentTerm::new::<&str>(f, &[]), Number::from_integer(0));
    }
    s.set_fluent(FluentTerm::new::<&str>("trees", &[]), Number::from_integer(trees));
    s
}

#[test]
fn pickaxe_plan_keeps_ledger_non_negative() {
    let d = parse_domain(CRAFT).unwrap();
    let init = zero_inventory(4);
    let goal = Goal::default().with_numeric(Goal::fluent_cmp(&FluentTerm::new::<&str>("wooden-pickaxe", &[]), CmpOp::Ge, 1));
    for mode in [SearchMode::Optimal, SearchMode::Greedy] {
        let r = plan(&request(&d, &[], &init, &goal, mode)).unwrap();
        let steps = r.outcome.steps().unwrap();
        let mut s = init.clone();
        for step in steps {
            s = s.apply(step).unwrap();
            assert!(s.fluents.values().all(|v| *v >= Number::from_integer(0)));
        }
        assert!(s.holds_goal(&goal).unwrap());
        let ops: HashSet<&str> = steps.iter().map(|s| s.operator.as_str()).collect();
        for op in ["collect-wood", "craft-plank", "craft-stick", "craft-wooden-pickaxe"] {
            assert!(ops.contains(op), "{mode:?} plan lacks {op}");
        }
        if mode == SearchMode::Optimal {
            // 2 wood → 4 planks; one plank → 2 sticks; 3 planks + 2 sticks.
            assert_eq!(steps.len(), 6);
            assert_eq!(bfs_length(&d, &[], &init, &goal), Some(6));
        }
    }
}

#[test]
fn pickaxe_without_wood_is_unsolvable() {
    let d = parse_domain(CRAFT).unwrap();
    let init = zero_inventory(1);
    let goal = Goal::default().with_numeric(Goal::fluent_cmp(&FluentTerm::new::<&str>("wooden-pickaxe", &[]), CmpOp::Ge, 1));
    let r = plan(&request(&d, &[], &init, &goal, SearchMode::Optimal)).unwrap();
    assert_eq!(r.outcome, PlanOutcome::Unsolvable);
    assert_eq!(bfs_length(&d, &[], &init, &goal), None);
}

#[test]
fn node_limit_is_distinct_from_unsolvable() {
    let d = parse_domain(GRID).unwrap();
    let (objs, init) = grid_instance(6, &HashSet::new(), (0, 0), (5, 5), (0, 5));
    let goal = delivered();
    let mut req = request(&d, &objs, &init, &goal, SearchMode::Optimal);
    req.limits.max_expanded_nodes = 3;
    assert_eq!(plan(&req).unwrap().outcome, PlanOutcome::LimitReached);
}

#[test]
fn grounded_task_is_reusable_and_checks_statics() {
    let d = parse_domain(GRID).unwrap();
    let (objs, init) = grid_instance(4, &HashSet::new(), (0, 0), (3, 3), (0, 3));
    let task = GroundedTask::new(&d, &objs, &init).unwrap();
    let goal = delivered();
    let limits = PlanLimits::default();
    let a = task.solve(&init, &goal, limits, SearchMode::Greedy).unwrap();
    let (_, moved) = grid_instance(4, &HashSet::new(), (2, 2), (3, 3), (0, 3));
    let b = task.solve(&moved, &goal, limits, SearchMode::Greedy).unwrap();
    assert!(simulate_plan(&init, a.outcome.steps().unwrap(), &goal).valid);
    assert!(simulate_plan(&moved, b.outcome.steps().unwrap(), &goal).valid);
    let (_, other_dest) = grid_instance(4, &HashSet::new(), (0, 0), (3, 3), (1, 3));
    assert_eq!(task.solve(&other_dest, &goal, limits, SearchMode::Greedy), Err(PlanError::StaticMismatch));
}

#[test]
fn planning_is_deterministic() {
    let d = parse_domain(GRID).unwrap();
    let (objs, init) = grid_instance(5, &HashSet::from([(2, 0), (2, 1), (1, 3), (1, 4)]), (4, 0), (0, 0), (4, 4));
    let goal = delivered();
    for mode in [SearchMode::Optimal, SearchMode::Greedy] {
        let a = plan(&request(&d, &objs, &init, &goal, mode)).unwrap();
        let b = plan(&request(&d, &objs, &init, &goal, mode)).unwrap();
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.stats.expanded, b.stats.expanded);
    }
}

fn random_walls(rng: &mut ChaCha8Rng, n: usize) -> HashSet<(usize, usize)> {
    (0..n)
        .flat_map(|x| (0..n).map(move |y| (x, y)))
        .filter(|_| rng.random_bool(0.25))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Optimal mode agrees with the BFS oracle on length and solvability;
    /// greedy plans are valid whenever the instance is solvable.
    #[test]
    fn planner_agrees_with_bfs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4;
        let mut walls = random_walls(&mut rng, n);
        let mut free = || loop {
            let c = (rng.random_range(0..n), rng.random_range(0..n));
            if !walls.contains(&c) { return c; }
            walls.remove(&c);
        };
        let (t, p, dst) = (free(), free(), free());
        let (objs, init) = grid_instance(n, &walls, t, p, dst);
        let d = parse_domain(GRID).unwrap();
        let goal = delivered();
        let oracle = bfs_length(&d, &objs, &init, &goal);
        let opt = plan(&request(&d, &objs, &init, &goal, SearchMode::Optimal)).unwrap();
        let greedy = plan(&request(&d, &objs, &init, &goal, SearchMode::Greedy)).unwrap();
        match oracle {
            Some(len) => {
                let steps = opt.outcome.steps().expect("optimal found");
                prop_assert_eq!(steps.len(), len);
                prop_assert!(simulate_plan(&init, steps, &goal).valid);
                let g = greedy.outcome.steps().expect("greedy found");
                prop_assert!(g.len() >= len);
                prop_assert!(simulate_plan(&init, g, &goal).valid);
            }
            None => {
                prop_assert_eq!(opt.outcome, PlanOutcome::Unsolvable);
                prop_assert_eq!(greedy.outcome, PlanOutcome::Unsolvable);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Numeric instances are finite here, so exhaustive BFS decides them;
    /// up-front monotone pruning must never change the verdict.
    #[test]
    fn numeric_verdicts_agree_with_bfs(
        trees in 0i64..3,
        wood in 0i64..2,
        plank in 0i64..4,
        target in 0usize..4,
        amount in 1i64..4,
    ) {
        let d = parse_domain(CRAFT).unwrap();
        let mut init = zero_inventory(trees);
        init.set_fluent(FluentTerm::new::<&str>("wood", &[]), Number::from_integer(wood));
        init.set_fluent(FluentTerm::new::<&str>("plank", &[]), Number::from_integer(plank));
        let fluent = ["wood", "plank", "stick", "wooden-pickaxe"][target];
        let goal = Goal::default().with_numeric(Goal::fluent_cmp(&FluentTerm::new::<&str>(fluent, &[]), CmpOp::Ge, amount));
        let oracle = bfs_length(&d, &[], &init, &goal);
        let opt = plan(&request(&d, &[], &init, &goal, SearchMode::Optimal)).unwrap();
        match oracle {
            Some(len) => prop_assert_eq!(opt.outcome.steps().map(|s| s.len()), Some(len)),
            None => prop_assert_eq!(opt.outcome, PlanOutcome::Unsolvable),
        }
    }
}

#[test]
fn exhausted_resources_are_decided_without_search() {
    let d = parse_domain(CRAFT).unwrap();
    let init = zero_inventory(0);
    let goal = Goal::default().with_numeric(Goal::fluent_cmp(&FluentTerm::new::<&str>("wooden-pickaxe", &[]), CmpOp::Ge, 1));
    let r = plan(&request(&d, &[], &init, &goal, SearchMode::Greedy)).unwrap();
    assert_eq!(r.outcome, PlanOutcome::Unsolvable);
    assert_eq!(r.stats.expanded, 0);
}
