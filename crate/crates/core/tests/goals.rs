use proptest::prelude::*;
use sage_core::goals::*;
use sage_envs::craft::{CraftConfig, CraftEnv};
use sage_envs::taxi::Cell;
use sage_pddl::{check_goal, GoalCheck};
use sage_envs::SymbolicEnv;

fn goal_strategy(size: usize) -> impl Strategy<Value = TaxiGoal> {
    (any::<bool>(), prop::option::of((0..size, 0..size)), any::<bool>(), any::<bool>()).prop_map(|(empty, at, in_taxi, delivered)| TaxiGoal {
        empty,
        at: at.map(|(x, y)| Cell::new(x, y)),
        in_taxi,
        delivered,
    })
}

proptest! {
    #[test]
    fn taxi_goal_round_trip(goal in goal_strategy(20)) {
        for coordinates in [CoordinateHead::Categorical, CoordinateHead::Gaussian] {
            let space = TaxiGoalSpace::with_coordinates(20, coordinates).unwrap();
            let v = space.encode(&goal).unwrap();
            prop_assert_eq!(space.decode(&v).unwrap(), Some(goal));
        }
    }
}

#[test]
fn goal_expression_display() {
    let space = TaxiGoalSpace::new(10).unwrap();
    let goal = space.decode(&[1.0, 1.0, 4.0, 6.0, 0.0, 1.0]).unwrap().unwrap();
    assert_eq!(goal.to_string(), "empty ∧ at(4,6) ∧ delivered(p0)");
    assert_eq!(goal.to_goal().len(), 3);
}

#[test]
fn out_of_range_argument_is_inexpressible() {
    let space = TaxiGoalSpace::new(5).unwrap();
    assert_eq!(space.decode(&[0.0, 1.0, 5.0, 0.0, 0.0, 0.0]).unwrap(), None);
    // The argument is ignored while its flag is off.
    assert!(space.decode(&[1.0, 0.0, 9.0, 0.0, 0.0, 0.0]).unwrap().is_some());
    let gaussian = TaxiGoalSpace::with_coordinates(5, CoordinateHead::Gaussian).unwrap();
    assert_eq!(gaussian.decode(&[0.0, 1.0, 1.4, 0.0, 0.0, 0.0]).unwrap(), None);
    assert!(space.decode(&[0.0; 5]).is_err());
    assert!(space.encode(&TaxiGoal { at: Some(Cell::new(5, 0)), ..TaxiGoal::default() }).is_err());
}

#[test]
fn all_flags_off_is_the_empty_goal() {
    let space = TaxiGoalSpace::new(5).unwrap();
    let goal = space.decode(&[0.0; 6]).unwrap().unwrap();
    assert_eq!(goal, TaxiGoal::default());
    assert!(goal.to_goal().is_empty());
}

#[test]
fn craft_table_is_a_bijection_onto_valid_goals() {
    let env = CraftEnv::new(CraftConfig::mini(), 0).unwrap();
    let table = CraftGoalTable::shipped(&env).unwrap();
    assert_eq!(table.len(), 10 + 2 * 9 + env.doors().len());
    for (i, t) in table.templates().iter().enumerate() {
        assert_eq!(table.get(i), Some(t));
        assert_eq!(table.index_of(t), Some(i));
        let goal = t.to_goal(&env);
        assert_eq!(check_goal(env.domain(), &env.objects(), &goal), GoalCheck::Valid, "{t}");
    }
    let names: std::collections::BTreeSet<String> = table.templates().iter().map(|t| t.to_string()).collect();
    assert_eq!(names.len(), table.len());
    let json = serde_json::to_string(&table).unwrap();
    assert_eq!(serde_json::from_str::<CraftGoalTable>(&json).unwrap(), table);
}

#[test]
fn craft_table_rejects_bad_files() {
    let env = CraftEnv::new(CraftConfig::mini(), 0).unwrap();
    assert!(CraftGoalTable::from_toml("per_room = [\"agent-in\", \"bogus\"]", &env).is_err());
    assert!(CraftGoalTable::from_toml("have = [{ item = \"wood\", at_least = 0 }]", &env).is_err());
    assert!(CraftGoalTable::from_toml("colour = 3", &env).is_err());
    assert!(CraftGoalTable::from_toml("", &env).is_err());
    let twice = "have = [{ item = \"wood\", at_least = 1 }, { item = \"wood\", at_least = 1 }]";
    assert!(CraftGoalTable::from_toml(twice, &env).is_err());
}

#[test]
fn collect_goal_is_relative_to_the_current_count() {
    let env = CraftEnv::new(CraftConfig::mini(), 3).unwrap();
    let room = env.rooms().next().unwrap();
    let t = CraftGoalTemplate::CollectIn { room: room.name() };
    let goal = t.to_goal(&env);
    assert!(!env.symbolic_state().holds_goal(&goal).unwrap());
}
