//! Symbolic planning layer: a PDDL subset (typed STRIPS, negative
//! preconditions, numeric fluents) with exact rational arithmetic, a
//! grounder and a forward-search planner.

pub mod error;
pub mod ground;
pub mod model;
pub mod parse;
pub mod planner;
pub mod print;
pub mod sexpr;
pub mod state;

pub use error::{PddlError, Result};
pub use ground::{ground, ground_pruned, instantiate};
pub use model::*;
pub use parse::{parse_domain, parse_goal, parse_number, parse_problem, validate_domain, validate_state};
pub use planner::{
    check_goal, goal_count, plan, validate_goal, GoalCheck, GoalIssue, GroundedTask, PlanError, PlanLimits,
    PlanOutcome, PlanRequest, PlanResult, SearchMode, SearchStats,
};
pub use print::{domain_to_string, goal_to_string, number_to_string, problem_to_string};
pub use state::{simulate_plan, Atom, FluentTerm, Goal, GroundStep, PlanValidation, Problem, SymbolicState};
