//! Reference computations that share no search or control code with the
//! crates they check.

use std::collections::{HashSet, VecDeque};
use std::rc::Rc;

use sage_envs::taxi::{Cell, PassengerStatus, TaxiAction, TaxiEnv};
use sage_envs::SymbolicEnv;
use sage_pddl::{ground, Domain, Goal, PddlError, SymbolicState, TypedObject};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Search {
    Shortest(usize),
    Unreachable,
    /// More than the allowed number of states were visited.
    Exhausted,
}

/// Breadth-first search over the full ground transition system.
pub fn bfs_shortest(domain: &Domain, objects: &[TypedObject], init: &SymbolicState, goal: &Goal, max_states: usize) -> Result<Search, PddlError> {
    let steps = ground(domain, objects)?;
    let start = Rc::new(init.clone());
    let mut seen = HashSet::from([Rc::clone(&start)]);
    let mut queue = VecDeque::from([(start, 0usize)]);
    while let Some((state, depth)) = queue.pop_front() {
        if state.holds_goal(goal)? {
            return Ok(Search::Shortest(depth));
        }
        for step in &steps {
            if state.holds(&step.precondition)? {
                let next = state.apply(step)?;
                if !seen.contains(&next) {
                    if seen.len() >= max_states {
                        return Ok(Search::Exhausted);
                    }
                    let next = Rc::new(next);
                    seen.insert(Rc::clone(&next));
                    queue.push_back((next, depth + 1));
                }
            }
        }
    }
    Ok(Search::Unreachable)
}

const MOVES: [TaxiAction; 4] = [TaxiAction::Up, TaxiAction::Down, TaxiAction::Left, TaxiAction::Right];

/// First move of a shortest path from `from` to `to`, by BFS back from `to`.
fn first_move(env: &TaxiEnv, from: Cell, to: Cell) -> Option<TaxiAction> {
    let mut dist = vec![usize::MAX; env.size() * env.size()];
    let idx = |c: Cell| c.y * env.size() + c.x;
    dist[idx(to)] = 0;
    let mut queue = VecDeque::from([to]);
    while let Some(c) = queue.pop_front() {
        for a in MOVES {
            if let Some(n) = env.neighbour(c, a).filter(|n| !env.is_wall(*n)) {
                if dist[idx(n)] == usize::MAX {
                    dist[idx(n)] = dist[idx(c)] + 1;
                    queue.push_back(n);
                }
            }
        }
    }
    MOVES
        .into_iter()
        .filter_map(|a| env.neighbour(from, a).filter(|n| !env.is_wall(*n)).map(|n| (dist[idx(n)], a)))
        .filter(|(d, _)| *d != usize::MAX)
        .min_by_key(|(d, _)| *d)
        .map(|(_, a)| a)
}

/// Next action of a driver that heads straight for the waiting passenger
/// and then its destination, and stands still while nobody is active.
pub fn scripted_taxi_action(env: &TaxiEnv) -> TaxiAction {
    let taxi = env.taxi();
    match env.passenger() {
        Some(p) => match p.status {
            PassengerStatus::Waiting(c) if c == taxi => TaxiAction::Pickup,
            PassengerStatus::Waiting(c) => first_move(env, taxi, c).unwrap_or(TaxiAction::Noop),
            PassengerStatus::InTaxi if p.destination == taxi => TaxiAction::Dropoff,
            PassengerStatus::InTaxi => first_move(env, taxi, p.destination).unwrap_or(TaxiAction::Noop),
            PassengerStatus::Delivered => TaxiAction::Noop,
        },
        None => TaxiAction::Noop,
    }
}

/// Plays one episode with [`scripted_taxi_action`] and returns its reward.
pub fn scripted_taxi_episode(env: &mut TaxiEnv) -> f64 {
    let mut total = 0.0;
    while !env.is_done() {
        total += env.step(scripted_taxi_action(env)).expect("valid action").reward;
    }
    total
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// One-sided Welch test of mean(a) > mean(b); returns the p-value.
pub fn welch_greater(a: &[f64], b: &[f64]) -> f64 {
    let (va, vb) = (variance(a) / a.len() as f64, variance(b) / b.len() as f64);
    let diff = mean(a) - mean(b);
    let se = (va + vb).sqrt();
    if se == 0.0 {
        return if diff > 0.0 { 0.0 } else { 1.0 };
    }
    let df = (va + vb).powi(2) / (va.powi(2) / (a.len() - 1) as f64 + vb.powi(2) / (b.len() - 1) as f64);
    let t = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    1.0 - t.cdf(diff / se)
}
