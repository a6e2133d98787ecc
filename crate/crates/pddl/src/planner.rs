//! Forward state-space planner over a grounded task.
//!
//! States are a bitset over the atoms some step can change plus a vector
//! of the fluents some step can change. Everything else is constant for a
//! given initial state and is folded in when a search starts.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::error::PddlError;
use crate::ground::ground_pruned;
use crate::model::*;
use crate::parse::{check_ground_args, check_ground_fluent_expr, expr_fluents};
use crate::state::{Atom, FluentTerm, Goal, GroundStep, SymbolicState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanLimits {
    pub max_expanded_nodes: usize,
    /// `None` disables the wall-clock limit, which keeps searches reproducible.
    pub wall_clock_ms: Option<u64>,
}

impl Default for PlanLimits {
    fn default() -> Self {
        Self {
            max_expanded_nodes: 1_000_000,
            wall_clock_ms: Some(5_000),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    /// Breadth-first: shortest plan under unit step costs.
    Optimal,
    /// Greedy best-first on the goal-count heuristic.
    #[default]
    Greedy,
}

#[derive(Debug, Clone)]
pub struct PlanRequest<'a> {
    pub domain: &'a Domain,
    pub objects: &'a [TypedObject],
    pub init: &'a SymbolicState,
    pub goal: &'a Goal,
    pub limits: PlanLimits,
    pub mode: SearchMode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutcome {
    Found { steps: Vec<GroundStep>, cost: usize },
    /// The reachable state space was exhausted without meeting the goal.
    Unsolvable,
    LimitReached,
}

impl PlanOutcome {
    pub fn steps(&self) -> Option<&[GroundStep]> {
        match self {
            PlanOutcome::Found { steps, .. } => Some(steps),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchStats {
    pub expanded: usize,
    pub generated: usize,
    pub grounded_steps: usize,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub outcome: PlanOutcome,
    pub stats: SearchStats,
}

/// Why a goal cannot be posed to the planner at all.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GoalIssue {
    #[error("goal is empty")]
    Empty,
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("wrong arity for `{0}`")]
    Arity(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("type mismatch for `{0}`")]
    TypeMismatch(String),
    #[error("goal is not ground: `?{0}`")]
    NotGround(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoalCheck {
    Valid,
    Invalid(GoalIssue),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("invalid goal: {0}")]
    InvalidGoal(GoalIssue),
    #[error("initial state disagrees with the static facts the task was grounded on")]
    StaticMismatch,
    #[error(transparent)]
    Pddl(#[from] PddlError),
}

/// Type and arity checks for a ground goal. Does not reject empty goals.
pub fn validate_goal(domain: &Domain, objects: &[TypedObject], goal: &Goal) -> Result<(), PddlError> {
    let universe = domain.universe(objects);
    let table: HashMap<&str, &str> = universe
        .iter()
        .map(|o| (o.name.as_str(), o.type_name.as_str()))
        .collect();
    for (atom, _) in &goal.literals {
        let schema = domain
            .predicate(&atom.predicate)
            .ok_or_else(|| PddlError::UndeclaredPredicate(atom.predicate.clone()))?;
        check_ground_args(domain, &table, &schema.name, &schema.parameters, &atom.args)?;
    }
    for c in &goal.numeric {
        check_ground_fluent_expr(domain, &table, &c.lhs)?;
        check_ground_fluent_expr(domain, &table, &c.rhs)?;
    }
    Ok(())
}

pub fn check_goal(domain: &Domain, objects: &[TypedObject], goal: &Goal) -> GoalCheck {
    if goal.is_empty() {
        return GoalCheck::Invalid(GoalIssue::Empty);
    }
    match validate_goal(domain, objects, goal) {
        Ok(()) => GoalCheck::Valid,
        Err(e) => GoalCheck::Invalid(goal_issue(e)),
    }
}

fn goal_issue(e: PddlError) -> GoalIssue {
    match e {
        PddlError::UndeclaredPredicate(p) => GoalIssue::UnknownPredicate(p),
        PddlError::UndeclaredFunction(f) => GoalIssue::UnknownFunction(f),
        PddlError::ArityMismatch { name, .. } => GoalIssue::Arity(name),
        PddlError::UnknownObject(o) => GoalIssue::UnknownObject(o),
        PddlError::TypeMismatch { object, .. } => GoalIssue::TypeMismatch(object),
        PddlError::NotGround(v) => GoalIssue::NotGround(v),
        other => GoalIssue::TypeMismatch(other.to_string()),
    }
}

/// Number of goal conditions not satisfied in `state`.
pub fn goal_count(state: &SymbolicState, goal: &Goal) -> usize {
    let lits = goal
        .literals
        .iter()
        .filter(|(a, pos)| state.contains(a) != *pos)
        .count();
    let nums = goal
        .numeric
        .iter()
        .filter(|c| !state.compare(c).unwrap_or(false))
        .count();
    lits + nums
}

/// One-shot convenience: ground, then search.
pub fn plan(req: &PlanRequest) -> Result<PlanResult, PlanError> {
    if let GoalCheck::Invalid(issue) = check_goal(req.domain, req.objects, req.goal) {
        return Err(PlanError::InvalidGoal(issue));
    }
    let task = GroundedTask::new(req.domain, req.objects, req.init)?;
    task.solve(req.init, req.goal, req.limits, req.mode)
}

#[derive(Debug, Clone)]
enum CExpr {
    Const(Number),
    Var(usize),
    /// Fluent no step changes; read from the search's initial state.
    Ext(FluentTerm),
    Neg(Box<CExpr>),
    Bin(ArithOp, Box<CExpr>, Box<CExpr>),
}

#[derive(Debug, Clone)]
struct CCompare {
    op: CmpOp,
    lhs: CExpr,
    rhs: CExpr,
}

#[derive(Debug, Clone)]
struct CStep {
    pre_pos: Vec<usize>,
    pre_neg: Vec<usize>,
    /// Literals over atoms no step changes (and not static predicates).
    pre_fixed: Vec<(Atom, bool)>,
    pre_num: Vec<CCompare>,
    adds: Vec<usize>,
    dels: Vec<usize>,
    num: Vec<(NumericOp, usize, CExpr)>,
}

/// A grounded domain over a fixed object set and fixed static facts,
/// reusable across searches from different dynamic states.
#[derive(Debug, Clone)]
pub struct GroundedTask {
    domain: Domain,
    objects: Vec<TypedObject>,
    static_predicates: BTreeSet<String>,
    static_atoms: BTreeSet<Atom>,
    steps: Vec<GroundStep>,
    compiled: Vec<CStep>,
    atoms: Vec<Atom>,
    atom_index: HashMap<Atom, usize>,
    fluents: Vec<FluentTerm>,
    fluent_index: HashMap<FluentTerm, usize>,
    /// Steps indexed by their first positive changeable precondition.
    triggers: Vec<Vec<usize>>,
    untriggered: Vec<usize>,
}

type Key = (Vec<u64>, Vec<Number>);

struct Compiled<'a> {
    task: &'a GroundedTask,
    init: &'a SymbolicState,
}

impl Compiled<'_> {
    fn eval(&self, e: &CExpr, vals: &[Number]) -> Result<Number, PddlError> {
        Ok(match e {
            CExpr::Const(n) => *n,
            CExpr::Var(i) => vals[*i],
            CExpr::Ext(t) => self
                .init
                .fluent(t)
                .ok_or_else(|| PddlError::MissingFluent(t.to_string()))?,
            CExpr::Neg(x) => -self.eval(x, vals)?,
            CExpr::Bin(op, l, r) => {
                let (l, r) = (self.eval(l, vals)?, self.eval(r, vals)?);
                match op {
                    ArithOp::Add => l + r,
                    ArithOp::Sub => l - r,
                    ArithOp::Mul => l * r,
                    ArithOp::Div if r == Number::from_integer(0) => return Err(PddlError::DivisionByZero),
                    ArithOp::Div => l / r,
                }
            }
        })
    }

    fn compare(&self, c: &CCompare, vals: &[Number]) -> Result<bool, PddlError> {
        Ok(c.op.eval(self.eval(&c.lhs, vals)?, self.eval(&c.rhs, vals)?))
    }

    fn fixed(&self, atom: &Atom, positive: bool) -> bool {
        let truth = if self.task.static_predicates.contains(&atom.predicate) {
            self.task.static_atoms.contains(atom)
        } else {
            self.init.contains(atom)
        };
        truth == positive
    }
}

/// True when `c` is false at the initial values and every reachable
/// state keeps it false. Only `fluent op constant` shapes (either side)
/// are analysed; anything else is assumed satisfiable.
fn never_holds(ctx: &Compiled<'_>, c: &CCompare, init_vals: &[Number], moves: &[(bool, bool)]) -> Result<bool, PddlError> {
    if ctx.compare(c, init_vals)? {
        return Ok(false);
    }
    let constant = |e: &CExpr| matches!(e, CExpr::Const(_) | CExpr::Ext(_));
    let (var, op) = match (&c.lhs, &c.rhs) {
        (CExpr::Var(i), r) if constant(r) => (*i, c.op),
        (l, CExpr::Var(i)) if constant(l) => (*i, c.op.flipped()),
        (l, r) if constant(l) && constant(r) => return Ok(true),
        _ => return Ok(false),
    };
    let (up, down) = moves[var];
    Ok(match op {
        CmpOp::Ge | CmpOp::Gt => !up,
        CmpOp::Le | CmpOp::Lt => !down,
        CmpOp::Eq => {
            let bound = match (&c.lhs, &c.rhs) {
                (CExpr::Var(_), r) => ctx.eval(r, init_vals)?,
                (l, _) => ctx.eval(l, init_vals)?,
            };
            if init_vals[var] < bound {
                !up
            } else {
                !down
            }
        }
    })
}

fn bit(bits: &[u64], i: usize) -> bool {
    bits[i / 64] >> (i % 64) & 1 == 1
}

fn set_bit(bits: &mut [u64], i: usize, on: bool) {
    if on {
        bits[i / 64] |= 1 << (i % 64);
    } else {
        bits[i / 64] &= !(1 << (i % 64));
    }
}

impl GroundedTask {
    pub fn new(domain: &Domain, objects: &[TypedObject], init: &SymbolicState) -> Result<Self, PddlError> {
        let steps = ground_pruned(domain, objects, init)?;
        let static_predicates: BTreeSet<String> = domain.static_predicates().into_iter().map(String::from).collect();
        let static_atoms = init
            .atoms
            .iter()
            .filter(|a| static_predicates.contains(&a.predicate))
            .cloned()
            .collect();

        let mut atoms = Vec::new();
        let mut atom_index = HashMap::new();
        let mut fluents = Vec::new();
        let mut fluent_index = HashMap::new();
        for s in &steps {
            for a in s.add_effects().chain(s.delete_effects()) {
                if !atom_index.contains_key(&a) {
                    atom_index.insert(a.clone(), atoms.len());
                    atoms.push(a);
                }
            }
            for e in &s.effects {
                if let Effect::Numeric { target, .. } = e {
                    let t = crate::state::ground_fluent(target)?;
                    if !fluent_index.contains_key(&t) {
                        fluent_index.insert(t.clone(), fluents.len());
                        fluents.push(t);
                    }
                }
            }
        }

        let mut task = GroundedTask {
            domain: domain.clone(),
            objects: objects.to_vec(),
            static_predicates,
            static_atoms,
            steps: Vec::new(),
            compiled: Vec::new(),
            atoms,
            atom_index,
            fluents,
            fluent_index,
            triggers: Vec::new(),
            untriggered: Vec::new(),
        };
        let mut compiled = Vec::with_capacity(steps.len());
        for s in &steps {
            compiled.push(task.compile_step(s)?);
        }
        let mut triggers = vec![Vec::new(); task.atoms.len()];
        let mut untriggered = Vec::new();
        for (i, c) in compiled.iter().enumerate() {
            match c.pre_pos.first() {
                Some(&a) => triggers[a].push(i),
                None => untriggered.push(i),
            }
        }
        task.steps = steps;
        task.compiled = compiled;
        task.triggers = triggers;
        task.untriggered = untriggered;
        Ok(task)
    }

    pub fn steps(&self) -> &[GroundStep] {
        &self.steps
    }

    pub fn objects(&self) -> &[TypedObject] {
        &self.objects
    }

    /// True when `init` has the static facts this task was grounded for.
    pub fn matches_statics(&self, init: &SymbolicState) -> bool {
        let mut n = 0;
        for a in &init.atoms {
            if self.static_predicates.contains(&a.predicate) {
                if !self.static_atoms.contains(a) {
                    return false;
                }
                n += 1;
            }
        }
        n == self.static_atoms.len()
    }

    fn compile_expr(&self, e: &Expr) -> Result<CExpr, PddlError> {
        Ok(match e {
            Expr::Number(n) => CExpr::Const(*n),
            Expr::Fluent(f) => {
                let t = crate::state::ground_fluent(f)?;
                match self.fluent_index.get(&t) {
                    Some(&i) => CExpr::Var(i),
                    None => CExpr::Ext(t),
                }
            }
            Expr::Neg(x) => CExpr::Neg(Box::new(self.compile_expr(x)?)),
            Expr::Binary(op, l, r) => CExpr::Bin(*op, Box::new(self.compile_expr(l)?), Box::new(self.compile_expr(r)?)),
        })
    }

    fn compile_step(&self, s: &GroundStep) -> Result<CStep, PddlError> {
        let mut c = CStep {
            pre_pos: Vec::new(),
            pre_neg: Vec::new(),
            pre_fixed: Vec::new(),
            pre_num: Vec::new(),
            adds: Vec::new(),
            dels: Vec::new(),
            num: Vec::new(),
        };
        for leaf in s.precondition.leaves() {
            match leaf {
                Condition::Atom(a) | Condition::Not(a) => {
                    let positive = matches!(leaf, Condition::Atom(_));
                    let atom = crate::state::ground_atom(a)?;
                    if self.static_predicates.contains(&atom.predicate) {
                        // Grounding already enforced these.
                        continue;
                    }
                    match (self.atom_index.get(&atom), positive) {
                        (Some(&i), true) => c.pre_pos.push(i),
                        (Some(&i), false) => c.pre_neg.push(i),
                        (None, _) => c.pre_fixed.push((atom, positive)),
                    }
                }
                Condition::Compare(cmp) => c.pre_num.push(CCompare {
                    op: cmp.op,
                    lhs: self.compile_expr(&cmp.lhs)?,
                    rhs: self.compile_expr(&cmp.rhs)?,
                }),
                Condition::And(_) => unreachable!(),
            }
        }
        for e in &s.effects {
            match e {
                Effect::Add(a) => c.adds.push(self.atom_index[&crate::state::ground_atom(a)?]),
                Effect::Delete(a) => c.dels.push(self.atom_index[&crate::state::ground_atom(a)?]),
                Effect::Numeric { op, target, value } => {
                    let t = crate::state::ground_fluent(target)?;
                    c.num.push((*op, self.fluent_index[&t], self.compile_expr(value)?));
                }
            }
        }
        Ok(c)
    }

    fn encode(&self, state: &SymbolicState) -> Result<Key, PddlError> {
        let mut bits = vec![0u64; self.atoms.len().div_ceil(64)];
        for (i, a) in self.atoms.iter().enumerate() {
            if state.contains(a) {
                set_bit(&mut bits, i, true);
            }
        }
        let vals = self
            .fluents
            .iter()
            .map(|t| state.fluent(t).ok_or_else(|| PddlError::MissingFluent(t.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((bits, vals))
    }

    /// Disables steps whose numeric precondition is false at `init` and
    /// can never turn true, because no live step moves its fluent in the
    /// needed direction. Iterates to a fixpoint and returns the final
    /// per-fluent (can increase, can decrease) table.
    fn prune_monotone(
        &self,
        ctx: &Compiled<'_>,
        enabled: &mut [bool],
        init_vals: &[Number],
    ) -> Result<Vec<(bool, bool)>, PddlError> {
        loop {
            let mut moves = vec![(false, false); self.fluents.len()];
            for (step, _) in self.compiled.iter().zip(enabled.iter()).filter(|(_, on)| **on) {
                for (op, target, value) in &step.num {
                    let m = &mut moves[*target];
                    let sign = match value {
                        CExpr::Const(c) => Some(c.cmp(&Number::from_integer(0))),
                        _ => None,
                    };
                    match (op, sign) {
                        (_, Some(Ordering::Equal)) => {}
                        (NumericOp::Increase, Some(Ordering::Greater)) | (NumericOp::Decrease, Some(Ordering::Less)) => m.0 = true,
                        (NumericOp::Increase, Some(Ordering::Less)) | (NumericOp::Decrease, Some(Ordering::Greater)) => m.1 = true,
                        _ => *m = (true, true),
                    }
                }
            }
            let mut changed = false;
            for (i, step) in self.compiled.iter().enumerate() {
                if !enabled[i] {
                    continue;
                }
                for c in &step.pre_num {
                    if never_holds(ctx, c, init_vals, &moves)? {
                        enabled[i] = false;
                        changed = true;
                        break;
                    }
                }
            }
            if !changed {
                return Ok(moves);
            }
        }
    }

    /// Searches from `init` for a state satisfying `goal`.
    pub fn solve(
        &self,
        init: &SymbolicState,
        goal: &Goal,
        limits: PlanLimits,
        mode: SearchMode,
    ) -> Result<PlanResult, PlanError> {
        let started = Instant::now();
        if let GoalCheck::Invalid(issue) = check_goal(&self.domain, &self.objects, goal) {
            return Err(PlanError::InvalidGoal(issue));
        }
        if !self.matches_statics(init) {
            return Err(PlanError::StaticMismatch);
        }
        let ctx = Compiled { task: self, init };

        // Goal conditions over atoms that never change are decided up front.
        let mut goal_pos = Vec::new();
        let mut goal_neg = Vec::new();
        let mut fixed_ok = true;
        for (atom, positive) in &goal.literals {
            match self.atom_index.get(atom) {
                Some(&i) if *positive => goal_pos.push(i),
                Some(&i) => goal_neg.push(i),
                None => fixed_ok &= ctx.fixed(atom, *positive),
            }
        }
        let goal_num = goal
            .numeric
            .iter()
            .map(|c| {
                Ok(CCompare {
                    op: c.op,
                    lhs: self.compile_expr(&c.lhs)?,
                    rhs: self.compile_expr(&c.rhs)?,
                })
            })
            .collect::<Result<Vec<_>, PddlError>>()?;
        // A goal fluent outside the state must at least have a value.
        for c in &goal.numeric {
            for f in expr_fluents(&c.lhs).into_iter().chain(expr_fluents(&c.rhs)) {
                let t = crate::state::ground_fluent(f)?;
                if !self.fluent_index.contains_key(&t) && init.fluent(&t).is_none() {
                    return Err(PddlError::MissingFluent(t.to_string()).into());
                }
            }
        }

        let mut enabled: Vec<bool> = self
            .compiled
            .iter()
            .map(|c| c.pre_fixed.iter().all(|(a, p)| ctx.fixed(a, *p)))
            .collect();
        let start = self.encode(init)?;
        let moves = self.prune_monotone(&ctx, &mut enabled, &start.1)?;
        for c in &goal_num {
            fixed_ok &= !never_holds(&ctx, c, &start.1, &moves)?;
        }

        let mut stats = SearchStats {
            grounded_steps: self.steps.len(),
            ..SearchStats::default()
        };
        let finish = |outcome: PlanOutcome, mut stats: SearchStats| {
            stats.elapsed_ms = started.elapsed().as_millis() as u64;
            Ok(PlanResult { outcome, stats })
        };
        if !fixed_ok {
            return finish(PlanOutcome::Unsolvable, stats);
        }

        let unmet = |key: &Key| -> Result<usize, PddlError> {
            let mut n = goal_pos.iter().filter(|&&i| !bit(&key.0, i)).count();
            n += goal_neg.iter().filter(|&&i| bit(&key.0, i)).count();
            for c in &goal_num {
                if !ctx.compare(c, &key.1)? {
                    n += 1;
                }
            }
            Ok(n)
        };

        let mut keys: Vec<Key> = vec![start.clone()];
        let mut parents: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX)];
        let mut seen: HashMap<Key, usize> = HashMap::new();
        seen.insert(start.clone(), 0);
        if unmet(&start)? == 0 {
            return finish(PlanOutcome::Found { steps: Vec::new(), cost: 0 }, stats);
        }

        let mut fifo = VecDeque::new();
        let mut heap = BinaryHeap::new();
        let mut seq = 0usize;
        match mode {
            SearchMode::Optimal => fifo.push_back(0usize),
            SearchMode::Greedy => heap.push(Reverse((unmet(&start)?, seq, 0usize))),
        }
        let deadline = limits.wall_clock_ms.map(|ms| started + Duration::from_millis(ms));
        let mut candidates = Vec::new();

        loop {
            let node = match mode {
                SearchMode::Optimal => fifo.pop_front(),
                SearchMode::Greedy => heap.pop().map(|Reverse((_, _, n))| n),
            };
            let Some(node) = node else {
                return finish(PlanOutcome::Unsolvable, stats);
            };
            if stats.expanded >= limits.max_expanded_nodes {
                return finish(PlanOutcome::LimitReached, stats);
            }
            if let Some(d) = deadline {
                if stats.expanded.is_multiple_of(256) && Instant::now() >= d {
                    return finish(PlanOutcome::LimitReached, stats);
                }
            }
            stats.expanded += 1;

            candidates.clear();
            candidates.extend_from_slice(&self.untriggered);
            for (i, list) in self.triggers.iter().enumerate() {
                if bit(&keys[node].0, i) {
                    candidates.extend_from_slice(list);
                }
            }
            candidates.sort_unstable();

            for &si in &candidates {
                if !enabled[si] {
                    continue;
                }
                let step = &self.compiled[si];
                let (bits, vals) = &keys[node];
                if !step.pre_pos.iter().all(|&i| bit(bits, i)) || step.pre_neg.iter().any(|&i| bit(bits, i)) {
                    continue;
                }
                let mut ok = true;
                for c in &step.pre_num {
                    if !ctx.compare(c, vals)? {
                        ok = false;
                        break;
                    }
                }
                if !ok {
                    continue;
                }
                let mut next_bits = bits.clone();
                for &d in &step.dels {
                    set_bit(&mut next_bits, d, false);
                }
                for &a in &step.adds {
                    set_bit(&mut next_bits, a, true);
                }
                let mut next_vals = vals.clone();
                for (op, target, value) in &step.num {
                    let rhs = ctx.eval(value, vals)?;
                    next_vals[*target] = match op {
                        NumericOp::Assign => rhs,
                        NumericOp::Increase => vals[*target] + rhs,
                        NumericOp::Decrease => vals[*target] - rhs,
                    };
                }
                let key = (next_bits, next_vals);
                if seen.contains_key(&key) {
                    continue;
                }
                stats.generated += 1;
                let id = keys.len();
                seen.insert(key.clone(), id);
                parents.push((node, si));
                let h = unmet(&key)?;
                keys.push(key);
                if h == 0 {
                    let mut path = Vec::new();
                    let mut cur = id;
                    while parents[cur].0 != usize::MAX {
                        path.push(self.steps[parents[cur].1].clone());
                        cur = parents[cur].0;
                    }
                    path.reverse();
                    let cost = path.len();
                    return finish(PlanOutcome::Found { steps: path, cost }, stats);
                }
                match mode {
                    SearchMode::Optimal => fifo.push_back(id),
                    SearchMode::Greedy => {
                        seq += 1;
                        heap.push(Reverse((h, seq, id)));
                    }
                }
            }
        }
    }
}
