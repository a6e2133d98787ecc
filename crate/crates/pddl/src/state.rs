//! Ground atoms, symbolic states, goals and their evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::Zero;

use crate::error::{PddlError, Result};
use crate::model::{
    ArithOp, AtomExpr, CmpOp, Comparison, Condition, Effect, Expr, FluentExpr, Number, NumericOp, Term,
    TypedObject,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new<S: AsRef<str>>(predicate: &str, args: &[S]) -> Self {
        Self {
            predicate: predicate.to_string(),
            args: args.iter().map(|a| a.as_ref().to_string()).collect(),
        }
    }

    pub fn to_expr(&self) -> AtomExpr {
        AtomExpr {
            predicate: self.predicate.clone(),
            args: self.args.iter().map(|a| Term::Const(a.clone())).collect(),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

/// A ground function term such as `(trees-in room_0_1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FluentTerm {
    pub function: String,
    pub args: Vec<String>,
}

impl FluentTerm {
    pub fn new<S: AsRef<str>>(function: &str, args: &[S]) -> Self {
        Self {
            function: function.to_string(),
            args: args.iter().map(|a| a.as_ref().to_string()).collect(),
        }
    }

    pub fn to_expr(&self) -> FluentExpr {
        FluentExpr {
            function: self.function.clone(),
            args: self.args.iter().map(|a| Term::Const(a.clone())).collect(),
        }
    }
}

impl fmt::Display for FluentTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.function)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn ground_atom(a: &AtomExpr) -> Result<Atom> {
    Ok(Atom {
        predicate: a.predicate.clone(),
        args: ground_terms(&a.args)?,
    })
}

pub(crate) fn ground_fluent(f: &FluentExpr) -> Result<FluentTerm> {
    Ok(FluentTerm {
        function: f.function.clone(),
        args: ground_terms(&f.args)?,
    })
}

fn ground_terms(terms: &[Term]) -> Result<Vec<String>> {
    terms
        .iter()
        .map(|t| match t {
            Term::Const(c) => Ok(c.clone()),
            Term::Var(v) => Err(PddlError::NotGround(v.clone())),
        })
        .collect()
}

/// Closed-world symbolic state: absent atoms are false.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SymbolicState {
    pub atoms: BTreeSet<Atom>,
    pub fluents: BTreeMap<FluentTerm, Number>,
}

impl SymbolicState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.atoms.contains(atom)
    }

    pub fn insert(&mut self, atom: Atom) {
        self.atoms.insert(atom);
    }

    pub fn set_fluent(&mut self, term: FluentTerm, value: Number) {
        self.fluents.insert(term, value);
    }

    pub fn fluent(&self, term: &FluentTerm) -> Option<Number> {
        self.fluents.get(term).copied()
    }

    pub fn eval(&self, expr: &Expr) -> Result<Number> {
        match expr {
            Expr::Number(n) => Ok(*n),
            Expr::Fluent(f) => {
                let term = ground_fluent(f)?;
                self.fluent(&term)
                    .ok_or_else(|| PddlError::MissingFluent(term.to_string()))
            }
            Expr::Neg(e) => Ok(-self.eval(e)?),
            Expr::Binary(op, l, r) => {
                let (l, r) = (self.eval(l)?, self.eval(r)?);
                match op {
                    ArithOp::Add => Ok(l + r),
                    ArithOp::Sub => Ok(l - r),
                    ArithOp::Mul => Ok(l * r),
                    ArithOp::Div if r.is_zero() => Err(PddlError::DivisionByZero),
                    ArithOp::Div => Ok(l / r),
                }
            }
        }
    }

    pub fn compare(&self, c: &Comparison) -> Result<bool> {
        Ok(c.op.eval(self.eval(&c.lhs)?, self.eval(&c.rhs)?))
    }

    /// Truth of a ground condition under closed-world semantics.
    pub fn holds(&self, cond: &Condition) -> Result<bool> {
        match cond {
            Condition::And(cs) => {
                for c in cs {
                    if !self.holds(c)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Condition::Atom(a) => Ok(self.contains(&ground_atom(a)?)),
            Condition::Not(a) => Ok(!self.contains(&ground_atom(a)?)),
            Condition::Compare(c) => self.compare(c),
        }
    }

    pub fn holds_goal(&self, goal: &Goal) -> Result<bool> {
        for (atom, positive) in &goal.literals {
            if self.contains(atom) != *positive {
                return Ok(false);
            }
        }
        for c in &goal.numeric {
            if !self.compare(c)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Applies `step` to a copy of this state. Deletes precede adds; numeric
    /// right-hand sides are all read from the pre-state.
    pub fn apply(&self, step: &GroundStep) -> Result<SymbolicState> {
        if !self.holds(&step.precondition)? {
            return Err(PddlError::Inapplicable {
                step: step.to_string(),
            });
        }
        self.apply_effects(&step.effects)
    }

    pub(crate) fn apply_effects(&self, effects: &[Effect]) -> Result<SymbolicState> {
        let mut numeric = Vec::new();
        for e in effects {
            if let Effect::Numeric { op, target, value } = e {
                let term = ground_fluent(target)?;
                let rhs = self.eval(value)?;
                let new = match op {
                    NumericOp::Assign => rhs,
                    NumericOp::Increase | NumericOp::Decrease => {
                        let cur = self
                            .fluent(&term)
                            .ok_or_else(|| PddlError::MissingFluent(term.to_string()))?;
                        if *op == NumericOp::Increase {
                            cur + rhs
                        } else {
                            cur - rhs
                        }
                    }
                };
                numeric.push((term, new));
            }
        }
        let mut next = self.clone();
        for e in effects {
            if let Effect::Delete(a) = e {
                next.atoms.remove(&ground_atom(a)?);
            }
        }
        for e in effects {
            if let Effect::Add(a) = e {
                next.atoms.insert(ground_atom(a)?);
            }
        }
        for (term, value) in numeric {
            next.fluents.insert(term, value);
        }
        Ok(next)
    }
}

/// Conjunctive goal: literals plus numeric comparisons over ground fluents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Goal {
    pub literals: Vec<(Atom, bool)>,
    pub numeric: Vec<Comparison>,
}

impl Goal {
    pub fn atom(atom: Atom) -> Self {
        Goal {
            literals: vec![(atom, true)],
            numeric: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty() && self.numeric.is_empty()
    }

    pub fn len(&self) -> usize {
        self.literals.len() + self.numeric.len()
    }

    pub fn with_literal(mut self, atom: Atom, positive: bool) -> Self {
        self.literals.push((atom, positive));
        self
    }

    pub fn with_numeric(mut self, cmp: Comparison) -> Self {
        self.numeric.push(cmp);
        self
    }

    /// `(op (function args..) value)` over a ground fluent.
    pub fn fluent_cmp(term: &FluentTerm, op: CmpOp, value: i64) -> Comparison {
        Comparison {
            op,
            lhs: Expr::Fluent(term.to_expr()),
            rhs: Expr::Number(Number::from_integer(value)),
        }
    }

    pub fn to_condition(&self) -> Condition {
        let mut parts: Vec<Condition> = self
            .literals
            .iter()
            .map(|(a, pos)| {
                if *pos {
                    Condition::Atom(a.to_expr())
                } else {
                    Condition::Not(a.to_expr())
                }
            })
            .collect();
        parts.extend(self.numeric.iter().cloned().map(Condition::Compare));
        Condition::And(parts)
    }
}

/// A grounded operator: the symbolic step handed to the controller.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundStep {
    pub operator: String,
    pub args: Vec<String>,
    pub precondition: Condition,
    pub effects: Vec<Effect>,
}

impl GroundStep {
    pub fn add_effects(&self) -> impl Iterator<Item = Atom> + '_ {
        self.effects.iter().filter_map(|e| match e {
            Effect::Add(a) => ground_atom(a).ok(),
            _ => None,
        })
    }

    pub fn delete_effects(&self) -> impl Iterator<Item = Atom> + '_ {
        self.effects.iter().filter_map(|e| match e {
            Effect::Delete(a) => ground_atom(a).ok(),
            _ => None,
        })
    }

    /// Ground numeric effects as (op, target, value) with the value evaluated in `state`.
    pub fn numeric_effects(&self, state: &SymbolicState) -> Result<Vec<(NumericOp, FluentTerm, Number)>> {
        let mut out = Vec::new();
        for e in &self.effects {
            if let Effect::Numeric { op, target, value } = e {
                out.push((*op, ground_fluent(target)?, state.eval(value)?));
            }
        }
        Ok(out)
    }
}

impl fmt::Display for GroundStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.operator)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

/// Objects, initial state and goal of one planning instance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Problem {
    pub name: String,
    pub domain: String,
    pub objects: Vec<TypedObject>,
    pub init: SymbolicState,
    pub goal: Goal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanValidation {
    pub valid: bool,
    pub final_state: SymbolicState,
    /// Index of the first inapplicable step, if any.
    pub failed_at: Option<usize>,
}

/// Replays `plan` from `init` and checks `goal` in the final state.
pub fn simulate_plan(init: &SymbolicState, plan: &[GroundStep], goal: &Goal) -> PlanValidation {
    let mut state = init.clone();
    for (i, step) in plan.iter().enumerate() {
        match state.apply(step) {
            Ok(next) => state = next,
            Err(_) => {
                return PlanValidation {
                    valid: false,
                    final_state: state,
                    failed_at: Some(i),
                }
            }
        }
    }
    let valid = state.holds_goal(goal).unwrap_or(false);
    PlanValidation {
        valid,
        final_state: state,
        failed_at: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(v: i64) -> Number {
        Number::from_integer(v)
    }

    fn at(cell: &str) -> Atom {
        Atom::new("at", &["taxi", cell])
    }

    #[test]
    fn positive_atom_holds() {
        let mut s = SymbolicState::new();
        s.insert(at("c22"));
        assert!(s.holds(&Condition::Atom(at("c22").to_expr())).unwrap());
    }

    #[test]
    fn closed_world_negation() {
        let mut s = SymbolicState::new();
        s.insert(at("c22"));
        assert!(s.holds(&Condition::Not(at("c00").to_expr())).unwrap());
    }

    #[test]
    fn numeric_conjunction_evaluated_exactly() {
        let mut s = SymbolicState::new();
        let wood = FluentTerm::new::<&str>("wood", &[]);
        s.set_fluent(wood.clone(), n(3));
        let cond = Condition::And(vec![
            Condition::Compare(Goal::fluent_cmp(&wood, CmpOp::Ge, 2)),
            Condition::Compare(Goal::fluent_cmp(&wood, CmpOp::Lt, 3)),
        ]);
        assert!(!s.holds(&cond).unwrap());
    }

    #[test]
    fn missing_fluent_is_an_error() {
        let s = SymbolicState::new();
        let wood = FluentTerm::new::<&str>("wood", &[]);
        let err = s
            .holds(&Condition::Compare(Goal::fluent_cmp(&wood, CmpOp::Ge, 1)))
            .unwrap_err();
        assert!(matches!(err, PddlError::MissingFluent(_)));
    }

    #[test]
    fn variables_are_rejected() {
        let s = SymbolicState::new();
        let cond = Condition::Atom(AtomExpr {
            predicate: "at".into(),
            args: vec![Term::var("x")],
        });
        assert_eq!(s.holds(&cond), Err(PddlError::NotGround("x".into())));
    }

    #[test]
    fn empty_effects_are_identity() {
        let mut s = SymbolicState::new();
        s.insert(at("c00"));
        let step = GroundStep {
            operator: "wait".into(),
            args: vec![],
            precondition: Condition::And(vec![]),
            effects: vec![],
        };
        assert_eq!(s.apply(&step).unwrap(), s);
    }

    #[test]
    fn inapplicable_step_is_reported() {
        let s = SymbolicState::new();
        let step = GroundStep {
            operator: "go".into(),
            args: vec![],
            precondition: Condition::Atom(at("c00").to_expr()),
            effects: vec![],
        };
        assert!(matches!(s.apply(&step), Err(PddlError::Inapplicable { .. })));
    }

    #[test]
    fn delete_then_add_keeps_readded_atom() {
        let mut s = SymbolicState::new();
        s.insert(at("c00"));
        let step = GroundStep {
            operator: "stay".into(),
            args: vec![],
            precondition: Condition::And(vec![]),
            effects: vec![Effect::Add(at("c00").to_expr()), Effect::Delete(at("c00").to_expr())],
        };
        assert!(s.apply(&step).unwrap().contains(&at("c00")));
    }

    #[test]
    fn numeric_effects_read_pre_state() {
        let x = FluentTerm::new::<&str>("x", &[]);
        let y = FluentTerm::new::<&str>("y", &[]);
        let mut s = SymbolicState::new();
        s.set_fluent(x.clone(), n(1));
        s.set_fluent(y.clone(), n(10));
        // x := y, y := x  swaps under atomic semantics.
        let step = GroundStep {
            operator: "swap".into(),
            args: vec![],
            precondition: Condition::And(vec![]),
            effects: vec![
                Effect::Numeric {
                    op: NumericOp::Assign,
                    target: x.to_expr(),
                    value: Expr::Fluent(y.to_expr()),
                },
                Effect::Numeric {
                    op: NumericOp::Assign,
                    target: y.to_expr(),
                    value: Expr::Fluent(x.to_expr()),
                },
            ],
        };
        let next = s.apply(&step).unwrap();
        assert_eq!(next.fluent(&x), Some(n(10)));
        assert_eq!(next.fluent(&y), Some(n(1)));
        assert_eq!(s.fluent(&x), Some(n(1)));
    }

    #[test]
    fn empty_plan_validation() {
        let mut s = SymbolicState::new();
        s.insert(at("c00"));
        assert!(simulate_plan(&s, &[], &Goal::atom(at("c00"))).valid);
        assert!(!simulate_plan(&s, &[], &Goal::atom(at("c11"))).valid);
    }
}
