//! Operator grounding.

use std::collections::{BTreeSet, HashMap};

use crate::error::{PddlError, Result};
use crate::model::*;
use crate::state::{Atom, GroundStep, SymbolicState};

type Binding<'a> = HashMap<&'a str, &'a str>;

fn subst_term(t: &Term, binding: &Binding) -> Result<Term> {
    match t {
        Term::Const(_) => Ok(t.clone()),
        Term::Var(v) => binding
            .get(v.as_str())
            .map(|c| Term::Const(c.to_string()))
            .ok_or_else(|| PddlError::NotGround(v.clone())),
    }
}

fn subst_atom(a: &AtomExpr, binding: &Binding) -> Result<AtomExpr> {
    Ok(AtomExpr {
        predicate: a.predicate.clone(),
        args: a.args.iter().map(|t| subst_term(t, binding)).collect::<Result<_>>()?,
    })
}

fn subst_fluent(f: &FluentExpr, binding: &Binding) -> Result<FluentExpr> {
    Ok(FluentExpr {
        function: f.function.clone(),
        args: f.args.iter().map(|t| subst_term(t, binding)).collect::<Result<_>>()?,
    })
}

fn subst_expr(e: &Expr, binding: &Binding) -> Result<Expr> {
    Ok(match e {
        Expr::Number(n) => Expr::Number(*n),
        Expr::Fluent(f) => Expr::Fluent(subst_fluent(f, binding)?),
        Expr::Neg(x) => Expr::Neg(Box::new(subst_expr(x, binding)?)),
        Expr::Binary(op, l, r) => Expr::Binary(*op, Box::new(subst_expr(l, binding)?), Box::new(subst_expr(r, binding)?)),
    })
}

fn subst_condition(c: &Condition, binding: &Binding) -> Result<Condition> {
    Ok(match c {
        Condition::And(cs) => Condition::And(cs.iter().map(|c| subst_condition(c, binding)).collect::<Result<_>>()?),
        Condition::Atom(a) => Condition::Atom(subst_atom(a, binding)?),
        Condition::Not(a) => Condition::Not(subst_atom(a, binding)?),
        Condition::Compare(cmp) => Condition::Compare(Comparison {
            op: cmp.op,
            lhs: subst_expr(&cmp.lhs, binding)?,
            rhs: subst_expr(&cmp.rhs, binding)?,
        }),
    })
}

fn subst_effect(e: &Effect, binding: &Binding) -> Result<Effect> {
    Ok(match e {
        Effect::Add(a) => Effect::Add(subst_atom(a, binding)?),
        Effect::Delete(a) => Effect::Delete(subst_atom(a, binding)?),
        Effect::Numeric { op, target, value } => Effect::Numeric {
            op: *op,
            target: subst_fluent(target, binding)?,
            value: subst_expr(value, binding)?,
        },
    })
}

/// Instantiates `op` with `args` (one object name per parameter).
pub fn instantiate(op: &OperatorSchema, args: &[String]) -> Result<GroundStep> {
    if args.len() != op.parameters.len() {
        return Err(PddlError::ArityMismatch {
            name: op.name.clone(),
            expected: op.parameters.len(),
            found: args.len(),
        });
    }
    let binding: Binding = op
        .parameters
        .iter()
        .zip(args)
        .map(|(p, a)| (p.name.as_str(), a.as_str()))
        .collect();
    Ok(GroundStep {
        operator: op.name.clone(),
        args: args.to_vec(),
        precondition: subst_condition(&op.precondition, &binding)?,
        effects: op.effects.iter().map(|e| subst_effect(e, &binding)).collect::<Result<_>>()?,
    })
}

fn candidates<'a>(domain: &Domain, universe: &'a [TypedObject], type_name: &str) -> Vec<&'a str> {
    universe
        .iter()
        .filter(|o| domain.is_subtype(&o.type_name, type_name))
        .map(|o| o.name.as_str())
        .collect()
}

/// Every type-consistent instantiation of every operator over the domain
/// constants plus `objects`, sorted by operator name then arguments.
pub fn ground(domain: &Domain, objects: &[TypedObject]) -> Result<Vec<GroundStep>> {
    let universe = domain.universe(objects);
    let mut out = Vec::new();
    for op in &domain.operators {
        let pools: Vec<Vec<&str>> = op
            .parameters
            .iter()
            .map(|p| candidates(domain, &universe, &p.type_name))
            .collect();
        if pools.iter().any(Vec::is_empty) {
            continue;
        }
        let mut idx = vec![0usize; pools.len()];
        'odometer: loop {
            let args: Vec<String> = idx.iter().zip(&pools).map(|(&i, pool)| pool[i].to_string()).collect();
            out.push(instantiate(op, &args)?);
            let mut pos = pools.len();
            loop {
                if pos == 0 {
                    break 'odometer;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < pools[pos].len() {
                    continue 'odometer;
                }
                idx[pos] = 0;
            }
        }
    }
    sort_steps(&mut out);
    Ok(out)
}

pub(crate) fn sort_steps(steps: &mut [GroundStep]) {
    steps.sort_by(|a, b| a.operator.cmp(&b.operator).then_with(|| a.args.cmp(&b.args)));
}

/// Grounding restricted to bindings whose static preconditions hold in
/// `init`. Static atoms are those of predicates no operator changes.
pub fn ground_pruned(domain: &Domain, objects: &[TypedObject], init: &SymbolicState) -> Result<Vec<GroundStep>> {
    let universe = domain.universe(objects);
    let statics: BTreeSet<&str> = domain.static_predicates().into_iter().collect();

    let mut by_pred: HashMap<&str, Vec<&Atom>> = HashMap::new();
    let mut by_slot: HashMap<(&str, usize, &str), Vec<&Atom>> = HashMap::new();
    for a in &init.atoms {
        if !statics.contains(a.predicate.as_str()) {
            continue;
        }
        by_pred.entry(&a.predicate).or_default().push(a);
        for (i, arg) in a.args.iter().enumerate() {
            by_slot.entry((&a.predicate, i, arg)).or_default().push(a);
        }
    }
    let index = StaticIndex {
        init,
        by_pred,
        by_slot,
    };

    let mut out = Vec::new();
    for op in &domain.operators {
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        for leaf in op.precondition.leaves() {
            match leaf {
                Condition::Atom(a) if statics.contains(a.predicate.as_str()) => positive.push(a),
                Condition::Not(a) if statics.contains(a.predicate.as_str()) => negative.push(a),
                _ => {}
            }
        }
        let pools: Vec<Vec<&str>> = op
            .parameters
            .iter()
            .map(|p| candidates(domain, &universe, &p.type_name))
            .collect();
        let mut search = PrunedSearch {
            op,
            index: &index,
            positive: &positive,
            negative: &negative,
            pools: &pools,
            binding: HashMap::new(),
            out: &mut out,
        };
        search.extend(0)?;
    }
    sort_steps(&mut out);
    Ok(out)
}

struct StaticIndex<'a> {
    init: &'a SymbolicState,
    by_pred: HashMap<&'a str, Vec<&'a Atom>>,
    by_slot: HashMap<(&'a str, usize, &'a str), Vec<&'a Atom>>,
}

enum Check {
    True,
    False,
    Unbound,
}

struct PrunedSearch<'a, 'b> {
    op: &'a OperatorSchema,
    index: &'b StaticIndex<'a>,
    positive: &'b [&'a AtomExpr],
    negative: &'b [&'a AtomExpr],
    pools: &'b [Vec<&'a str>],
    binding: Binding<'a>,
    out: &'b mut Vec<GroundStep>,
}

impl<'a> PrunedSearch<'a, '_> {
    fn resolve(&self, t: &'a Term) -> Option<&'a str> {
        match t {
            Term::Const(c) => Some(c),
            Term::Var(v) => self.binding.get(v.as_str()).copied(),
        }
    }

    fn check(&self, a: &'a AtomExpr) -> Check {
        let mut args = Vec::with_capacity(a.args.len());
        for t in &a.args {
            match self.resolve(t) {
                Some(c) => args.push(c.to_string()),
                None => return Check::Unbound,
            }
        }
        let atom = Atom {
            predicate: a.predicate.clone(),
            args,
        };
        if self.index.init.contains(&atom) {
            Check::True
        } else {
            Check::False
        }
    }

    fn consistent(&self) -> bool {
        self.positive.iter().all(|a| !matches!(self.check(a), Check::False))
            && self.negative.iter().all(|a| !matches!(self.check(a), Check::True))
    }

    /// Values for `var` allowed by a static atom in which it is the only
    /// unbound variable, if there is one.
    fn restricted(&self, var: &str) -> Option<BTreeSet<&'a str>> {
        let mut best: Option<BTreeSet<&'a str>> = None;
        for a in self.positive {
            let mentions = a.args.iter().any(|t| matches!(t, Term::Var(v) if v == var));
            let others_bound = a
                .args
                .iter()
                .all(|t| matches!(t, Term::Var(v) if v == var) || self.resolve(t).is_some());
            if !mentions || !others_bound {
                continue;
            }
            let bound_slot = a
                .args
                .iter()
                .enumerate()
                .find_map(|(i, t)| match t {
                    Term::Var(v) if v == var => None,
                    t => self.resolve(t).map(|c| (i, c)),
                });
            let empty = Vec::new();
            let source = match bound_slot {
                Some((i, c)) => self.index.by_slot.get(&(a.predicate.as_str(), i, c)).unwrap_or(&empty),
                None => self.index.by_pred.get(a.predicate.as_str()).unwrap_or(&empty),
            };
            let mut values = BTreeSet::new();
            'atoms: for atom in source {
                let mut value: Option<&'a str> = None;
                for (t, arg) in a.args.iter().zip(&atom.args) {
                    match t {
                        Term::Var(v) if v == var => match value {
                            Some(prev) if prev != arg => continue 'atoms,
                            _ => value = Some(arg.as_str()),
                        },
                        t => {
                            if self.resolve(t) != Some(arg.as_str()) {
                                continue 'atoms;
                            }
                        }
                    }
                }
                if let Some(v) = value {
                    values.insert(v);
                }
            }
            best = Some(match best {
                Some(prev) => prev.intersection(&values).copied().collect(),
                None => values,
            });
        }
        best
    }

    fn extend(&mut self, depth: usize) -> Result<()> {
        if depth == self.op.parameters.len() {
            let args: Vec<String> = self
                .op
                .parameters
                .iter()
                .map(|p| self.binding[p.name.as_str()].to_string())
                .collect();
            self.out.push(instantiate(self.op, &args)?);
            return Ok(());
        }
        let var = self.op.parameters[depth].name.as_str();
        let pool = &self.pools[depth];
        let values: Vec<&'a str> = match self.restricted(var) {
            Some(allowed) => pool.iter().copied().filter(|v| allowed.contains(v)).collect(),
            None => pool.clone(),
        };
        for v in values {
            self.binding.insert(var, v);
            if self.consistent() {
                self.extend(depth + 1)?;
            }
            self.binding.remove(var);
        }
        Ok(())
    }
}
