//! PDDL writer. Output is accepted by [`crate::parse`] and parses back to an
//! equal model.

use std::fmt::Write;

use num_traits::{One, Signed};

use crate::model::*;
use crate::state::{Goal, Problem, SymbolicState};

/// Formats an exact number. Terminating decimals are written as decimals;
/// anything else becomes `(/ p q)`.
pub fn number_to_string(n: &Number) -> String {
    if n.denom().is_one() {
        return n.numer().to_string();
    }
    let mut d = *n.denom();
    let (mut twos, mut fives) = (0u32, 0u32);
    while d % 2 == 0 {
        d /= 2;
        twos += 1;
    }
    while d % 5 == 0 {
        d /= 5;
        fives += 1;
    }
    if d == 1 {
        let digits = twos.max(fives);
        if let Some(scale) = 10i64.checked_pow(digits) {
            if let Some(scaled) = n.numer().checked_mul(scale / n.denom()) {
                let sign = if n.is_negative() { "-" } else { "" };
                let abs = scaled.abs();
                let int = abs / scale;
                let frac = abs % scale;
                return format!("{sign}{int}.{frac:0width$}", width = digits as usize);
            }
        }
    }
    format!("(/ {} {})", n.numer(), n.denom())
}

fn term(t: &Term) -> String {
    match t {
        Term::Var(v) => format!("?{v}"),
        Term::Const(c) => c.clone(),
    }
}

fn application(head: &str, args: &[Term]) -> String {
    let mut s = format!("({head}");
    for a in args {
        s.push(' ');
        s.push_str(&term(a));
    }
    s.push(')');
    s
}

pub fn expr_to_string(e: &Expr) -> String {
    match e {
        Expr::Number(n) => number_to_string(n),
        Expr::Fluent(f) => application(&f.function, &f.args),
        Expr::Neg(x) => format!("(- {})", expr_to_string(x)),
        Expr::Binary(op, l, r) => {
            let sym = match op {
                ArithOp::Add => "+",
                ArithOp::Sub => "-",
                ArithOp::Mul => "*",
                ArithOp::Div => "/",
            };
            format!("({sym} {} {})", expr_to_string(l), expr_to_string(r))
        }
    }
}

pub fn condition_to_string(c: &Condition) -> String {
    match c {
        Condition::And(cs) => {
            let mut s = String::from("(and");
            for c in cs {
                s.push(' ');
                s.push_str(&condition_to_string(c));
            }
            s.push(')');
            s
        }
        Condition::Atom(a) => application(&a.predicate, &a.args),
        Condition::Not(a) => format!("(not {})", application(&a.predicate, &a.args)),
        Condition::Compare(cmp) => format!(
            "({} {} {})",
            cmp.op.symbol(),
            expr_to_string(&cmp.lhs),
            expr_to_string(&cmp.rhs)
        ),
    }
}

fn effect_to_string(e: &Effect) -> String {
    match e {
        Effect::Add(a) => application(&a.predicate, &a.args),
        Effect::Delete(a) => format!("(not {})", application(&a.predicate, &a.args)),
        Effect::Numeric { op, target, value } => format!(
            "({} {} {})",
            op.keyword(),
            application(&target.function, &target.args),
            expr_to_string(value)
        ),
    }
}

fn typed_params(params: &[Parameter]) -> String {
    params
        .iter()
        .map(|p| format!("?{} - {}", p.name, p.type_name))
        .collect::<Vec<_>>()
        .join(" ")
}

fn typed_objects(objects: &[TypedObject]) -> String {
    objects
        .iter()
        .map(|o| format!("{} - {}", o.name, o.type_name))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn domain_to_string(d: &Domain) -> String {
    let mut s = String::new();
    writeln!(s, "(define (domain {})", d.name).unwrap();
    if !d.requirements.is_empty() {
        writeln!(s, "  (:requirements {})", d.requirements.join(" ")).unwrap();
    }
    if !d.types.is_empty() {
        let types: Vec<String> = d
            .types
            .iter()
            .map(|t| format!("{} - {}", t.name, t.parent.as_deref().unwrap_or(OBJECT_TYPE)))
            .collect();
        writeln!(s, "  (:types {})", types.join(" ")).unwrap();
    }
    if !d.constants.is_empty() {
        writeln!(s, "  (:constants {})", typed_objects(&d.constants)).unwrap();
    }
    if !d.predicates.is_empty() {
        s.push_str("  (:predicates");
        for p in &d.predicates {
            write!(s, "\n    ({}", p.name).unwrap();
            if !p.parameters.is_empty() {
                write!(s, " {}", typed_params(&p.parameters)).unwrap();
            }
            s.push(')');
        }
        s.push_str(")\n");
    }
    if !d.functions.is_empty() {
        s.push_str("  (:functions");
        for f in &d.functions {
            write!(s, "\n    ({}", f.name).unwrap();
            if !f.parameters.is_empty() {
                write!(s, " {}", typed_params(&f.parameters)).unwrap();
            }
            s.push_str(") - number");
        }
        s.push_str(")\n");
    }
    for op in &d.operators {
        writeln!(s, "  (:action {}", op.name).unwrap();
        writeln!(s, "    :parameters ({})", typed_params(&op.parameters)).unwrap();
        writeln!(s, "    :precondition {}", condition_to_string(&op.precondition)).unwrap();
        let effects: Vec<String> = op.effects.iter().map(effect_to_string).collect();
        writeln!(s, "    :effect (and {}))", effects.join(" ")).unwrap();
    }
    s.push_str(")\n");
    s
}

pub fn state_facts(state: &SymbolicState) -> Vec<String> {
    let mut out: Vec<String> = state.atoms.iter().map(|a| a.to_string()).collect();
    out.extend(
        state
            .fluents
            .iter()
            .map(|(t, v)| format!("(= {t} {})", number_to_string(v))),
    );
    out
}

pub fn goal_to_string(g: &Goal) -> String {
    condition_to_string(&g.to_condition())
}

pub fn problem_to_string(p: &Problem) -> String {
    let mut s = String::new();
    writeln!(s, "(define (problem {})", p.name).unwrap();
    writeln!(s, "  (:domain {})", p.domain).unwrap();
    writeln!(s, "  (:objects {})", typed_objects(&p.objects)).unwrap();
    s.push_str("  (:init");
    for fact in state_facts(&p.init) {
        write!(s, "\n    {fact}").unwrap();
    }
    s.push_str(")\n");
    writeln!(s, "  (:goal {}))", goal_to_string(&p.goal)).unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formats() {
        assert_eq!(number_to_string(&Number::from_integer(-4)), "-4");
        assert_eq!(number_to_string(&Number::new(-1, 4)), "-0.25");
        assert_eq!(number_to_string(&Number::new(3, 8)), "0.375");
        assert_eq!(number_to_string(&Number::new(1, 3)), "(/ 1 3)");
    }
}
