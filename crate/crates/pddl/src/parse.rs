//! PDDL reader for the supported subset: typed STRIPS with negative
//! preconditions and numeric fluents over arithmetic expressions.
//!
//! Grammar (after s-expression reading, case-insensitive):
//!
//! ```text
//! domain   := (define (domain NAME) section*)
//! section  := (:requirements FLAG*) | (:types TYPED*) | (:constants TYPED*)
//!           | (:predicates (NAME TYPED-VARS)*) | (:functions (NAME TYPED-VARS) [- number]*)
//!           | (:action NAME :parameters (TYPED-VARS) [:precondition COND] [:effect EFFECT])
//! COND     := (and COND*) | (not ATOM) | ATOM | (CMP EXPR EXPR)
//! EFFECT   := (and EFFECT*) | (not ATOM) | ATOM | (assign|increase|decrease FLUENT EXPR)
//! EXPR     := NUMBER | FLUENT | (+ EXPR EXPR) | (- EXPR EXPR) | (- EXPR) | (* EXPR EXPR) | (/ EXPR EXPR)
//! problem  := (define (problem NAME) (:domain NAME) (:objects TYPED*) (:init FACT*) [(:goal COND)])
//! FACT     := ATOM | (= FLUENT NUMBER)
//! ```

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::error::{PddlError, Result};
use crate::model::*;
use crate::sexpr::{read_one, Sexpr};
use crate::state::{FluentTerm, Goal, Problem, SymbolicState};

pub fn parse_domain(text: &str) -> Result<Domain> {
    let root = read_one(text)?;
    let items = root.list("(define ...)")?;
    expect_head(&root, "define")?;
    let name_decl = items
        .get(1)
        .ok_or_else(|| syntax(&root, "missing (domain NAME)"))?;
    expect_head(name_decl, "domain")?;
    let name = name_decl.list("(domain NAME)")?.get(1).ok_or_else(|| syntax(name_decl, "missing domain name"))?;

    let mut domain = Domain {
        name: name.symbol("domain name")?.to_string(),
        ..Domain::default()
    };

    for section in &items[2..] {
        let body = section.list("domain section")?;
        let head = section.head().ok_or_else(|| syntax(section, "empty section"))?;
        match head {
            ":requirements" => {
                for r in &body[1..] {
                    domain.requirements.push(r.symbol("requirement flag")?.to_string());
                }
            }
            ":types" => {
                for (name, parent) in typed_list(&body[1..])? {
                    domain.types.push(TypeDecl {
                        name,
                        parent: parent.filter(|p| p != OBJECT_TYPE),
                    });
                }
            }
            ":constants" => {
                for (name, ty) in typed_list(&body[1..])? {
                    domain.constants.push(TypedObject::new(name, ty.unwrap_or_else(|| OBJECT_TYPE.into())));
                }
            }
            ":predicates" => {
                for p in &body[1..] {
                    let (name, parameters) = signature(p)?;
                    domain.predicates.push(PredicateSchema { name, parameters });
                }
            }
            ":functions" => {
                let mut rest = &body[1..];
                while let Some((first, tail)) = rest.split_first() {
                    let (name, parameters) = signature(first)?;
                    domain.functions.push(FunctionSchema { name, parameters });
                    rest = tail;
                    if rest.first().and_then(Sexpr::as_symbol) == Some("-") {
                        match rest.get(1).and_then(Sexpr::as_symbol) {
                            Some("number") => rest = &rest[2..],
                            _ => return rest[0].error("only `- number` functions are supported"),
                        }
                    }
                }
            }
            ":action" => domain.operators.push(operator(section)?),
            other => return section.error(format!("unsupported domain section `{other}`")),
        }
    }
    validate_domain(&domain)?;
    Ok(domain)
}

pub fn parse_problem(text: &str, domain: &Domain) -> Result<Problem> {
    let root = read_one(text)?;
    let items = root.list("(define ...)")?;
    expect_head(&root, "define")?;
    let name_decl = items.get(1).ok_or_else(|| syntax(&root, "missing (problem NAME)"))?;
    expect_head(name_decl, "problem")?;
    let mut problem = Problem {
        name: name_decl
            .list("(problem NAME)")?
            .get(1)
            .ok_or_else(|| syntax(name_decl, "missing problem name"))?
            .symbol("problem name")?
            .to_string(),
        ..Problem::default()
    };

    for section in &items[2..] {
        let body = section.list("problem section")?;
        match section.head().ok_or_else(|| syntax(section, "empty section"))? {
            ":domain" => {
                problem.domain = body
                    .get(1)
                    .ok_or_else(|| syntax(section, "missing domain name"))?
                    .symbol("domain name")?
                    .to_string()
            }
            ":objects" => {
                for (name, ty) in typed_list(&body[1..])? {
                    problem
                        .objects
                        .push(TypedObject::new(name, ty.unwrap_or_else(|| OBJECT_TYPE.into())));
                }
            }
            ":init" => {
                for fact in &body[1..] {
                    if fact.head() == Some("=") {
                        let parts = fact.list("(= FLUENT NUMBER)")?;
                        if parts.len() != 3 {
                            return fact.error("expected (= FLUENT NUMBER)");
                        }
                        let f = fluent_expr(&parts[1])?;
                        let value = SymbolicState::new().eval(&expr(&parts[2])?)?;
                        let term = FluentTerm {
                            function: f.function,
                            args: const_args(&f.args, &parts[1])?,
                        };
                        problem.init.set_fluent(term, value);
                    } else {
                        let a = atom_expr(fact)?;
                        problem.init.insert(crate::state::Atom {
                            predicate: a.predicate,
                            args: const_args(&a.args, fact)?,
                        });
                    }
                }
            }
            ":goal" => {
                let cond = condition(body.get(1).ok_or_else(|| syntax(section, "missing goal"))?)?;
                problem.goal = goal_from_condition(&cond, section)?;
            }
            other => return section.error(format!("unsupported problem section `{other}`")),
        }
    }
    validate_problem(domain, &problem)?;
    Ok(problem)
}

/// Parses a goal expression such as `(and (delivered p0) (>= (wood) 2))`.
/// Only syntax and declared predicates/functions are checked here; object
/// typing is the planner's goal check.
pub fn parse_goal(text: &str, domain: &Domain) -> Result<Goal> {
    let root = read_one(text)?;
    let cond = condition(&root)?;
    let goal = goal_from_condition(&cond, &root)?;
    for (atom, _) in &goal.literals {
        let p = domain
            .predicate(&atom.predicate)
            .ok_or_else(|| PddlError::UndeclaredPredicate(atom.predicate.clone()))?;
        check_arity(&p.name, p.parameters.len(), atom.args.len())?;
    }
    for c in &goal.numeric {
        for f in expr_fluents(&c.lhs).into_iter().chain(expr_fluents(&c.rhs)) {
            let schema = domain
                .function(&f.function)
                .ok_or_else(|| PddlError::UndeclaredFunction(f.function.clone()))?;
            check_arity(&schema.name, schema.parameters.len(), f.args.len())?;
        }
    }
    Ok(goal)
}

fn goal_from_condition(cond: &Condition, at: &Sexpr) -> Result<Goal> {
    let mut goal = Goal::default();
    for leaf in cond.leaves() {
        match leaf {
            Condition::Atom(a) => goal.literals.push((
                crate::state::Atom {
                    predicate: a.predicate.clone(),
                    args: const_args(&a.args, at)?,
                },
                true,
            )),
            Condition::Not(a) => goal.literals.push((
                crate::state::Atom {
                    predicate: a.predicate.clone(),
                    args: const_args(&a.args, at)?,
                },
                false,
            )),
            Condition::Compare(c) => {
                for f in expr_fluents(&c.lhs).into_iter().chain(expr_fluents(&c.rhs)) {
                    const_args(&f.args, at)?;
                }
                goal.numeric.push(c.clone());
            }
            Condition::And(_) => unreachable!("leaves() flattens conjunctions"),
        }
    }
    Ok(goal)
}

fn const_args(args: &[Term], at: &Sexpr) -> Result<Vec<String>> {
    args.iter()
        .map(|t| match t {
            Term::Const(c) => Ok(c.clone()),
            Term::Var(v) => at.error(format!("variable `?{v}` not allowed here")),
        })
        .collect()
}

fn syntax(at: &Sexpr, msg: &str) -> PddlError {
    let (line, col) = at.pos();
    PddlError::Syntax {
        line,
        col,
        msg: msg.to_string(),
    }
}

fn expect_head(e: &Sexpr, head: &str) -> Result<()> {
    match e.head() {
        Some(h) if h == head => Ok(()),
        _ => e.error(format!("expected `({head} ...)`")),
    }
}

/// `a b - t c - u d` → [(a,t),(b,t),(c,u),(d,None)]
fn typed_list(items: &[Sexpr]) -> Result<Vec<(String, Option<String>)>> {
    let mut out = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let sym = items[i].symbol("name")?;
        if sym == "-" {
            let ty = items
                .get(i + 1)
                .ok_or_else(|| syntax(&items[i], "missing type after `-`"))?;
            if ty.head() == Some("either") {
                return ty.error("`either` types are not supported");
            }
            let ty = ty.symbol("type name")?;
            if pending.is_empty() {
                return items[i].error("type annotation without names");
            }
            out.extend(pending.drain(..).map(|n| (n, Some(ty.to_string()))));
            i += 2;
        } else {
            pending.push(sym.to_string());
            i += 1;
        }
    }
    out.extend(pending.into_iter().map(|n| (n, None)));
    Ok(out)
}

fn variable(s: &Sexpr) -> Result<String> {
    let sym = s.symbol("variable")?;
    match sym.strip_prefix('?') {
        Some(v) if !v.is_empty() => Ok(v.to_string()),
        _ => s.error(format!("expected variable, found `{sym}`")),
    }
}

fn typed_vars(items: &[Sexpr]) -> Result<Vec<Parameter>> {
    let mut out = Vec::new();
    let mut pending = Vec::new();
    let mut i = 0;
    while i < items.len() {
        if items[i].as_symbol() == Some("-") {
            let ty = items
                .get(i + 1)
                .ok_or_else(|| syntax(&items[i], "missing type after `-`"))?
                .symbol("type name")?
                .to_string();
            if pending.is_empty() {
                return items[i].error("type annotation without variables");
            }
            out.extend(pending.drain(..).map(|name| Parameter {
                name,
                type_name: ty.clone(),
            }));
            i += 2;
        } else {
            pending.push(variable(&items[i])?);
            i += 1;
        }
    }
    out.extend(pending.into_iter().map(|name| Parameter {
        name,
        type_name: OBJECT_TYPE.to_string(),
    }));
    Ok(out)
}

fn signature(e: &Sexpr) -> Result<(String, Vec<Parameter>)> {
    let items = e.list("(NAME ?params...)")?;
    let name = items
        .first()
        .ok_or_else(|| syntax(e, "empty signature"))?
        .symbol("name")?
        .to_string();
    Ok((name, typed_vars(&items[1..])?))
}

fn operator(e: &Sexpr) -> Result<OperatorSchema> {
    let items = e.list("(:action ...)")?;
    let name = items
        .get(1)
        .ok_or_else(|| syntax(e, "missing action name"))?
        .symbol("action name")?
        .to_string();
    let mut op = OperatorSchema {
        name,
        parameters: Vec::new(),
        precondition: Condition::And(Vec::new()),
        effects: Vec::new(),
    };
    let mut i = 2;
    while i < items.len() {
        let key = items[i].symbol("action keyword")?;
        let value = items
            .get(i + 1)
            .ok_or_else(|| syntax(&items[i], "missing value for keyword"))?;
        match key {
            ":parameters" => op.parameters = typed_vars(value.list("parameter list")?)?,
            ":precondition" => op.precondition = normalize_condition(condition(value)?),
            ":effect" => op.effects = effects(value)?,
            other => return items[i].error(format!("unsupported action keyword `{other}`")),
        }
        i += 2;
    }
    Ok(op)
}

fn normalize_condition(c: Condition) -> Condition {
    match c {
        Condition::And(_) => c,
        leaf => Condition::And(vec![leaf]),
    }
}

fn term(s: &Sexpr) -> Result<Term> {
    let sym = s.symbol("term")?;
    Ok(match sym.strip_prefix('?') {
        Some(v) => Term::Var(v.to_string()),
        None => Term::Const(sym.to_string()),
    })
}

fn atom_expr(e: &Sexpr) -> Result<AtomExpr> {
    let items = e.list("atom")?;
    let predicate = items
        .first()
        .ok_or_else(|| syntax(e, "empty atom"))?
        .symbol("predicate name")?
        .to_string();
    Ok(AtomExpr {
        predicate,
        args: items[1..].iter().map(term).collect::<Result<_>>()?,
    })
}

fn fluent_expr(e: &Sexpr) -> Result<FluentExpr> {
    let items = e.list("fluent")?;
    let function = items
        .first()
        .ok_or_else(|| syntax(e, "empty fluent"))?
        .symbol("function name")?
        .to_string();
    Ok(FluentExpr {
        function,
        args: items[1..].iter().map(term).collect::<Result<_>>()?,
    })
}

fn number(e: &Sexpr) -> Result<Number> {
    let sym = e.symbol("number")?;
    parse_number(sym).ok_or_else(|| syntax(e, &format!("invalid number `{sym}`")))
}

/// Decimal literal to exact rational: "-2", "0.25", "3.".
pub fn parse_number(sym: &str) -> Option<Number> {
    let (neg, digits) = match sym.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, sym),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let int: i64 = if int_part.is_empty() { 0 } else { int_part.parse().ok()? };
    let mut value = Number::from_integer(int);
    if !frac_part.is_empty() {
        let denom = 10i64.checked_pow(frac_part.len() as u32)?;
        let frac: i64 = frac_part.parse().ok()?;
        value += Number::new(frac, denom);
    }
    Some(if neg { -value } else { value })
}

fn is_number(e: &Sexpr) -> bool {
    e.as_symbol().and_then(parse_number).is_some()
}

fn expr(e: &Sexpr) -> Result<Expr> {
    if is_number(e) {
        return Ok(Expr::Number(number(e)?));
    }
    let items = e.list("expression")?;
    let op = match e.head() {
        Some("+") => Some(ArithOp::Add),
        Some("-") => Some(ArithOp::Sub),
        Some("*") => Some(ArithOp::Mul),
        Some("/") => Some(ArithOp::Div),
        _ => None,
    };
    match op {
        Some(ArithOp::Sub) if items.len() == 2 => Ok(Expr::Neg(Box::new(expr(&items[1])?))),
        Some(op) => {
            if items.len() != 3 {
                return e.error("arithmetic operators take two operands");
            }
            Ok(Expr::Binary(op, Box::new(expr(&items[1])?), Box::new(expr(&items[2])?)))
        }
        None => Ok(Expr::Fluent(fluent_expr(e)?)),
    }
}

fn condition(e: &Sexpr) -> Result<Condition> {
    let items = e.list("condition")?;
    match e.head() {
        None if items.is_empty() => Ok(Condition::And(Vec::new())),
        Some("and") => Ok(Condition::And(items[1..].iter().map(condition).collect::<Result<_>>()?)),
        Some("not") => {
            if items.len() != 2 {
                return e.error("`not` takes one atom");
            }
            if items[1].head().is_some_and(|h| matches!(h, "and" | "not" | "or" | "<" | "<=" | "=" | ">=" | ">")) {
                return items[1].error("only atoms may be negated");
            }
            Ok(Condition::Not(atom_expr(&items[1])?))
        }
        Some(h @ ("<" | "<=" | "=" | ">=" | ">")) => {
            let op = match h {
                "<" => CmpOp::Lt,
                "<=" => CmpOp::Le,
                "=" => CmpOp::Eq,
                ">=" => CmpOp::Ge,
                _ => CmpOp::Gt,
            };
            if items.len() != 3 {
                return e.error("comparisons take two operands");
            }
            Ok(Condition::Compare(Comparison {
                op,
                lhs: expr(&items[1])?,
                rhs: expr(&items[2])?,
            }))
        }
        Some(h @ ("or" | "imply" | "exists" | "forall")) => e.error(format!("`{h}` is not supported")),
        Some(_) => Ok(Condition::Atom(atom_expr(e)?)),
        None => e.error("expected condition"),
    }
}

fn effects(e: &Sexpr) -> Result<Vec<Effect>> {
    let items = e.list("effect")?;
    match e.head() {
        None if items.is_empty() => Ok(Vec::new()),
        Some("and") => {
            let mut out = Vec::new();
            for item in &items[1..] {
                out.extend(effects(item)?);
            }
            Ok(out)
        }
        Some("not") => {
            if items.len() != 2 {
                return e.error("`not` takes one atom");
            }
            Ok(vec![Effect::Delete(atom_expr(&items[1])?)])
        }
        Some(h @ ("assign" | "increase" | "decrease")) => {
            let op = match h {
                "assign" => NumericOp::Assign,
                "increase" => NumericOp::Increase,
                _ => NumericOp::Decrease,
            };
            if items.len() != 3 {
                return e.error("numeric effects take a fluent and an expression");
            }
            Ok(vec![Effect::Numeric {
                op,
                target: fluent_expr(&items[1])?,
                value: expr(&items[2])?,
            }])
        }
        Some(h @ ("when" | "forall")) => e.error(format!("`{h}` effects are not supported")),
        Some(_) => Ok(vec![Effect::Add(atom_expr(e)?)]),
        None => e.error("expected effect"),
    }
}

pub(crate) fn expr_fluents(e: &Expr) -> Vec<&FluentExpr> {
    match e {
        Expr::Number(_) => Vec::new(),
        Expr::Fluent(f) => vec![f],
        Expr::Neg(x) => expr_fluents(x),
        Expr::Binary(_, l, r) => {
            let mut v = expr_fluents(l);
            v.extend(expr_fluents(r));
            v
        }
    }
}

fn check_arity(name: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(PddlError::ArityMismatch {
            name: name.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_unique<'a>(kind: &'static str, names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(PddlError::Duplicate {
                kind,
                name: n.to_string(),
            });
        }
    }
    Ok(())
}

fn check_type(domain: &Domain, ty: &str) -> Result<()> {
    if domain.has_type(ty) {
        Ok(())
    } else {
        Err(PddlError::UndeclaredType(ty.to_string()))
    }
}

/// Structural checks on a parsed (or hand-built) domain.
pub fn validate_domain(domain: &Domain) -> Result<()> {
    check_unique("type", domain.types.iter().map(|t| t.name.as_str()))?;
    check_unique("predicate", domain.predicates.iter().map(|p| p.name.as_str()))?;
    check_unique("function", domain.functions.iter().map(|f| f.name.as_str()))?;
    check_unique("operator", domain.operators.iter().map(|o| o.name.as_str()))?;
    check_unique("constant", domain.constants.iter().map(|c| c.name.as_str()))?;
    for t in &domain.types {
        if let Some(p) = &t.parent {
            check_type(domain, p)?;
        }
    }
    for c in &domain.constants {
        check_type(domain, &c.type_name)?;
    }
    for params in domain
        .predicates
        .iter()
        .map(|p| &p.parameters)
        .chain(domain.functions.iter().map(|f| &f.parameters))
    {
        for p in params {
            check_type(domain, &p.type_name)?;
        }
    }
    let constants: HashMap<&str, &str> = domain
        .constants
        .iter()
        .map(|c| (c.name.as_str(), c.type_name.as_str()))
        .collect();
    for op in &domain.operators {
        check_unique("parameter", op.parameters.iter().map(|p| p.name.as_str()))?;
        let mut vars: HashMap<&str, &str> = HashMap::new();
        for p in &op.parameters {
            check_type(domain, &p.type_name)?;
            vars.insert(&p.name, &p.type_name);
        }
        let scope = Scope {
            domain,
            operator: &op.name,
            vars: &vars,
            constants: &constants,
        };
        for leaf in op.precondition.leaves() {
            match leaf {
                Condition::Atom(a) | Condition::Not(a) => scope.atom(a)?,
                Condition::Compare(c) => {
                    scope.expr(&c.lhs)?;
                    scope.expr(&c.rhs)?;
                }
                Condition::And(_) => unreachable!(),
            }
        }
        let mut added = BTreeSet::new();
        let mut deleted = BTreeSet::new();
        for e in &op.effects {
            match e {
                Effect::Add(a) => {
                    scope.atom(a)?;
                    added.insert(a.clone());
                }
                Effect::Delete(a) => {
                    scope.atom(a)?;
                    deleted.insert(a.clone());
                }
                Effect::Numeric { target, value, .. } => {
                    scope.fluent(target)?;
                    scope.expr(value)?;
                }
            }
        }
        if let Some(a) = added.intersection(&deleted).next() {
            return Err(PddlError::ConflictingEffects {
                operator: op.name.clone(),
                atom: format_atom_expr(a),
            });
        }
    }
    Ok(())
}

fn format_atom_expr(a: &AtomExpr) -> String {
    let mut s = format!("({}", a.predicate);
    for t in &a.args {
        match t {
            Term::Var(v) => s.push_str(&format!(" ?{v}")),
            Term::Const(c) => s.push_str(&format!(" {c}")),
        }
    }
    s.push(')');
    s
}

struct Scope<'a> {
    domain: &'a Domain,
    operator: &'a str,
    vars: &'a HashMap<&'a str, &'a str>,
    constants: &'a HashMap<&'a str, &'a str>,
}

impl Scope<'_> {
    fn args(&self, name: &str, params: &[Parameter], args: &[Term]) -> Result<()> {
        check_arity(name, params.len(), args.len())?;
        for (p, t) in params.iter().zip(args) {
            let (label, ty) = match t {
                Term::Var(v) => {
                    let ty = self.vars.get(v.as_str()).ok_or_else(|| PddlError::UndeclaredVariable {
                        operator: self.operator.to_string(),
                        var: v.clone(),
                    })?;
                    (format!("?{v}"), *ty)
                }
                Term::Const(c) => {
                    let ty = self
                        .constants
                        .get(c.as_str())
                        .ok_or_else(|| PddlError::UnknownObject(c.clone()))?;
                    (c.clone(), *ty)
                }
            };
            if !self.domain.is_subtype(ty, &p.type_name) {
                return Err(PddlError::TypeMismatch {
                    object: label,
                    expected: p.type_name.clone(),
                    found: ty.to_string(),
                });
            }
        }
        Ok(())
    }

    fn atom(&self, a: &AtomExpr) -> Result<()> {
        let schema = self
            .domain
            .predicate(&a.predicate)
            .ok_or_else(|| PddlError::UndeclaredPredicate(a.predicate.clone()))?;
        self.args(&schema.name, &schema.parameters, &a.args)
    }

    fn fluent(&self, f: &FluentExpr) -> Result<()> {
        let schema = self
            .domain
            .function(&f.function)
            .ok_or_else(|| PddlError::UndeclaredFunction(f.function.clone()))?;
        self.args(&schema.name, &schema.parameters, &f.args)
    }

    fn expr(&self, e: &Expr) -> Result<()> {
        for f in expr_fluents(e) {
            self.fluent(f)?;
        }
        Ok(())
    }
}

/// Checks that every ground argument names a known object of a compatible type.
pub(crate) fn check_ground_args(
    domain: &Domain,
    objects: &HashMap<&str, &str>,
    name: &str,
    params: &[Parameter],
    args: &[String],
) -> Result<()> {
    check_arity(name, params.len(), args.len())?;
    for (p, a) in params.iter().zip(args) {
        let ty = objects.get(a.as_str()).ok_or_else(|| PddlError::UnknownObject(a.clone()))?;
        if !domain.is_subtype(ty, &p.type_name) {
            return Err(PddlError::TypeMismatch {
                object: a.clone(),
                expected: p.type_name.clone(),
                found: ty.to_string(),
            });
        }
    }
    Ok(())
}

pub(crate) fn check_ground_fluent_expr(domain: &Domain, objects: &HashMap<&str, &str>, e: &Expr) -> Result<()> {
    for f in expr_fluents(e) {
        let schema = domain
            .function(&f.function)
            .ok_or_else(|| PddlError::UndeclaredFunction(f.function.clone()))?;
        let args: Vec<String> = f
            .args
            .iter()
            .map(|t| match t {
                Term::Const(c) => Ok(c.clone()),
                Term::Var(v) => Err(PddlError::NotGround(v.clone())),
            })
            .collect::<Result<_>>()?;
        check_ground_args(domain, objects, &schema.name, &schema.parameters, &args)?;
    }
    Ok(())
}

/// Checks that a state's atoms and fluents are well-typed against the domain.
pub fn validate_state(domain: &Domain, objects: &[TypedObject], state: &SymbolicState) -> Result<()> {
    let universe = domain.universe(objects);
    let table: HashMap<&str, &str> = universe
        .iter()
        .map(|o| (o.name.as_str(), o.type_name.as_str()))
        .collect();
    for a in &state.atoms {
        let schema = domain
            .predicate(&a.predicate)
            .ok_or_else(|| PddlError::UndeclaredPredicate(a.predicate.clone()))?;
        check_ground_args(domain, &table, &schema.name, &schema.parameters, &a.args)?;
    }
    for f in state.fluents.keys() {
        let schema = domain
            .function(&f.function)
            .ok_or_else(|| PddlError::UndeclaredFunction(f.function.clone()))?;
        check_ground_args(domain, &table, &schema.name, &schema.parameters, &f.args)?;
    }
    Ok(())
}

fn validate_problem(domain: &Domain, problem: &Problem) -> Result<()> {
    check_unique("object", problem.objects.iter().map(|o| o.name.as_str()))?;
    for o in &problem.objects {
        check_type(domain, &o.type_name)?;
    }
    validate_state(domain, &problem.objects, &problem.init)?;
    if !problem.goal.is_empty() {
        crate::planner::validate_goal(domain, &problem.objects, &problem.goal)?;
    }
    Ok(())
}
