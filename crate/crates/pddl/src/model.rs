//! Domain and problem data model.

use std::collections::BTreeMap;

use num_rational::Rational64;

/// Exact numeric value used for every fluent.
pub type Number = Rational64;

/// Root of every type hierarchy; never needs declaring.
pub const OBJECT_TYPE: &str = "object";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn var(name: &str) -> Self {
        Term::Var(name.to_string())
    }

    pub fn constant(name: &str) -> Self {
        Term::Const(name.to_string())
    }

    pub fn as_const(&self) -> Option<&str> {
        match self {
            Term::Const(c) => Some(c),
            Term::Var(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeDecl {
    pub name: String,
    pub parent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypedObject {
    pub name: String,
    pub type_name: String,
}

impl TypedObject {
    pub fn new(name: impl Into<String>, type_name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            type_name: type_name.into(),
        }
    }
}

/// A typed parameter of a predicate, function or operator schema.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Parameter {
    pub name: String,
    pub type_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateSchema {
    pub name: String,
    pub parameters: Vec<Parameter>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSchema {
    pub name: String,
    pub parameters: Vec<Parameter>,
}

/// Predicate applied to terms, e.g. `(at taxi ?c)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomExpr {
    pub predicate: String,
    pub args: Vec<Term>,
}

/// Function applied to terms, e.g. `(trees-in ?r)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FluentExpr {
    pub function: String,
    pub args: Vec<Term>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Number(Number),
    Fluent(FluentExpr),
    Binary(ArithOp, Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn eval(self, lhs: Number, rhs: Number) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Gt => lhs > rhs,
        }
    }

    /// Operator with the sides swapped: `a op b` iff `b op.flipped() a`.
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ge => CmpOp::Le,
            CmpOp::Gt => CmpOp::Lt,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Comparison {
    pub op: CmpOp,
    pub lhs: Expr,
    pub rhs: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Condition {
    And(Vec<Condition>),
    Atom(AtomExpr),
    Not(AtomExpr),
    Compare(Comparison),
}

impl Condition {
    /// Flattens nested conjunctions into a list of leaf conditions.
    pub fn leaves(&self) -> Vec<&Condition> {
        let mut out = Vec::new();
        fn walk<'a>(c: &'a Condition, out: &mut Vec<&'a Condition>) {
            match c {
                Condition::And(cs) => cs.iter().for_each(|c| walk(c, out)),
                leaf => out.push(leaf),
            }
        }
        walk(self, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NumericOp {
    Assign,
    Increase,
    Decrease,
}

impl NumericOp {
    pub fn keyword(self) -> &'static str {
        match self {
            NumericOp::Assign => "assign",
            NumericOp::Increase => "increase",
            NumericOp::Decrease => "decrease",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Effect {
    Add(AtomExpr),
    Delete(AtomExpr),
    Numeric {
        op: NumericOp,
        target: FluentExpr,
        value: Expr,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorSchema {
    pub name: String,
    pub parameters: Vec<Parameter>,
    pub precondition: Condition,
    pub effects: Vec<Effect>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Domain {
    pub name: String,
    pub requirements: Vec<String>,
    pub types: Vec<TypeDecl>,
    pub constants: Vec<TypedObject>,
    pub predicates: Vec<PredicateSchema>,
    pub functions: Vec<FunctionSchema>,
    pub operators: Vec<OperatorSchema>,
}

impl Domain {
    pub fn predicate(&self, name: &str) -> Option<&PredicateSchema> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionSchema> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn operator(&self, name: &str) -> Option<&OperatorSchema> {
        self.operators.iter().find(|o| o.name == name)
    }

    pub fn has_type(&self, name: &str) -> bool {
        name == OBJECT_TYPE || self.types.iter().any(|t| t.name == name)
    }

    fn parent_of(&self, name: &str) -> Option<&str> {
        self.types
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.parent.as_deref().unwrap_or(OBJECT_TYPE))
    }

    /// True when `sub` equals `sup` or descends from it.
    pub fn is_subtype(&self, sub: &str, sup: &str) -> bool {
        if sup == OBJECT_TYPE || sub == sup {
            return true;
        }
        let mut cur = sub;
        // Type chains are short; the bound guards against cyclic declarations.
        for _ in 0..=self.types.len() {
            match self.parent_of(cur) {
                Some(p) if p == sup => return true,
                Some(p) if p != cur => cur = p,
                _ => return false,
            }
        }
        false
    }

    /// Predicates whose truth no operator can change.
    pub fn static_predicates(&self) -> Vec<&str> {
        self.predicates
            .iter()
            .map(|p| p.name.as_str())
            .filter(|name| {
                !self.operators.iter().any(|op| {
                    op.effects.iter().any(|e| match e {
                        Effect::Add(a) | Effect::Delete(a) => a.predicate == *name,
                        Effect::Numeric { .. } => false,
                    })
                })
            })
            .collect()
    }

    /// Functions whose value no operator can change.
    pub fn static_functions(&self) -> Vec<&str> {
        self.functions
            .iter()
            .map(|f| f.name.as_str())
            .filter(|name| {
                !self.operators.iter().any(|op| {
                    op.effects.iter().any(|e| matches!(e, Effect::Numeric { target, .. } if target.function == *name))
                })
            })
            .collect()
    }

    /// Constants plus `objects`, deduplicated by name, in name order.
    pub fn universe(&self, objects: &[TypedObject]) -> Vec<TypedObject> {
        let mut map: BTreeMap<&str, &TypedObject> = BTreeMap::new();
        for o in self.constants.iter().chain(objects) {
            map.entry(o.name.as_str()).or_insert(o);
        }
        map.into_values().cloned().collect()
    }
}
