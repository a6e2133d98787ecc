use thiserror::Error;

/// Errors raised while parsing, validating or evaluating PDDL.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PddlError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },

    #[error("undeclared type `{0}`")]
    UndeclaredType(String),

    #[error("undeclared predicate `{0}`")]
    UndeclaredPredicate(String),

    #[error("undeclared function `{0}`")]
    UndeclaredFunction(String),

    #[error("undeclared variable `?{var}` in operator `{operator}`")]
    UndeclaredVariable { operator: String, var: String },

    #[error("unknown object `{0}`")]
    UnknownObject(String),

    #[error("`{name}` expects {expected} arguments, got {found}")]
    ArityMismatch {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("object `{object}` of type `{found}` used where `{expected}` is required")]
    TypeMismatch {
        object: String,
        expected: String,
        found: String,
    },

    #[error("duplicate {kind} `{name}`")]
    Duplicate { kind: &'static str, name: String },

    #[error("operator `{operator}` both adds and deletes `{atom}`")]
    ConflictingEffects { operator: String, atom: String },

    #[error("fluent `{0}` has no value in the state")]
    MissingFluent(String),

    #[error("condition is not ground: variable `?{0}`")]
    NotGround(String),

    #[error("division by zero")]
    DivisionByZero,

    #[error("step `{step}` is not applicable")]
    Inapplicable { step: String },
}

pub type Result<T, E = PddlError> = std::result::Result<T, E>;
