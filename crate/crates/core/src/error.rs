use thiserror::Error;

use crate::compiler::FunctionKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("facts line {line}: {message}")]
    Facts { line: usize, message: String },

    #[error("{line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },

    #[error("line {line}: {message}")]
    Clause { line: usize, message: String },

    #[error("unknown constant `{0}`")]
    UnknownConstant(String),

    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),

    #[error("predicate `{pred}` has arity {found}, expected {expected}")]
    Arity {
        pred: String,
        expected: usize,
        found: usize,
    },

    #[error("unknown fact {0}")]
    UnknownFact(String),

    #[error("clause at line {line} is not a tree: cycle through variables {vars:?}")]
    NotATree { line: usize, vars: Vec<String> },

    #[error("function {0} was not compiled")]
    NotCompiled(FunctionKey),

    #[error("bad query `{0}`: expected pred(c,Y) or pred(Y,c)")]
    BadQuery(String),

    #[error("tape does not retain register values")]
    TapeNotRetained,

    #[error("proof enumeration exceeded the budget of {0} nodes")]
    Budget(usize),

    #[error("{0}")]
    Invalid(String),

    #[error("example {index} ({query}): {source}")]
    Example {
        index: usize,
        query: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
