use std::fmt;

use thiserror::Error;

/// Line/column position in a source text, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Error {
    #[error("syntax error at {pos}: found {found}, expected {expected}")]
    Syntax {
        pos: Pos,
        found: String,
        expected: String,
    },

    #[error("semantic error at {pos}: {message}")]
    Semantic { pos: Pos, message: String },

    #[error("term is not ground: {0}")]
    NotGround(String),

    #[error("unbound variable `{0}`")]
    UnboundVariable(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("bounds misconfigured: {0}")]
    Bounds(String),

    #[error("expected {expected} term, got {found}")]
    WrongTermShape { expected: &'static str, found: String },

    #[error("axiom `{axiom}` requires {feature}, which the configuration disables")]
    FeatureMismatch { axiom: String, feature: String },

    #[error("unknown axiom `{name}`; catalogue: {catalogue}")]
    UnknownAxiom { name: String, catalogue: String },

    #[error("unknown reproduction case `{0}`")]
    UnknownCase(String),

    #[error("unknown role `{0}`")]
    UnknownRole(String),

    #[error("ill-formed formula: {0}")]
    IllFormed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
