//! Symbolic protocol workbench: a Dolev-Yao execution model, a protocol
//! logic evaluated over bounded runs, and a catalogue of axioms checked
//! against those runs.

pub mod bench;
pub mod config;
pub mod engine;
pub mod error;
pub mod lexer;
pub mod logic;
pub mod protocol;
pub mod term;
pub mod term_syntax;

pub use config::{Bounds, KeyScheme, SemanticsConfig};
pub use error::{Error, Pos, Result};
pub use term::{Sort, Substitution, Term, Var};
