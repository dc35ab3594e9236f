//! Task specifications: formulas over grasp/release predicates and the
//! Büchi automata that recognize them.

mod automaton;
mod formula;
mod translate;

use thiserror::Error;

pub use automaton::{Guard, Nba, StateId, Transition};
pub use formula::{parse_formula, ActionKind, LtlFormula, Predicate, Symbol};
pub use translate::translate;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("negation is outside the supported fragment (offset {pos})")]
    NegationExcluded { pos: usize },
    #[error("the next operator is outside the supported fragment (offset {pos})")]
    NextExcluded { pos: usize },
    #[error("unknown predicate `{name}` at offset {pos}")]
    UnknownPredicate { pos: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NbaFormatError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: unknown predicate `{name}`")]
    UnknownPredicate { line: usize, name: String },
    #[error("line {line}: state {state} is out of range")]
    UndefinedState { line: usize, state: usize },
}

/// Parses `text` and translates it to a Büchi automaton.
pub fn formula_to_nba(text: &str) -> Result<Nba, FormulaError> {
    Ok(translate(&parse_formula(text)?))
}
