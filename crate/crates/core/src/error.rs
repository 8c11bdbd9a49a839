use std::fmt;

use thiserror::Error;

use crate::grid::{Period, ValidationReport};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid instance: {}", join(&.0.violations))]
    Invalid(ValidationReport),
}

/// Row-indexed error raised by the matrix-case importer.
#[derive(Debug, Error, PartialEq)]
#[error("{table} table row {row}: {message}")]
pub struct TopologyError {
    pub table: String,
    /// 1-based row index within the table.
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error("template has no generator parameters")]
    EmptyTemplate,
    #[error("bs_count must be at least 1")]
    NoBlackStart,
    #[error("bs_count {requested} exceeds the {available} buses of the topology")]
    TooManyBlackStart { requested: usize, available: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("backend {backend} failed: {message}")]
    Backend { backend: String, message: String },
    #[error("horizon {0} is too small")]
    HorizonTooSmall(Period),
    #[error("solve timed out without a proven result")]
    TimedOut,
    #[error("oracle limits exceeded: {0}")]
    OracleLimit(String),
    #[error("graph is not connected")]
    Disconnected,
    #[error("{0}")]
    InvalidInput(String),
}

/// Outcome of an optimization that may stop early.
#[derive(Clone, Debug, PartialEq)]
pub enum Verdict<T> {
    Optimal(T),
    /// Best incumbent when a limit stopped the search.
    Feasible(T),
    Infeasible,
    TimedOut,
}

impl<T> Verdict<T> {
    pub fn solution(&self) -> Option<&T> {
        match self {
            Verdict::Optimal(x) | Verdict::Feasible(x) => Some(x),
            _ => None,
        }
    }

    pub fn into_solution(self) -> Option<T> {
        match self {
            Verdict::Optimal(x) | Verdict::Feasible(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        matches!(self, Verdict::Optimal(_))
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Verdict::Infeasible)
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Verdict<U> {
        match self {
            Verdict::Optimal(x) => Verdict::Optimal(f(x)),
            Verdict::Feasible(x) => Verdict::Feasible(f(x)),
            Verdict::Infeasible => Verdict::Infeasible,
            Verdict::TimedOut => Verdict::TimedOut,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Optimal(_) => "optimal",
            Verdict::Feasible(_) => "feasible",
            Verdict::Infeasible => "infeasible",
            Verdict::TimedOut => "timed_out",
        }
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
