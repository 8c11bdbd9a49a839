use std::collections::BTreeMap;
use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::model::{MilpModel, FEASIBILITY_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// A time limit was hit while an incumbent was available.
    Feasible,
    /// Infeasibility was proven, never a timeout alias.
    Infeasible,
    /// A time limit was hit before any incumbent was found.
    TimedOut,
    Error,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::TimedOut => "timed_out",
            SolveStatus::Error => "error",
        })
    }
}

/// Result of one solve. `values` is `Some` iff the status carries a solution.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub values: Option<Vec<f64>>,
    pub wall_time: Duration,
    pub diagnostic: Option<String>,
}

impl SolveOutcome {
    pub fn solved(status: SolveStatus, objective: f64, values: Vec<f64>) -> Self {
        debug_assert!(status.has_solution());
        SolveOutcome {
            status,
            objective: Some(objective),
            values: Some(values),
            wall_time: Duration::ZERO,
            diagnostic: None,
        }
    }

    pub fn without_solution(status: SolveStatus) -> Self {
        debug_assert!(!status.has_solution());
        SolveOutcome {
            status,
            objective: None,
            values: None,
            wall_time: Duration::ZERO,
            diagnostic: None,
        }
    }

    pub fn error(msg: impl Into<String>) -> Self {
        SolveOutcome {
            diagnostic: Some(msg.into()),
            ..Self::without_solution(SolveStatus::Error)
        }
    }

    pub fn value_map(&self) -> Option<BTreeMap<usize, f64>> {
        self.values
            .as_ref()
            .map(|v| v.iter().copied().enumerate().collect())
    }
}

/// Limits handed to a backend for one solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveLimits {
    pub time_limit: Option<Duration>,
}

impl SolveLimits {
    pub fn unlimited() -> Self {
        SolveLimits { time_limit: None }
    }

    pub fn with_time_limit(limit: Duration) -> Self {
        SolveLimits {
            time_limit: Some(limit),
        }
    }

    pub(crate) fn deadline(&self, start: Instant) -> Option<Instant> {
        self.time_limit.and_then(|d| start.checked_add(d))
    }
}

impl Default for SolveLimits {
    fn default() -> Self {
        Self::unlimited()
    }
}

/// A MILP solving backend.
///
/// Implementations must be usable from several threads at once; every call
/// to [`Backend::solve_model`] is an independent solve.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn solve_model(&self, model: &MilpModel, limits: &SolveLimits) -> SolveOutcome;
}

/// Solves `model` with `backend` and re-verifies the returned assignment.
///
/// The wall time is measured here so every backend reports it the same way.
/// An assignment that fails the independent check is converted into an
/// `Error` outcome rather than passed on.
pub fn solve(model: &MilpModel, backend: &dyn Backend, limits: &SolveLimits) -> SolveOutcome {
    let start = Instant::now();
    if let Err(e) = model.validate() {
        let mut out = SolveOutcome::error(format!("malformed model: {e}"));
        out.wall_time = start.elapsed();
        return out;
    }
    let mut out = backend.solve_model(model, limits);
    out.wall_time = start.elapsed();
    if out.status.has_solution() {
        let checked = match &out.values {
            Some(values) => model
                .check_assignment(values, FEASIBILITY_TOL)
                .map_err(|v| v.to_string()),
            None => Err("backend reported a solution without values".to_string()),
        };
        if let Err(msg) = checked {
            log::error!("backend {} returned an invalid assignment: {msg}", backend.name());
            let wall = out.wall_time;
            out = SolveOutcome::error(format!(
                "backend {} returned an invalid assignment: {msg}",
                backend.name()
            ));
            out.wall_time = wall;
        } else if let Some(values) = &out.values {
            out.objective = Some(model.objective_value(values));
        }
    }
    out
}
