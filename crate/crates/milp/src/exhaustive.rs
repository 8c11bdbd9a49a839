//! Exact solving by enumeration of every integer assignment.
//!
//! Used as a test oracle for tiny models. Rows are checked against interval
//! bounds of the still-unassigned variables, which prunes subtrees without
//! skipping any feasible assignment. Continuous variables are allowed only
//! when each row mentions at most one of them, so that the integer
//! assignment pins every continuous variable to an interval and the
//! objective picks its end point.

use std::time::Instant;

use crate::model::{MilpModel, Sense, FEASIBILITY_TOL};
use crate::solve::{Backend, SolveLimits, SolveOutcome, SolveStatus};

/// Default cap on the product of integer domain sizes.
pub const DEFAULT_ENUMERATION_CAP: f64 = (1u64 << 24) as f64;

#[derive(Clone, Debug)]
pub struct Exhaustive {
    pub cap: f64,
}

impl Default for Exhaustive {
    fn default() -> Self {
        Exhaustive {
            cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

impl Exhaustive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_cap(cap: f64) -> Self {
        Exhaustive { cap }
    }
}

struct Enumerator<'a> {
    model: &'a MilpModel,
    integer_vars: Vec<usize>,
    continuous_vars: Vec<usize>,
    /// Rows touching each variable.
    rows_of: Vec<Vec<usize>>,
    values: Vec<f64>,
    assigned: Vec<bool>,
    best: Option<(f64, Vec<f64>)>,
    deadline: Option<Instant>,
    visits: u64,
    timed_out: bool,
    error: Option<String>,
}

impl<'a> Enumerator<'a> {
    fn interval(&self, var: usize) -> (f64, f64) {
        if self.assigned[var] {
            (self.values[var], self.values[var])
        } else {
            let v = &self.model.variables[var];
            (v.lower, v.upper)
        }
    }

    fn row_possible(&self, row: usize) -> bool {
        let c = &self.model.constraints[row];
        let (mut lo, mut hi) = (0.0, 0.0);
        for &(v, a) in &c.terms {
            let (l, u) = self.interval(v.0);
            if a >= 0.0 {
                lo += a * l;
                hi += a * u;
            } else {
                lo += a * u;
                hi += a * l;
            }
        }
        match c.sense {
            Sense::Le => lo <= c.rhs + FEASIBILITY_TOL,
            Sense::Ge => hi >= c.rhs - FEASIBILITY_TOL,
            Sense::Eq => lo <= c.rhs + FEASIBILITY_TOL && hi >= c.rhs - FEASIBILITY_TOL,
        }
    }

    fn objective_lower_bound(&self) -> f64 {
        self.model
            .objective
            .iter()
            .map(|&(v, a)| {
                let (l, u) = self.interval(v.0);
                if a >= 0.0 {
                    a * l
                } else {
                    a * u
                }
            })
            .sum()
    }

    fn dominated(&self) -> bool {
        match &self.best {
            None => false,
            Some((best, _)) => self.objective_lower_bound() >= best - 1e-9,
        }
    }

    /// Resolves continuous variables once every integer is assigned.
    fn complete(&mut self) {
        for &z in &self.continuous_vars {
            let var = &self.model.variables[z];
            let (mut lo, mut hi) = (var.lower, var.upper);
            for &r in &self.rows_of[z] {
                let c = &self.model.constraints[r];
                let mut rest = 0.0;
                let mut coef = 0.0;
                for &(v, a) in &c.terms {
                    if v.0 == z {
                        coef = a;
                    } else {
                        rest += a * self.values[v.0];
                    }
                }
                let bound = (c.rhs - rest) / coef;
                let (upper, lower) = match c.sense {
                    Sense::Eq => (true, true),
                    Sense::Le => (coef > 0.0, coef < 0.0),
                    Sense::Ge => (coef < 0.0, coef > 0.0),
                };
                if upper {
                    hi = hi.min(bound);
                }
                if lower {
                    lo = lo.max(bound);
                }
            }
            if lo > hi + FEASIBILITY_TOL {
                return;
            }
            let obj: f64 = self
                .model
                .objective
                .iter()
                .filter(|(v, _)| v.0 == z)
                .map(|&(_, a)| a)
                .sum();
            let x = if obj > 0.0 {
                lo
            } else if obj < 0.0 {
                hi
            } else if lo.is_finite() {
                lo
            } else if hi.is_finite() {
                hi
            } else {
                0.0
            };
            if !x.is_finite() {
                self.error = Some(format!("objective unbounded along variable {}", var.name));
                return;
            }
            self.values[z] = x;
        }
        if self.model.check_assignment(&self.values, FEASIBILITY_TOL).is_err() {
            return;
        }
        let obj = self.model.objective_value(&self.values);
        if self.best.as_ref().is_none_or(|(b, _)| obj < b - 1e-9) {
            self.best = Some((obj, self.values.clone()));
        }
    }

    fn descend(&mut self, depth: usize) {
        if self.timed_out || self.error.is_some() {
            return;
        }
        self.visits += 1;
        if self.visits.is_multiple_of(4096) && self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.timed_out = true;
            return;
        }
        if depth == self.integer_vars.len() {
            self.complete();
            return;
        }
        let var = self.integer_vars[depth];
        let (lo, hi) = {
            let v = &self.model.variables[var];
            (v.lower.ceil() as i64, v.upper.floor() as i64)
        };
        for x in lo..=hi {
            self.values[var] = x as f64;
            self.assigned[var] = true;
            let ok = self.rows_of[var].iter().all(|&r| self.row_possible(r)) && !self.dominated();
            if ok {
                self.descend(depth + 1);
            }
            self.assigned[var] = false;
            if self.timed_out || self.error.is_some() {
                return;
            }
        }
    }
}

impl Backend for Exhaustive {
    fn name(&self) -> &str {
        "exhaustive"
    }

    fn solve_model(&self, model: &MilpModel, limits: &SolveLimits) -> SolveOutcome {
        let start = Instant::now();
        let n = model.num_vars();
        let mut integer_vars = Vec::new();
        let mut continuous_vars = Vec::new();
        let mut log_size = 0.0f64;
        for (k, v) in model.variables.iter().enumerate() {
            if v.kind.is_integral() {
                let size = (v.upper.floor() - v.lower.ceil() + 1.0).max(0.0);
                if size == 0.0 {
                    return SolveOutcome::without_solution(SolveStatus::Infeasible);
                }
                log_size += size.log2();
                integer_vars.push(k);
            } else {
                continuous_vars.push(k);
            }
        }
        if log_size > self.cap.log2() + 1e-9 {
            return SolveOutcome::error(format!(
                "enumeration space 2^{log_size:.1} exceeds the cap 2^{:.1}",
                self.cap.log2()
            ));
        }
        let mut rows_of = vec![Vec::new(); n];
        for (r, row) in model.constraints.iter().enumerate() {
            let continuous = row
                .terms
                .iter()
                .filter(|(v, _)| !model.variables[v.0].kind.is_integral())
                .count();
            if continuous > 1 {
                return SolveOutcome::error(format!(
                    "row {} couples several continuous variables; the exhaustive backend cannot resolve them",
                    row.name
                ));
            }
            if row.terms.is_empty() && row.violation(&[]) > FEASIBILITY_TOL {
                return SolveOutcome::without_solution(SolveStatus::Infeasible);
            }
            for &(v, _) in &row.terms {
                rows_of[v.0].push(r);
            }
        }

        let mut e = Enumerator {
            model,
            integer_vars,
            continuous_vars,
            rows_of,
            values: vec![0.0; n],
            assigned: vec![false; n],
            best: None,
            deadline: limits.deadline(start),
            visits: 0,
            timed_out: false,
            error: None,
        };
        if (0..model.num_rows()).all(|r| e.row_possible(r)) {
            e.descend(0);
        }
        if let Some(msg) = e.error {
            return SolveOutcome::error(msg);
        }
        match (e.best, e.timed_out) {
            (Some((obj, vals)), false) => SolveOutcome::solved(SolveStatus::Optimal, obj, vals),
            (Some((obj, vals)), true) => SolveOutcome::solved(SolveStatus::Feasible, obj, vals),
            (None, false) => SolveOutcome::without_solution(SolveStatus::Infeasible),
            (None, true) => SolveOutcome::without_solution(SolveStatus::TimedOut),
        }
    }
}
