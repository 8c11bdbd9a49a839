//! LP-based branch and bound.
//!
//! LP relaxations are solved with `microlp`'s bounded dual simplex; this
//! module owns the search: node selection, branching, incumbent handling,
//! warm starts and time limits. Children are re-optimized from their
//! parent's basis, so a branch costs a handful of dual pivots.

use std::time::Instant;

use microlp::{ComparisonOp, OptimizationDirection, Problem, Solution, Variable};

use crate::model::{MilpModel, Sense, VarKind, FEASIBILITY_TOL, INTEGRALITY_TOL};
use crate::solve::{Backend, SolveLimits, SolveOutcome, SolveStatus};

/// Depth-first branch and bound over LP relaxations.
#[derive(Clone, Debug, Default)]
pub struct BranchAndBound {
    /// Stop after this many nodes; reported like a time limit.
    pub node_limit: Option<usize>,
}

impl BranchAndBound {
    pub fn new() -> Self {
        Self::default()
    }
}

#[derive(Clone, Copy, Debug)]
enum Branch {
    Down { var: usize, bound: f64 },
    Up { var: usize, bound: f64 },
}

struct Node {
    lp: Solution,
    /// Objective of the parent relaxation; a valid bound for this node.
    parent_bound: f64,
    branch: Option<Branch>,
}

struct Search<'a> {
    model: &'a MilpModel,
    lp_vars: Vec<Variable>,
    incumbent: Option<(f64, Vec<f64>)>,
    nodes: usize,
}

enum LpFailure {
    Infeasible,
    Fatal(String),
}

fn classify(err: microlp::Error) -> LpFailure {
    match err {
        microlp::Error::Infeasible => LpFailure::Infeasible,
        microlp::Error::Unbounded => LpFailure::Fatal("LP relaxation is unbounded".into()),
        microlp::Error::InternalError(msg) => LpFailure::Fatal(format!("LP engine failure: {msg}")),
    }
}

impl<'a> Search<'a> {
    fn prunable(&self, bound: f64) -> bool {
        match &self.incumbent {
            None => false,
            Some((best, _)) if self.model.integral_objective => bound > best - 1.0 + 1e-6,
            Some((best, _)) => bound >= best - 1e-9 * best.abs().max(1.0),
        }
    }

    fn values(&self, lp: &Solution) -> Vec<f64> {
        self.lp_vars.iter().map(|&v| lp[v]).collect()
    }

    /// Picks the fractional integer variable with the highest priority,
    /// then the most fractional one, then the lowest index.
    fn branching_var(&self, values: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(i32, f64, usize)> = None;
        for (k, var) in self.model.variables.iter().enumerate() {
            if !var.kind.is_integral() {
                continue;
            }
            let frac = (values[k] - values[k].round()).abs();
            if frac <= INTEGRALITY_TOL {
                continue;
            }
            let better = match best {
                None => true,
                Some((p, f, _)) => var.priority > p || (var.priority == p && frac > f + 1e-12),
            };
            if better {
                best = Some((var.priority, frac, k));
            }
        }
        best.map(|(_, _, k)| (k, values[k]))
    }

    /// Turns an integral relaxation into a checked candidate. Integer
    /// variables are rounded; if the continuous part no longer fits the
    /// rows, integers are fixed and the LP re-solved for the continuous part.
    fn candidate(&self, lp: &Solution, values: &[f64]) -> Result<Option<Vec<f64>>, LpFailure> {
        let mut rounded = values.to_vec();
        for (k, var) in self.model.variables.iter().enumerate() {
            if var.kind.is_integral() {
                rounded[k] = rounded[k].round();
            } else {
                rounded[k] = rounded[k].clamp(var.lower, var.upper);
            }
        }
        if self.model.check_assignment(&rounded, FEASIBILITY_TOL).is_ok() {
            return Ok(Some(rounded));
        }
        let mut fixed = lp.clone();
        for (k, var) in self.model.variables.iter().enumerate() {
            if var.kind.is_integral() {
                fixed = match fixed.fix_var(self.lp_vars[k], rounded[k]) {
                    Ok(s) => s,
                    Err(e) => {
                        return match classify(e) {
                            LpFailure::Infeasible => Ok(None),
                            fatal => Err(fatal),
                        }
                    }
                };
            }
        }
        let mut vals = self.values(&fixed);
        for (k, var) in self.model.variables.iter().enumerate() {
            if var.kind.is_integral() {
                vals[k] = rounded[k];
            }
        }
        Ok(self
            .model
            .check_assignment(&vals, FEASIBILITY_TOL)
            .is_ok()
            .then_some(vals))
    }

    fn offer(&mut self, values: Vec<f64>) {
        let obj = self.model.objective_value(&values);
        let improves = match &self.incumbent {
            None => true,
            Some((best, _)) => obj < best - 1e-9,
        };
        if improves {
            log::trace!("new incumbent {obj} after {} nodes", self.nodes);
            self.incumbent = Some((obj, values));
        }
    }

    fn try_warm_start(&mut self, root: &Solution) -> Result<(), LpFailure> {
        let Some(ws) = &self.model.warm_start else {
            return Ok(());
        };
        let covers_integers = self
            .model
            .variables
            .iter()
            .enumerate()
            .all(|(k, v)| !v.kind.is_integral() || ws.contains_key(&crate::VarId(k)));
        if !covers_integers {
            log::debug!("warm start ignored: it does not cover every integer variable");
            return Ok(());
        }
        let mut lp = root.clone();
        for (k, var) in self.model.variables.iter().enumerate() {
            if var.kind.is_integral() {
                let x = ws[&crate::VarId(k)].round();
                lp = match lp.fix_var(self.lp_vars[k], x) {
                    Ok(s) => s,
                    Err(e) => {
                        return match classify(e) {
                            LpFailure::Infeasible => {
                                log::debug!("warm start ignored: infeasible");
                                Ok(())
                            }
                            fatal => Err(fatal),
                        }
                    }
                };
            }
        }
        let values = self.values(&lp);
        if let Some(c) = self.candidate(&lp, &values)? {
            self.offer(c);
        }
        Ok(())
    }

    fn apply(&self, lp: Solution, branch: Branch) -> Result<Option<Solution>, LpFailure> {
        let res = match branch {
            Branch::Down { var, bound } | Branch::Up { var, bound }
                if self.model.variables[var].kind == VarKind::Binary =>
            {
                lp.fix_var(self.lp_vars[var], bound)
            }
            Branch::Down { var, bound } => {
                lp.add_constraint([(self.lp_vars[var], 1.0)], ComparisonOp::Le, bound)
            }
            Branch::Up { var, bound } => {
                lp.add_constraint([(self.lp_vars[var], 1.0)], ComparisonOp::Ge, bound)
            }
        };
        match res {
            Ok(s) => Ok(Some(s)),
            Err(e) => match classify(e) {
                LpFailure::Infeasible => Ok(None),
                fatal => Err(fatal),
            },
        }
    }
}

fn build_relaxation(model: &MilpModel) -> Result<(Problem, Vec<Variable>), bool> {
    let mut obj = vec![0.0; model.num_vars()];
    for &(v, c) in &model.objective {
        obj[v.0] += c;
    }
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Variable> = model
        .variables
        .iter()
        .zip(&obj)
        .map(|(v, &c)| problem.add_var(c, (v.lower, v.upper)))
        .collect();
    for row in &model.constraints {
        if row.terms.is_empty() {
            // Constant row: either trivially true or the model is infeasible.
            if row.violation(&[]) > FEASIBILITY_TOL {
                return Err(false);
            }
            continue;
        }
        let op = match row.sense {
            Sense::Le => ComparisonOp::Le,
            Sense::Eq => ComparisonOp::Eq,
            Sense::Ge => ComparisonOp::Ge,
        };
        problem.add_constraint(
            row.terms.iter().map(|&(v, c)| (vars[v.0], c)).collect::<Vec<_>>(),
            op,
            row.rhs,
        );
    }
    Ok((problem, vars))
}

impl Backend for BranchAndBound {
    fn name(&self) -> &str {
        "reference"
    }

    fn solve_model(&self, model: &MilpModel, limits: &SolveLimits) -> SolveOutcome {
        let start = Instant::now();
        let deadline = limits.deadline(start);

        let (problem, lp_vars) = match build_relaxation(model) {
            Ok(p) => p,
            Err(_) => return SolveOutcome::without_solution(SolveStatus::Infeasible),
        };
        if model.num_vars() == 0 {
            return SolveOutcome::solved(SolveStatus::Optimal, 0.0, Vec::new());
        }
        let root = match problem.solve() {
            Ok(s) => s,
            Err(e) => {
                return match classify(e) {
                    LpFailure::Infeasible => SolveOutcome::without_solution(SolveStatus::Infeasible),
                    LpFailure::Fatal(msg) => SolveOutcome::error(msg),
                }
            }
        };

        let mut search = Search {
            model,
            lp_vars,
            incumbent: None,
            nodes: 0,
        };
        if let Err(LpFailure::Fatal(msg)) = search.try_warm_start(&root) {
            return SolveOutcome::error(msg);
        }

        let mut stack = vec![Node {
            parent_bound: root.objective(),
            lp: root,
            branch: None,
        }];
        let mut interrupted = false;

        while let Some(node) = stack.pop() {
            if deadline.is_some_and(|d| Instant::now() >= d)
                || self.node_limit.is_some_and(|n| search.nodes >= n)
            {
                interrupted = true;
                break;
            }
            if search.prunable(node.parent_bound) {
                continue;
            }
            search.nodes += 1;
            let lp = match node.branch {
                None => node.lp,
                Some(b) => match search.apply(node.lp, b) {
                    Ok(Some(lp)) => lp,
                    Ok(None) => continue,
                    Err(LpFailure::Fatal(msg)) => return SolveOutcome::error(msg),
                    Err(LpFailure::Infeasible) => unreachable!(),
                },
            };
            let bound = lp.objective();
            if search.prunable(bound) {
                continue;
            }
            let values = search.values(&lp);
            match search.branching_var(&values) {
                None => match search.candidate(&lp, &values) {
                    Ok(Some(c)) => search.offer(c),
                    Ok(None) => {}
                    Err(LpFailure::Fatal(msg)) => return SolveOutcome::error(msg),
                    Err(LpFailure::Infeasible) => unreachable!(),
                },
                Some((var, x)) => {
                    let down = Branch::Down {
                        var,
                        bound: x.floor(),
                    };
                    let up = Branch::Up {
                        var,
                        bound: x.ceil(),
                    };
                    // The preferred child is pushed last so it is explored first.
                    let (first, second) = if x - x.floor() >= 0.5 {
                        (down, up)
                    } else {
                        (up, down)
                    };
                    stack.push(Node {
                        lp: lp.clone(),
                        parent_bound: bound,
                        branch: Some(first),
                    });
                    stack.push(Node {
                        lp,
                        parent_bound: bound,
                        branch: Some(second),
                    });
                }
            }
        }

        log::debug!(
            "branch and bound explored {} nodes in {:?}",
            search.nodes,
            start.elapsed()
        );
        match (search.incumbent, interrupted) {
            (Some((obj, values)), false) => SolveOutcome::solved(SolveStatus::Optimal, obj, values),
            (Some((obj, values)), true) => SolveOutcome::solved(SolveStatus::Feasible, obj, values),
            (None, false) => SolveOutcome::without_solution(SolveStatus::Infeasible),
            (None, true) => SolveOutcome::without_solution(SolveStatus::TimedOut),
        }
    }
}
