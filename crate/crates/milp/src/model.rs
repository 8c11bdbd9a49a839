use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Absolute tolerance used when checking linear constraints.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Distance from the nearest integer tolerated for integer variables.
pub const INTEGRALITY_TOL: f64 = 1e-5;

/// Stable handle of a variable inside one [`MilpModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Stable handle of a constraint row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RowId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    /// Branching priority; higher values are branched on first.
    #[serde(default)]
    pub priority: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v.0]).sum()
    }

    /// Amount by which `values` violates the row; zero when satisfied.
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A violated row or bound found by [`MilpModel::check_assignment`].
#[derive(Clone, Debug, PartialEq)]
pub enum AssignmentViolation {
    Length { expected: usize, found: usize },
    Bound { var: String, value: f64 },
    Integrality { var: String, value: f64 },
    Row { row: String, excess: f64 },
}

impl fmt::Display for AssignmentViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssignmentViolation::Length { expected, found } => {
                write!(f, "assignment has {found} values, model has {expected} variables")
            }
            AssignmentViolation::Bound { var, value } => {
                write!(f, "variable {var} = {value} is outside its bounds")
            }
            AssignmentViolation::Integrality { var, value } => {
                write!(f, "integer variable {var} = {value} is fractional")
            }
            AssignmentViolation::Row { row, excess } => {
                write!(f, "constraint {row} violated by {excess:e}")
            }
        }
    }
}

/// A mixed-integer linear program in minimization form.
///
/// Variables and rows are append-only, so the ids handed out stay valid for
/// the lifetime of the model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(VarId, f64)>,
    /// Advisory starting assignment. Backends may ignore it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<BTreeMap<VarId, f64>>,
    /// Declares that some optimal solution has an integer objective value,
    /// which lets backends prune nodes whose bound exceeds `incumbent - 1`.
    #[serde(default)]
    pub integral_objective: bool,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
    ) -> VarId {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        let id = VarId(self.variables.len());
        self.variables.push(Variable {
            name: name.into(),
            kind,
            lower,
            upper,
            priority: 0,
        });
        id
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_variable(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn set_priority(&mut self, var: VarId, priority: i32) -> Result<(), ModelError> {
        self.ensure_var(var)?;
        self.variables[var.0].priority = priority;
        Ok(())
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> Result<RowId, ModelError> {
        let terms = self.normalize_terms(terms)?;
        let id = RowId(self.constraints.len());
        self.constraints.push(Constraint {
            name: name.into(),
            terms,
            sense,
            rhs,
        });
        Ok(id)
    }

    pub fn set_objective(
        &mut self,
        terms: impl IntoIterator<Item = (VarId, f64)>,
    ) -> Result<(), ModelError> {
        self.objective = self.normalize_terms(terms)?;
        Ok(())
    }

    pub fn set_integral_objective(&mut self, integral: bool) {
        self.integral_objective = integral;
    }

    pub fn set_warm_start(
        &mut self,
        values: impl IntoIterator<Item = (VarId, f64)>,
    ) -> Result<(), ModelError> {
        let mut map = BTreeMap::new();
        for (v, x) in values {
            self.ensure_var(v)?;
            map.insert(v, x);
        }
        self.warm_start = Some(map);
        Ok(())
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn find_var(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v.0]).sum()
    }

    /// Structural checks: ids in range, finite bounds on integer variables,
    /// `lower <= upper` everywhere.
    pub fn validate(&self) -> Result<(), ModelError> {
        for v in &self.variables {
            if v.kind.is_integral() && !(v.lower.is_finite() && v.upper.is_finite()) {
                return Err(ModelError::UnboundedInteger(v.name.clone()));
            }
            if v.lower > v.upper || v.lower.is_nan() || v.upper.is_nan() {
                return Err(ModelError::EmptyDomain(v.name.clone()));
            }
        }
        let n = self.variables.len();
        let rows = self.constraints.iter().flat_map(|c| c.terms.iter());
        for &(v, c) in rows.chain(self.objective.iter()) {
            if v.0 >= n {
                return Err(ModelError::UnknownVariable(v.0));
            }
            if !c.is_finite() {
                return Err(ModelError::NonFiniteCoefficient(self.variables[v.0].name.clone()));
            }
        }
        Ok(())
    }

    /// Re-verifies an assignment against bounds, integrality and every row.
    ///
    /// This is deliberately independent of any backend so solver output is
    /// never trusted blindly.
    pub fn check_assignment(&self, values: &[f64], tol: f64) -> Result<(), AssignmentViolation> {
        if values.len() != self.variables.len() {
            return Err(AssignmentViolation::Length {
                expected: self.variables.len(),
                found: values.len(),
            });
        }
        for (var, &x) in self.variables.iter().zip(values) {
            if !x.is_finite() || x < var.lower - tol || x > var.upper + tol {
                return Err(AssignmentViolation::Bound {
                    var: var.name.clone(),
                    value: x,
                });
            }
            if var.kind.is_integral() && (x - x.round()).abs() > INTEGRALITY_TOL {
                return Err(AssignmentViolation::Integrality {
                    var: var.name.clone(),
                    value: x,
                });
            }
        }
        for row in &self.constraints {
            let excess = row.violation(values);
            if excess > tol {
                return Err(AssignmentViolation::Row {
                    row: row.name.clone(),
                    excess,
                });
            }
        }
        Ok(())
    }

    /// Writes the model in CPLEX-LP style text, for debugging.
    pub fn to_lp_string(&self) -> String {
        use std::fmt::Write;

        fn expr(out: &mut String, model: &MilpModel, terms: &[(VarId, f64)]) {
            if terms.is_empty() {
                out.push_str(" 0");
            }
            for &(v, c) in terms {
                let sign = if c < 0.0 { '-' } else { '+' };
                let _ = write!(out, " {sign} {} {}", c.abs(), model.variables[v.0].name);
            }
        }

        let mut out = String::from("\\ generated by blackstart-milp\nMinimize\n obj:");
        expr(&mut out, self, &self.objective);
        out.push_str("\nSubject To\n");
        for (k, row) in self.constraints.iter().enumerate() {
            let name = if row.name.is_empty() {
                format!("r{k}")
            } else {
                row.name.clone()
            };
            let _ = write!(out, " {name}:");
            expr(&mut out, self, &row.terms);
            let _ = writeln!(out, " {} {}", row.sense, row.rhs);
        }
        out.push_str("Bounds\n");
        for v in &self.variables {
            let lo = if v.lower.is_finite() {
                v.lower.to_string()
            } else {
                "-inf".into()
            };
            let hi = if v.upper.is_finite() {
                v.upper.to_string()
            } else {
                "+inf".into()
            };
            let _ = writeln!(out, " {lo} <= {} <= {hi}", v.name);
        }
        let generals: Vec<_> = self
            .variables
            .iter()
            .filter(|v| v.kind == VarKind::Integer)
            .map(|v| v.name.as_str())
            .collect();
        if !generals.is_empty() {
            let _ = writeln!(out, "Generals\n {}", generals.join(" "));
        }
        let binaries: Vec<_> = self
            .variables
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .map(|v| v.name.as_str())
            .collect();
        if !binaries.is_empty() {
            let _ = writeln!(out, "Binaries\n {}", binaries.join(" "));
        }
        out.push_str("End\n");
        out
    }

    fn ensure_var(&self, v: VarId) -> Result<(), ModelError> {
        if v.0 < self.variables.len() {
            Ok(())
        } else {
            Err(ModelError::UnknownVariable(v.0))
        }
    }

    /// Merges duplicate variables and drops zero coefficients.
    fn normalize_terms(
        &self,
        terms: impl IntoIterator<Item = (VarId, f64)>,
    ) -> Result<Vec<(VarId, f64)>, ModelError> {
        let mut merged: BTreeMap<VarId, f64> = BTreeMap::new();
        for (v, c) in terms {
            self.ensure_var(v)?;
            *merged.entry(v).or_insert(0.0) += c;
        }
        Ok(merged.into_iter().filter(|&(_, c)| c != 0.0).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_variable_is_rejected() {
        let mut m = MilpModel::new();
        let x = m.add_binary("x");
        assert!(m.add_constraint("c", [(x, 1.0)], Sense::Ge, 1.0).is_ok());
        let err = m
            .add_constraint("bad", [(VarId(7), 1.0)], Sense::Le, 0.0)
            .unwrap_err();
        assert_eq!(err, ModelError::UnknownVariable(7));
        assert!(m.set_objective([(VarId(3), 1.0)]).is_err());
        assert!(m.set_warm_start([(VarId(3), 1.0)]).is_err());
    }

    #[test]
    fn duplicate_terms_are_merged() {
        let mut m = MilpModel::new();
        let x = m.add_binary("x");
        let y = m.add_binary("y");
        m.add_constraint("c", [(x, 1.0), (y, 2.0), (x, -1.0)], Sense::Le, 3.0)
            .unwrap();
        assert_eq!(m.constraints[0].terms, vec![(y, 2.0)]);
    }

    #[test]
    fn checker_flags_each_kind_of_violation() {
        let mut m = MilpModel::new();
        let x = m.add_binary("x");
        let z = m.add_variable("z", VarKind::Continuous, 0.0, 10.0);
        m.add_constraint("cap", [(x, 3.0), (z, 1.0)], Sense::Le, 4.0)
            .unwrap();
        assert!(m.check_assignment(&[1.0, 1.0], FEASIBILITY_TOL).is_ok());
        assert!(matches!(
            m.check_assignment(&[1.0, 2.0], FEASIBILITY_TOL),
            Err(AssignmentViolation::Row { .. })
        ));
        assert!(matches!(
            m.check_assignment(&[0.5, 0.0], FEASIBILITY_TOL),
            Err(AssignmentViolation::Integrality { .. })
        ));
        assert!(matches!(
            m.check_assignment(&[0.0, 11.0], FEASIBILITY_TOL),
            Err(AssignmentViolation::Bound { .. })
        ));
        assert!(matches!(
            m.check_assignment(&[0.0], FEASIBILITY_TOL),
            Err(AssignmentViolation::Length { .. })
        ));
    }

    #[test]
    fn lp_export_lists_rows_and_kinds() {
        let mut m = MilpModel::new();
        let x = m.add_binary("x");
        let n = m.add_variable("n", VarKind::Integer, -2.0, 2.0);
        m.add_constraint("link", [(x, 1.0), (n, -1.0)], Sense::Eq, 0.0)
            .unwrap();
        m.set_objective([(x, 1.0)]).unwrap();
        let lp = m.to_lp_string();
        assert!(lp.contains("link: + 1 x - 1 n = 0"));
        assert!(lp.contains("Binaries\n x"));
        assert!(lp.contains("Generals\n n"));
        assert!(lp.contains("-2 <= n <= 2"));
    }
}
