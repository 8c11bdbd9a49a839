//! Backend-neutral mixed-integer linear programs.
//!
//! A [`MilpModel`] is built incrementally and handed to a [`Backend`]
//! through [`solve`], which re-checks any returned assignment against the
//! stored rows. Three backends ship with the crate:
//!
//! * [`BranchAndBound`]: LP-based depth-first branch and bound, the
//!   default for every pipeline;
//! * [`Exhaustive`]: plain enumeration, an oracle for tiny models;
//! * [`ExternalCommand`]: a subprocess speaking a JSON file protocol.

mod bnb;
mod error;
mod exhaustive;
mod external;
mod model;
mod solve;

use std::fmt;
use std::str::FromStr;

pub use bnb::BranchAndBound;
pub use error::ModelError;
pub use exhaustive::{Exhaustive, DEFAULT_ENUMERATION_CAP};
pub use external::{ExternalCommand, SOLVER_ENV};
pub use model::{
    AssignmentViolation, Constraint, MilpModel, RowId, Sense, VarId, VarKind, Variable,
    FEASIBILITY_TOL, INTEGRALITY_TOL,
};
pub use solve::{solve, Backend, SolveLimits, SolveOutcome, SolveStatus};

/// Backend selector used by configuration surfaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum BackendKind {
    #[default]
    Reference,
    Exhaustive,
    External,
}

impl BackendKind {
    pub fn create(self) -> Box<dyn Backend> {
        match self {
            BackendKind::Reference => Box::new(BranchAndBound::new()),
            BackendKind::Exhaustive => Box::new(Exhaustive::new()),
            BackendKind::External => Box::new(ExternalCommand::from_env()),
        }
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference" => Ok(BackendKind::Reference),
            "exhaustive" => Ok(BackendKind::Exhaustive),
            "external" => Ok(BackendKind::External),
            other => Err(format!(
                "unknown backend {other:?} (expected reference, exhaustive or external)"
            )),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Reference => "reference",
            BackendKind::Exhaustive => "exhaustive",
            BackendKind::External => "external",
        })
    }
}
