//! Restoration planning for blacked-out power grids.
//!
//! The crate partitions a grid into islands around black-start generators
//! and sequences generator startups inside each island so that the last
//! unit starts as early as possible.

pub mod bounding;
pub mod error;
pub mod generate;
pub mod grid;
pub mod gss;
pub mod io;
pub mod matpower;
pub mod ppsr;
pub mod randomized;
pub mod report;
pub mod synth;

pub use error::{LoadError, SolveError, Verdict};
pub use grid::{
    Balance, BsCurve, BusId, BusRole, CriticalWindow, Instance, Line, Mw, NbsParams, Period, Unit,
    ValidationReport, Violation,
};
pub use gss::{
    aggregate_lower_bound, build_gss_model, gss_bruteforce, solve_gss, validate_schedule,
    IslandView, OracleLimits, Schedule,
};
pub use io::{load_instance, validate_instance};
pub use ppsr::{
    build_ppsr_model, extract_plan, lower_bound_scan, ppsr_bruteforce, solve_ppsr, validate_plan,
    PpsrOptions, PpsrSolution, SectionalizingPlan,
};
