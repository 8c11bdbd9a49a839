//! Generator startup sequencing on a single island.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use blackstart_milp::{solve, Backend, MilpModel, Sense, SolveLimits, SolveStatus, VarId, VarKind};
use serde::{Deserialize, Serialize};

use crate::error::{SolveError, Verdict};
use crate::grid::{BsCurve, BusId, CriticalWindow, Instance, Mw, NbsParams, Period, Unit, CAPACITY_TOL};

/// One island as seen by the sequencing problem: a BS curve, the units to
/// start and a horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct IslandView {
    pub bs: BsCurve,
    /// Units in ascending bus order.
    pub units: Vec<(BusId, Unit)>,
    /// Start windows to enforce; empty when windows are disabled.
    pub windows: BTreeMap<BusId, CriticalWindow>,
    pub horizon: Period,
}

impl IslandView {
    pub fn new(bs: BsCurve, units: Vec<(BusId, Unit)>, horizon: Period) -> IslandView {
        let mut units = units;
        units.sort_by_key(|(b, _)| *b);
        IslandView {
            bs,
            units,
            windows: BTreeMap::new(),
            horizon,
        }
    }

    /// The island of BS bus `bs` with the units found among `members`.
    pub fn of_island(
        inst: &Instance,
        bs: BusId,
        members: &BTreeSet<BusId>,
        horizon: Period,
        windows: bool,
    ) -> IslandView {
        let units: Vec<(BusId, Unit)> = members
            .iter()
            .filter_map(|&b| inst.unit(b).map(|u| (b, u)))
            .collect();
        let mut view = IslandView::new(inst.bs[&bs].clone(), units, horizon);
        if windows {
            view.windows = window_subset(inst, view.units.iter().map(|(b, _)| *b));
        }
        view
    }

    /// The whole instance behind a single BS whose curve is the sum of all
    /// BS curves.
    pub fn aggregate(inst: &Instance, horizon: Period, windows: bool) -> IslandView {
        let curve = BsCurve::aggregate(inst.bs.values(), horizon);
        let mut view = IslandView::new(curve, inst.units(), horizon);
        if windows {
            view.windows = window_subset(inst, view.units.iter().map(|(b, _)| *b));
        }
        view
    }

    pub fn with_horizon(&self, horizon: Period) -> IslandView {
        IslandView {
            horizon,
            ..self.clone()
        }
    }

    /// Unit parameters at this view's horizon.
    pub fn params(&self) -> Vec<(BusId, NbsParams)> {
        self.units
            .iter()
            .map(|&(b, u)| (b, u.params(self.horizon)))
            .collect()
    }
}

fn window_subset(
    inst: &Instance,
    buses: impl Iterator<Item = BusId>,
) -> BTreeMap<BusId, CriticalWindow> {
    buses
        .filter_map(|b| inst.critical_windows.get(&b).map(|w| (b, *w)))
        .collect()
}

/// Start period of every unit and the resulting restoration time.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub start: BTreeMap<BusId, Period>,
    pub rt: Period,
}

impl Schedule {
    pub fn from_starts(start: BTreeMap<BusId, Period>) -> Schedule {
        let rt = start.values().copied().max().unwrap_or(0);
        Schedule { start, rt }
    }
}

/// Sequencing model plus the variable handles needed to read a solution.
#[derive(Clone, Debug)]
pub struct GssModel {
    pub model: MilpModel,
    /// `s[k][t - 1]` is the start indicator of unit `k` in period `t`.
    pub s: Vec<(BusId, Vec<VarId>)>,
    pub rt: VarId,
}

impl GssModel {
    fn schedule(&self, values: &[f64]) -> Schedule {
        let start = self
            .s
            .iter()
            .filter_map(|(b, vars)| {
                vars.iter()
                    .position(|v| values[v.index()] > 0.5)
                    .map(|k| (*b, k as Period + 1))
            })
            .collect();
        Schedule::from_starts(start)
    }
}

/// Builds the time-indexed model: one assignment row per unit, one
/// capacity row per period, one bottleneck row per unit and, when the view
/// carries windows, two window rows per windowed unit.
pub fn build_gss_model(island: &IslandView) -> GssModel {
    let horizon = island.horizon;
    let mut m = MilpModel::new();
    let params = island.params();
    let mut s = Vec::with_capacity(params.len());
    for (b, _) in &params {
        let vars: Vec<VarId> = (1..=horizon)
            .map(|t| m.add_binary(format!("s_{b}_{t}")))
            .collect();
        s.push((*b, vars));
    }
    let rt = m.add_variable("RT", VarKind::Continuous, 0.0, f64::from(horizon));

    for (b, vars) in &s {
        m.add_constraint(format!("assign_{b}"), vars.iter().map(|&v| (v, 1.0)), Sense::Eq, 1.0)
            .expect("fresh variables");
    }
    for t in 1..=horizon {
        let terms = capacity_terms(&params, &s, t);
        m.add_constraint(format!("capacity_{t}"), terms, Sense::Ge, -island.bs.at(t))
            .expect("fresh variables");
    }
    for (b, vars) in &s {
        let mut terms = start_time_terms(vars);
        terms.push((rt, -1.0));
        m.add_constraint(format!("bottleneck_{b}"), terms, Sense::Le, 0.0)
            .expect("fresh variables");
    }
    for (b, vars) in &s {
        if let Some(w) = island.windows.get(b) {
            add_window_rows(&mut m, &format!("{b}"), &[vars.as_slice()], w);
        }
    }
    m.set_objective([(rt, 1.0)]).expect("fresh variables");
    m.set_integral_objective(true);
    GssModel { model: m, s, rt }
}

/// Coefficients of the capacity row for period `t`.
pub(crate) fn capacity_terms(
    params: &[(BusId, NbsParams)],
    s: &[(BusId, Vec<VarId>)],
    t: Period,
) -> Vec<(VarId, f64)> {
    let mut terms = Vec::new();
    for ((_, p), (_, vars)) in params.iter().zip(s) {
        for start in 1..=t {
            let c = p.capacity_at(t - start + 1);
            if c != 0.0 {
                terms.push((vars[start as usize - 1], c));
            }
        }
    }
    terms
}

pub(crate) fn start_time_terms(vars: &[VarId]) -> Vec<(VarId, f64)> {
    vars.iter()
        .enumerate()
        .map(|(k, &v)| (v, k as f64 + 1.0))
        .collect()
}

/// `earliest <= start <= latest`, where the start time is summed over the
/// given indicator vectors.
pub(crate) fn add_window_rows(m: &mut MilpModel, tag: &str, groups: &[&[VarId]], w: &CriticalWindow) {
    let terms: Vec<(VarId, f64)> = groups.iter().flat_map(|g| start_time_terms(g)).collect();
    m.add_constraint(
        format!("earliest_{tag}"),
        terms.clone(),
        Sense::Ge,
        f64::from(w.earliest),
    )
    .expect("fresh variables");
    m.add_constraint(format!("latest_{tag}"), terms, Sense::Le, f64::from(w.latest))
        .expect("fresh variables");
}

/// Runs a model and converts the outcome into a verdict over raw values.
pub(crate) fn run_model(
    model: &MilpModel,
    backend: &dyn Backend,
    limits: &SolveLimits,
) -> Result<Verdict<Vec<f64>>, SolveError> {
    let out = solve(model, backend, limits);
    Ok(match out.status {
        SolveStatus::Optimal => Verdict::Optimal(out.values.expect("optimal carries values")),
        SolveStatus::Feasible => Verdict::Feasible(out.values.expect("feasible carries values")),
        SolveStatus::Infeasible => Verdict::Infeasible,
        SolveStatus::TimedOut => Verdict::TimedOut,
        SolveStatus::Error => {
            return Err(SolveError::Backend {
                backend: backend.name().to_string(),
                message: out.diagnostic.unwrap_or_default(),
            })
        }
    })
}

/// Solves the sequencing problem. Returned schedules always pass
/// [`validate_schedule`].
pub fn solve_gss(
    island: &IslandView,
    backend: &dyn Backend,
    limits: &SolveLimits,
) -> Result<Verdict<Schedule>, SolveError> {
    if island.units.is_empty() {
        return Ok(Verdict::Optimal(Schedule::default()));
    }
    let gm = build_gss_model(island);
    let verdict = run_model(&gm.model, backend, limits)?;
    let verdict = verdict.map(|values| gm.schedule(&values));
    if let Some(s) = verdict.solution() {
        if let Err(v) = validate_schedule(island, s) {
            return Err(SolveError::Backend {
                backend: backend.name().to_string(),
                message: format!("schedule failed validation: {v}"),
            });
        }
    }
    Ok(verdict)
}

/// Why a schedule is not valid for an island.
#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleViolation {
    MissingStart(BusId),
    UnknownUnit(BusId),
    OutsideHorizon { bus: BusId, period: Period },
    OutsideWindow { bus: BusId, period: Period },
    NegativeCapacity { period: Period, capacity: Mw },
    WrongRt { reported: Period, actual: Period },
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleViolation::MissingStart(b) => write!(f, "unit {b} has no start period"),
            ScheduleViolation::UnknownUnit(b) => write!(f, "bus {b} is not a unit of this island"),
            ScheduleViolation::OutsideHorizon { bus, period } => {
                write!(f, "unit {bus} starts at {period}, outside the horizon")
            }
            ScheduleViolation::OutsideWindow { bus, period } => {
                write!(f, "unit {bus} starts at {period}, outside its window")
            }
            ScheduleViolation::NegativeCapacity { period, capacity } => {
                write!(f, "total capacity {capacity} MW is negative in period {period}")
            }
            ScheduleViolation::WrongRt { reported, actual } => {
                write!(f, "reported rt {reported} but the last start is {actual}")
            }
        }
    }
}

/// Total capacity in periods `1..=horizon` for the given starts. Units
/// without a start contribute nothing.
pub fn capacity_trace(island: &IslandView, start: &BTreeMap<BusId, Period>) -> Vec<Mw> {
    let params = island.params();
    (1..=island.horizon)
        .map(|t| {
            island.bs.at(t)
                + params
                    .iter()
                    .filter_map(|(b, p)| {
                        start
                            .get(b)
                            .filter(|&&s| s >= 1 && s <= t)
                            .map(|&s| p.capacity_at(t - s + 1))
                    })
                    .sum::<Mw>()
        })
        .collect()
}

/// Checks a schedule against the island and returns its capacity trace.
pub fn validate_schedule(
    island: &IslandView,
    schedule: &Schedule,
) -> Result<Vec<Mw>, ScheduleViolation> {
    for b in schedule.start.keys() {
        if !island.units.iter().any(|(u, _)| u == b) {
            return Err(ScheduleViolation::UnknownUnit(*b));
        }
    }
    for (b, _) in &island.units {
        let &period = schedule
            .start
            .get(b)
            .ok_or(ScheduleViolation::MissingStart(*b))?;
        if period < 1 || period > island.horizon {
            return Err(ScheduleViolation::OutsideHorizon { bus: *b, period });
        }
        if let Some(w) = island.windows.get(b) {
            if period < w.earliest || period > w.latest {
                return Err(ScheduleViolation::OutsideWindow { bus: *b, period });
            }
        }
    }
    let actual = schedule.start.values().copied().max().unwrap_or(0);
    if actual != schedule.rt {
        return Err(ScheduleViolation::WrongRt {
            reported: schedule.rt,
            actual,
        });
    }
    let trace = capacity_trace(island, &schedule.start);
    if let Some(k) = trace.iter().position(|&c| c < -CAPACITY_TOL) {
        return Err(ScheduleViolation::NegativeCapacity {
            period: k as Period + 1,
            capacity: trace[k],
        });
    }
    Ok(trace)
}

/// Size limits of the enumeration oracles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_units: usize,
    pub max_horizon: Period,
    pub max_buses: usize,
    pub max_black_start: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_units: 6,
            max_horizon: 14,
            max_buses: 10,
            max_black_start: 3,
        }
    }
}

/// Exact sequencing by enumeration of start vectors, in increasing order of
/// restoration time. `Ok(None)` means infeasible.
pub fn gss_bruteforce(
    island: &IslandView,
    limits: &OracleLimits,
) -> Result<Option<Schedule>, SolveError> {
    let n = island.units.len();
    if n > limits.max_units || island.horizon > limits.max_horizon {
        return Err(SolveError::OracleLimit(format!(
            "{n} units over {} periods exceeds {} units over {} periods",
            island.horizon, limits.max_units, limits.max_horizon
        )));
    }
    if n == 0 {
        return Ok(Some(Schedule::default()));
    }
    for rt in 1..=island.horizon {
        // Start vectors in [1, rt]^n with at least one start equal to rt.
        let mut v = vec![1 as Period; n];
        loop {
            if v.contains(&rt) {
                let start: BTreeMap<BusId, Period> = island
                    .units
                    .iter()
                    .zip(&v)
                    .map(|((b, _), &s)| (*b, s))
                    .collect();
                let schedule = Schedule { start, rt };
                if validate_schedule(island, &schedule).is_ok() {
                    return Ok(Some(schedule));
                }
            }
            if !advance(&mut v, rt) {
                break;
            }
        }
    }
    Ok(None)
}

/// Odometer step over `[1, max]^n`; false once every vector was visited.
pub(crate) fn advance(v: &mut [Period], max: Period) -> bool {
    for d in v.iter_mut().rev() {
        if *d < max {
            *d += 1;
            return true;
        }
        *d = 1;
    }
    false
}

/// Optimal restoration time of the aggregated single-BS relaxation at
/// horizon `t0`. It never exceeds the optimum of the full problem.
pub fn aggregate_lower_bound(
    inst: &Instance,
    t0: Period,
    windows: bool,
    backend: &dyn Backend,
    limits: &SolveLimits,
) -> Result<Period, SolveError> {
    let view = IslandView::aggregate(inst, t0, windows);
    match solve_gss(&view, backend, limits)? {
        Verdict::Optimal(s) => Ok(s.rt),
        Verdict::Infeasible => Err(SolveError::HorizonTooSmall(t0)),
        Verdict::Feasible(_) | Verdict::TimedOut => Err(SolveError::TimedOut),
    }
}

/// [`aggregate_lower_bound`] starting at `t0` and doubling the horizon
/// until the relaxation is feasible or `max_horizon` is passed.
pub fn find_lower_bound(
    inst: &Instance,
    t0: Period,
    max_horizon: Period,
    windows: bool,
    backend: &dyn Backend,
    limits: &SolveLimits,
) -> Result<Period, SolveError> {
    let mut t = t0.max(1);
    loop {
        match aggregate_lower_bound(inst, t.min(max_horizon), windows, backend, limits) {
            Err(SolveError::HorizonTooSmall(h)) if h < max_horizon => t = t.saturating_mul(2),
            other => return other,
        }
    }
}
