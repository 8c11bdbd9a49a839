//! Joint sectionalization and startup sequencing.
//!
//! Islands are encoded by binaries `x(v, j)`, startups by `s(i, j, t)`,
//! and connectivity by a single-commodity flow per BS: every unit assigned
//! to island `j` sends one unit of flow to `j` over lines whose `y(l, j)`
//! indicator is set, which in turn requires both endpoints in the island.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::time::Instant;

use blackstart_milp::{Backend, MilpModel, Sense, SolveLimits, VarId, VarKind};
use serde::{Deserialize, Serialize};

use crate::error::{SolveError, Verdict};
use crate::grid::{
    adjacency, bfs_tree, induced_connected, BusId, BusRole, Instance, Line, Period,
};
use crate::gss::{
    add_window_rows, capacity_terms, gss_bruteforce, run_model, solve_gss, start_time_terms,
    validate_schedule, IslandView, OracleLimits, Schedule,
};
use crate::report::{BoundLog, Track};

/// Optional side constraints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PpsrOptions {
    /// Enforce the instance's start windows.
    pub windows: bool,
    /// Enforce the instance's balance limit, when it has one.
    pub balance: bool,
}

/// Assignment of buses to islands.
///
/// `islands[j]` holds the members of the island of BS `j`, including `j`
/// itself. `detached[j]` lists transshipment buses the solver labelled with
/// island `j` although no path inside the island links them to `j`; they
/// are not members.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionalizingPlan {
    pub islands: BTreeMap<BusId, BTreeSet<BusId>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub detached: BTreeMap<BusId, BTreeSet<BusId>>,
}

impl SectionalizingPlan {
    /// Every BS alone in its island.
    pub fn singletons(inst: &Instance) -> SectionalizingPlan {
        SectionalizingPlan {
            islands: inst
                .bs
                .keys()
                .map(|&j| (j, BTreeSet::from([j])))
                .collect(),
            detached: BTreeMap::new(),
        }
    }

    pub fn from_assignment(
        inst: &Instance,
        assign: impl IntoIterator<Item = (BusId, BusId)>,
    ) -> SectionalizingPlan {
        let mut plan = SectionalizingPlan::singletons(inst);
        for (v, j) in assign {
            plan.islands.entry(j).or_default().insert(v);
        }
        plan
    }

    /// Island of each assigned bus.
    pub fn assignment(&self) -> BTreeMap<BusId, BusId> {
        self.islands
            .iter()
            .flat_map(|(&j, members)| members.iter().map(move |&v| (v, j)))
            .collect()
    }

    pub fn island_of(&self, bus: BusId) -> Option<BusId> {
        self.islands
            .iter()
            .find(|(_, m)| m.contains(&bus))
            .map(|(&j, _)| j)
    }

    /// Buses outside every island.
    pub fn unassigned(&self, inst: &Instance) -> BTreeSet<BusId> {
        let assigned = self.assignment();
        inst.buses
            .iter()
            .copied()
            .filter(|b| !assigned.contains_key(b))
            .collect()
    }

    /// Lines whose endpoints are not both in the same island.
    pub fn cut_lines(&self, inst: &Instance) -> BTreeSet<Line> {
        let a = self.assignment();
        inst.lines
            .iter()
            .copied()
            .filter(|l| match (a.get(&l.u), a.get(&l.v)) {
                (Some(x), Some(y)) => x != y,
                _ => true,
            })
            .collect()
    }

    /// Moves members that cannot reach their BS inside the island into
    /// `detached`. Only transshipment buses should ever be affected.
    pub fn split_detached(&mut self, inst: &Instance) {
        let adj = inst.adjacency();
        for (&j, members) in self.islands.iter_mut() {
            let reach = bfs_tree(&adj, members, j);
            let cut: BTreeSet<BusId> = members
                .iter()
                .copied()
                .filter(|b| !reach.contains_key(b))
                .collect();
            if !cut.is_empty() {
                members.retain(|b| reach.contains_key(b));
                self.detached.entry(j).or_default().extend(cut);
            }
        }
    }
}

/// Why a plan is not a valid sectionalization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlanViolation {
    UnknownBus(BusId),
    NotBlackStart(BusId),
    MissingIsland(BusId),
    /// A BS bus outside its own island.
    BsOutsideIsland(BusId),
    /// A BS bus inside another BS's island.
    BsInForeignIsland { bs: BusId, island: BusId },
    UnitUnassigned(BusId),
    AssignedTwice(BusId),
    DisconnectedIsland(BusId),
    BalanceExceeded { island: BusId, net_mw: String },
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanViolation::UnknownBus(b) => write!(f, "plan references unknown bus {b}"),
            PlanViolation::NotBlackStart(b) => write!(f, "island root {b} is not a black-start bus"),
            PlanViolation::MissingIsland(b) => write!(f, "black-start bus {b} has no island"),
            PlanViolation::BsOutsideIsland(b) => write!(f, "black-start bus {b} is not in its own island"),
            PlanViolation::BsInForeignIsland { bs, island } => {
                write!(f, "black-start bus {bs} is placed in the island of {island}")
            }
            PlanViolation::UnitUnassigned(b) => write!(f, "unit at bus {b} belongs to no island"),
            PlanViolation::AssignedTwice(b) => write!(f, "bus {b} belongs to more than one island"),
            PlanViolation::DisconnectedIsland(j) => write!(f, "disconnected island {j}"),
            PlanViolation::BalanceExceeded { island, net_mw } => {
                write!(f, "island {island} has net injection {net_mw} MW beyond the balance limit")
            }
        }
    }
}

/// Checks a plan by graph search, independently of any model.
pub fn validate_plan(
    inst: &Instance,
    plan: &SectionalizingPlan,
    opts: &PpsrOptions,
) -> Result<(), Vec<PlanViolation>> {
    let mut v = Vec::new();
    let adj = inst.adjacency();
    let mut seen: BTreeMap<BusId, usize> = BTreeMap::new();
    for (&j, members) in &plan.islands {
        if inst.role(j) != BusRole::BlackStart {
            v.push(PlanViolation::NotBlackStart(j));
        }
        if !members.contains(&j) {
            v.push(PlanViolation::BsOutsideIsland(j));
        }
        for &b in members.iter().chain(plan.detached.get(&j).into_iter().flatten()) {
            if !inst.buses.contains(&b) {
                v.push(PlanViolation::UnknownBus(b));
            }
            *seen.entry(b).or_default() += 1;
            if b != j && inst.role(b) == BusRole::BlackStart {
                v.push(PlanViolation::BsInForeignIsland { bs: b, island: j });
            }
        }
        if !induced_connected(&adj, members) || (!members.is_empty() && !members.contains(&j)) {
            v.push(PlanViolation::DisconnectedIsland(j));
        }
    }
    for j in inst.bs.keys() {
        if !plan.islands.contains_key(j) {
            v.push(PlanViolation::MissingIsland(*j));
        }
    }
    for (b, _) in inst.units() {
        if plan.island_of(b).is_none() {
            v.push(PlanViolation::UnitUnassigned(b));
        }
    }
    for (b, n) in seen {
        if n > 1 {
            v.push(PlanViolation::AssignedTwice(b));
        }
    }
    if opts.balance {
        if let Some(bal) = &inst.balance {
            for (&j, members) in &plan.islands {
                let net: f64 = members
                    .iter()
                    .chain(plan.detached.get(&j).into_iter().flatten())
                    .filter_map(|b| bal.net_mw.get(b))
                    .sum();
                if net.abs() > bal.limit_mw + 1e-6 {
                    v.push(PlanViolation::BalanceExceeded {
                        island: j,
                        net_mw: format!("{net}"),
                    });
                }
            }
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// A plan with one schedule per island.
#[derive(Clone, Debug, PartialEq)]
pub struct PpsrSolution {
    pub plan: SectionalizingPlan,
    pub schedules: BTreeMap<BusId, Schedule>,
    pub rt: Period,
    /// BS ids of the islands whose rt equals the overall rt.
    pub bottleneck: Vec<BusId>,
}

impl PpsrSolution {
    pub fn new(plan: SectionalizingPlan, schedules: BTreeMap<BusId, Schedule>) -> PpsrSolution {
        let rt = schedules.values().map(|s| s.rt).max().unwrap_or(0);
        let bottleneck = if rt == 0 {
            Vec::new()
        } else {
            schedules
                .iter()
                .filter(|(_, s)| s.rt == rt)
                .map(|(&j, _)| j)
                .collect()
        };
        PpsrSolution {
            plan,
            schedules,
            rt,
            bottleneck,
        }
    }

    /// Island views of this solution's plan at `horizon`.
    pub fn views(&self, inst: &Instance, horizon: Period, opts: &PpsrOptions) -> Vec<(BusId, IslandView)> {
        island_views(inst, &self.plan, horizon, opts)
    }
}

pub(crate) fn island_views(
    inst: &Instance,
    plan: &SectionalizingPlan,
    horizon: Period,
    opts: &PpsrOptions,
) -> Vec<(BusId, IslandView)> {
    plan.islands
        .iter()
        .map(|(&j, m)| (j, IslandView::of_island(inst, j, m, horizon, opts.windows)))
        .collect()
}

/// The model plus variable handles.
#[derive(Clone, Debug)]
pub struct PpsrModel {
    pub model: MilpModel,
    pub horizon: Period,
    pub x: BTreeMap<(BusId, BusId), VarId>,
    /// `s[(i, j)][t - 1]`.
    pub s: BTreeMap<(BusId, BusId), Vec<VarId>>,
    pub y: BTreeMap<(Line, BusId), VarId>,
    pub f: BTreeMap<(Line, BusId), VarId>,
    pub rt: VarId,
}

const PRIORITY_X: i32 = 3;
const PRIORITY_S: i32 = 2;
const PRIORITY_Y: i32 = 1;

/// Builds the full flow-based model at horizon `horizon`.
pub fn build_ppsr_model(inst: &Instance, horizon: Period, opts: &PpsrOptions) -> PpsrModel {
    let mut m = MilpModel::new();
    let bs = inst.black_start();
    let units = inst.units();
    let n_units = units.len() as f64;

    let mut x = BTreeMap::new();
    for &v in &inst.buses {
        for &j in &bs {
            let id = m.add_binary(format!("x_{v}_{j}"));
            m.set_priority(id, PRIORITY_X).expect("fresh variable");
            x.insert((v, j), id);
        }
    }
    let mut s = BTreeMap::new();
    for (i, _) in &units {
        for &j in &bs {
            let vars: Vec<VarId> = (1..=horizon)
                .map(|t| {
                    let id = m.add_binary(format!("s_{i}_{j}_{t}"));
                    m.set_priority(id, PRIORITY_S).expect("fresh variable");
                    id
                })
                .collect();
            s.insert((*i, j), vars);
        }
    }
    let mut y = BTreeMap::new();
    let mut f = BTreeMap::new();
    for l in &inst.lines {
        for &j in &bs {
            let id = m.add_binary(format!("y_{}_{}_{j}", l.u, l.v));
            m.set_priority(id, PRIORITY_Y).expect("fresh variable");
            y.insert((*l, j), id);
        }
    }
    for l in &inst.lines {
        for &j in &bs {
            let id = m.add_variable(
                format!("f_{}_{}_{j}", l.u, l.v),
                VarKind::Integer,
                -n_units,
                n_units,
            );
            f.insert((*l, j), id);
        }
    }
    let rt = m.add_variable("RT", VarKind::Continuous, 0.0, f64::from(horizon));
    let add = |m: &mut MilpModel, name: String, terms: Vec<(VarId, f64)>, sense, rhs| {
        m.add_constraint(name, terms, sense, rhs)
            .expect("variables exist");
    };

    // Each BS in its own island.
    for &j in &bs {
        for &k in &bs {
            let rhs = if j == k { 1.0 } else { 0.0 };
            add(&mut m, format!("root_{j}_{k}"), vec![(x[&(j, k)], 1.0)], Sense::Eq, rhs);
        }
    }
    // Units in exactly one island, transshipment buses in at most one.
    for &v in &inst.buses {
        let terms: Vec<(VarId, f64)> = bs.iter().map(|&j| (x[&(v, j)], 1.0)).collect();
        match inst.role(v) {
            BusRole::BlackStart => {}
            BusRole::NonBlackStart => add(&mut m, format!("partition_{v}"), terms, Sense::Eq, 1.0),
            BusRole::Transshipment => add(&mut m, format!("trans_{v}"), terms, Sense::Le, 1.0),
        }
    }
    // Startups happen in the unit's island.
    for (i, _) in &units {
        for &j in &bs {
            let mut terms: Vec<(VarId, f64)> = s[&(*i, j)].iter().map(|&v| (v, 1.0)).collect();
            terms.push((x[&(*i, j)], -1.0));
            add(&mut m, format!("link_{i}_{j}"), terms, Sense::Eq, 0.0);
        }
    }
    // Capacity per island and period.
    let params: Vec<(BusId, _)> = units.iter().map(|&(b, u)| (b, u.params(horizon))).collect();
    for &j in &bs {
        let sj: Vec<(BusId, Vec<VarId>)> = units
            .iter()
            .map(|(i, _)| (*i, s[&(*i, j)].clone()))
            .collect();
        for t in 1..=horizon {
            let terms = capacity_terms(&params, &sj, t);
            add(&mut m, format!("capacity_{j}_{t}"), terms, Sense::Ge, -inst.bs[&j].at(t));
        }
    }
    // Bottleneck rows.
    for (i, _) in &units {
        let mut terms: Vec<(VarId, f64)> = bs
            .iter()
            .flat_map(|&j| start_time_terms(&s[&(*i, j)]))
            .collect();
        terms.push((rt, -1.0));
        add(&mut m, format!("bottleneck_{i}"), terms, Sense::Le, 0.0);
    }
    // Flow balance: +1 out of every assigned unit, 0 through transshipment
    // buses, all assigned units into the BS.
    let adj_lines = incident_lines(inst);
    for &j in &bs {
        for &v in &inst.buses {
            let mut terms = net_outflow(&adj_lines[&v], v, |l| f[&(l, j)]);
            match inst.role(v) {
                BusRole::NonBlackStart => {
                    terms.push((x[&(v, j)], -1.0));
                    add(&mut m, format!("flow_unit_{v}_{j}"), terms, Sense::Eq, 0.0);
                }
                BusRole::Transshipment => {
                    add(&mut m, format!("flow_trans_{v}_{j}"), terms, Sense::Eq, 0.0);
                }
                BusRole::BlackStart if v == j => {
                    let mut terms: Vec<(VarId, f64)> =
                        terms.into_iter().map(|(id, c)| (id, -c)).collect();
                    terms.extend(units.iter().map(|(i, _)| (x[&(*i, j)], -1.0)));
                    add(&mut m, format!("flow_sink_{j}"), terms, Sense::Eq, 0.0);
                }
                BusRole::BlackStart => {}
            }
        }
    }
    // Flow only on island lines; island lines need both endpoints.
    for l in &inst.lines {
        for &j in &bs {
            let (fv, yv) = (f[&(*l, j)], y[&(*l, j)]);
            add(&mut m, format!("flow_ub_{}_{}_{j}", l.u, l.v), vec![(fv, 1.0), (yv, -n_units)], Sense::Le, 0.0);
            add(&mut m, format!("flow_lb_{}_{}_{j}", l.u, l.v), vec![(fv, 1.0), (yv, n_units)], Sense::Ge, 0.0);
            add(&mut m, format!("end_u_{}_{}_{j}", l.u, l.v), vec![(yv, 1.0), (x[&(l.u, j)], -1.0)], Sense::Le, 0.0);
            add(&mut m, format!("end_v_{}_{}_{j}", l.u, l.v), vec![(yv, 1.0), (x[&(l.v, j)], -1.0)], Sense::Le, 0.0);
        }
    }
    if opts.windows {
        for (i, _) in &units {
            if let Some(w) = inst.critical_windows.get(i) {
                let groups: Vec<&[VarId]> = bs.iter().map(|&j| s[&(*i, j)].as_slice()).collect();
                add_window_rows(&mut m, &format!("{i}"), &groups, w);
            }
        }
    }
    if opts.balance {
        if let Some(bal) = &inst.balance {
            for &j in &bs {
                let terms: Vec<(VarId, f64)> = bal
                    .net_mw
                    .iter()
                    .filter(|(b, _)| inst.buses.contains(b))
                    .map(|(b, &d)| (x[&(*b, j)], d))
                    .collect();
                add(&mut m, format!("balance_lo_{j}"), terms.clone(), Sense::Ge, -bal.limit_mw);
                add(&mut m, format!("balance_hi_{j}"), terms, Sense::Le, bal.limit_mw);
            }
        }
    }
    m.set_objective([(rt, 1.0)]).expect("variables exist");
    m.set_integral_objective(true);
    PpsrModel {
        model: m,
        horizon,
        x,
        s,
        y,
        f,
        rt,
    }
}

fn incident_lines(inst: &Instance) -> BTreeMap<BusId, Vec<Line>> {
    let mut out: BTreeMap<BusId, Vec<Line>> = inst.buses.iter().map(|&b| (b, Vec::new())).collect();
    for l in &inst.lines {
        out.entry(l.u).or_default().push(*l);
        out.entry(l.v).or_default().push(*l);
    }
    out
}

/// Terms of the net outflow at `v`: lines oriented away count positive.
fn net_outflow(lines: &[Line], v: BusId, f: impl Fn(Line) -> VarId) -> Vec<(VarId, f64)> {
    lines
        .iter()
        .map(|&l| (f(l), if l.u == v { 1.0 } else { -1.0 }))
        .collect()
}

impl PpsrModel {
    /// Encodes a plan and its schedules as a warm start. Flow follows each
    /// unit's BFS path to its BS inside the island.
    pub fn warm_start(&self, inst: &Instance, sol: &PpsrSolution) -> BTreeMap<VarId, f64> {
        let mut ws: BTreeMap<VarId, f64> = BTreeMap::new();
        let a = sol.plan.assignment();
        for (&(v, j), &id) in &self.x {
            ws.insert(id, f64::from(u8::from(a.get(&v) == Some(&j))));
        }
        for (&(i, j), vars) in &self.s {
            let start = sol.schedules.get(&j).and_then(|s| s.start.get(&i)).copied();
            for (k, &id) in vars.iter().enumerate() {
                let on = a.get(&i) == Some(&j) && start == Some(k as Period + 1);
                ws.insert(id, f64::from(u8::from(on)));
            }
        }
        let adj = inst.adjacency();
        let mut flow: BTreeMap<(Line, BusId), f64> = BTreeMap::new();
        for (&j, members) in &sol.plan.islands {
            let parent = bfs_tree(&adj, members, j);
            for &i in members {
                if inst.role(i) != BusRole::NonBlackStart {
                    continue;
                }
                let mut cur = i;
                while cur != j {
                    let Some(&next) = parent.get(&cur) else { break };
                    let l = Line::new(cur, next);
                    *flow.entry((l, j)).or_default() += if l.u == cur { 1.0 } else { -1.0 };
                    cur = next;
                }
            }
        }
        for (&(l, j), &id) in &self.y {
            let inside = a.get(&l.u) == Some(&j) && a.get(&l.v) == Some(&j);
            ws.insert(id, f64::from(u8::from(inside)));
        }
        for (&key, &id) in &self.f {
            ws.insert(id, flow.get(&key).copied().unwrap_or(0.0));
        }
        ws.insert(self.rt, f64::from(sol.rt));
        ws
    }

    /// Reads the plan and schedules out of a solution vector.
    pub fn extract(&self, inst: &Instance, values: &[f64]) -> PpsrSolution {
        let plan = extract_plan(inst, self, values);
        let mut schedules: BTreeMap<BusId, Schedule> = BTreeMap::new();
        for (&j, members) in &plan.islands {
            let start = members
                .iter()
                .filter_map(|&i| {
                    self.s.get(&(i, j)).and_then(|vars| {
                        vars.iter()
                            .position(|v| values[v.index()] > 0.5)
                            .map(|k| (i, k as Period + 1))
                    })
                })
                .collect();
            schedules.insert(j, Schedule::from_starts(start));
        }
        PpsrSolution::new(plan, schedules)
    }
}

/// Islands from the `x` values; members unreachable from their BS are moved
/// to `detached`.
pub fn extract_plan(inst: &Instance, pm: &PpsrModel, values: &[f64]) -> SectionalizingPlan {
    let assign = pm
        .x
        .iter()
        .filter(|(_, id)| values[id.index()] > 0.5)
        .map(|(&(v, j), _)| (v, j));
    let mut plan = SectionalizingPlan::from_assignment(inst, assign);
    plan.split_detached(inst);
    plan
}

/// Solves the model at `horizon`, then re-sequences every island with the
/// incumbent rt as horizon.
pub fn solve_ppsr(
    inst: &Instance,
    horizon: Period,
    opts: &PpsrOptions,
    backend: &dyn Backend,
    limits: &SolveLimits,
    warm: Option<&PpsrSolution>,
) -> Result<Verdict<PpsrSolution>, SolveError> {
    let pm = build_ppsr_model(inst, horizon, opts);
    solve_built(inst, pm, opts, backend, limits, warm)
}

/// Solves an already built model (full or tree-restricted) with optional
/// warm start and post-processing.
pub(crate) fn solve_built(
    inst: &Instance,
    mut pm: PpsrModel,
    opts: &PpsrOptions,
    backend: &dyn Backend,
    limits: &SolveLimits,
    warm: Option<&PpsrSolution>,
) -> Result<Verdict<PpsrSolution>, SolveError> {
    if let Some(w) = warm {
        let ws = pm.warm_start(inst, w);
        pm.model.set_warm_start(ws).expect("warm start uses model ids");
    }
    let verdict = run_model(&pm.model, backend, limits)?;
    let verdict = verdict.map(|values| pm.extract(inst, &values));
    let horizon = pm.horizon;
    Ok(verdict.map(|sol| post_process(inst, horizon, opts, backend, limits, sol)))
}

/// Re-solves each island's sequencing with horizon `sol.rt` and keeps the
/// result only where it validates at the full horizon.
fn post_process(
    inst: &Instance,
    horizon: Period,
    opts: &PpsrOptions,
    backend: &dyn Backend,
    limits: &SolveLimits,
    sol: PpsrSolution,
) -> PpsrSolution {
    if sol.rt == 0 {
        return sol;
    }
    let mut schedules = sol.schedules.clone();
    for (j, view) in island_views(inst, &sol.plan, horizon, opts) {
        if view.units.is_empty() {
            continue;
        }
        let short = view.with_horizon(sol.rt);
        if let Ok(v) = solve_gss(&short, backend, limits) {
            if let Some(s) = v.into_solution() {
                if validate_schedule(&view, &s).is_ok() && s.rt <= schedules[&j].rt {
                    schedules.insert(j, s);
                }
            }
        }
    }
    PpsrSolution::new(sol.plan, schedules)
}

/// Outcome of the incremental lower-bound scan.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    /// Proven lower bound; equals the optimum when `solution` is present.
    pub lower_bound: Period,
    pub solution: Option<PpsrSolution>,
}

/// Probes horizons `t_low, t_low + 1, ...` until the first feasible one,
/// which is the optimum. Stops with the current bound at the deadline or
/// past `max_horizon`.
#[allow(clippy::too_many_arguments)]
pub fn lower_bound_scan(
    inst: &Instance,
    opts: &PpsrOptions,
    t_low: Period,
    max_horizon: Period,
    backend: &dyn Backend,
    deadline: Option<Instant>,
    log: &mut BoundLog,
) -> Result<ScanResult, SolveError> {
    let mut lb = t_low;
    let mut t = t_low.max(1);
    loop {
        if t > max_horizon {
            return Ok(ScanResult {
                lower_bound: lb,
                solution: None,
            });
        }
        let Some(limits) = remaining(deadline) else {
            return Ok(ScanResult {
                lower_bound: lb,
                solution: None,
            });
        };
        match solve_ppsr(inst, t, opts, backend, &limits, None)? {
            Verdict::Infeasible => {
                lb = t + 1;
                log.push(Track::Lower, "infeasible", lb);
                t += 1;
            }
            // Every solution at horizon t has rt >= lb = t, so any incumbent
            // is optimal.
            Verdict::Optimal(sol) | Verdict::Feasible(sol) => {
                log.push(Track::Lower, "optimal", sol.rt);
                return Ok(ScanResult {
                    lower_bound: sol.rt.max(lb),
                    solution: Some(sol),
                });
            }
            Verdict::TimedOut => {
                return Ok(ScanResult {
                    lower_bound: lb,
                    solution: None,
                })
            }
        }
    }
}

/// Time left before `deadline` as solve limits, or `None` once it passed.
pub(crate) fn remaining(deadline: Option<Instant>) -> Option<SolveLimits> {
    match deadline {
        None => Some(SolveLimits::unlimited()),
        Some(d) => {
            let now = Instant::now();
            (now < d).then(|| SolveLimits::with_time_limit(d - now))
        }
    }
}

/// Exact optimum by enumerating every assignment of non-BS buses, keeping
/// those whose islands connect all their units to the BS, and sequencing
/// each island by enumeration. `Ok(None)` means infeasible.
pub fn ppsr_bruteforce(
    inst: &Instance,
    horizon: Period,
    opts: &PpsrOptions,
    limits: &OracleLimits,
) -> Result<Option<PpsrSolution>, SolveError> {
    if inst.buses.len() > limits.max_buses || inst.bs.len() > limits.max_black_start {
        return Err(SolveError::OracleLimit(format!(
            "{} buses and {} black-start units exceed {} and {}",
            inst.buses.len(),
            inst.bs.len(),
            limits.max_buses,
            limits.max_black_start
        )));
    }
    let bs = inst.black_start();
    let others: Vec<BusId> = inst
        .buses
        .iter()
        .copied()
        .filter(|b| !inst.bs.contains_key(b))
        .collect();
    // Choice k < |J| puts the bus in island bs[k]; k == |J| leaves a
    // transshipment bus out.
    let choices: Vec<usize> = others
        .iter()
        .map(|&b| {
            if inst.role(b) == BusRole::Transshipment {
                bs.len() + 1
            } else {
                bs.len()
            }
        })
        .collect();
    let adj = adjacency(&inst.buses, &inst.lines);
    let mut memo: HashMap<(BusId, Vec<BusId>), Option<Schedule>> = HashMap::new();
    let mut best: Option<PpsrSolution> = None;
    let mut pick = vec![0usize; others.len()];
    loop {
        if let Some(sol) = evaluate_choice(inst, horizon, opts, limits, &bs, &others, &pick, &adj, &mut memo)? {
            if best.as_ref().is_none_or(|b| sol.rt < b.rt) {
                best = Some(sol);
            }
        }
        if !odometer(&mut pick, &choices) {
            break;
        }
    }
    Ok(best)
}

fn odometer(pick: &mut [usize], choices: &[usize]) -> bool {
    for (d, &n) in pick.iter_mut().zip(choices).rev() {
        if *d + 1 < n {
            *d += 1;
            return true;
        }
        *d = 0;
    }
    false
}

#[allow(clippy::too_many_arguments)]
fn evaluate_choice(
    inst: &Instance,
    horizon: Period,
    opts: &PpsrOptions,
    limits: &OracleLimits,
    bs: &[BusId],
    others: &[BusId],
    pick: &[usize],
    adj: &BTreeMap<BusId, Vec<BusId>>,
    memo: &mut HashMap<(BusId, Vec<BusId>), Option<Schedule>>,
) -> Result<Option<PpsrSolution>, SolveError> {
    let assign = others
        .iter()
        .zip(pick)
        .filter(|(_, &k)| k < bs.len())
        .map(|(&b, &k)| (b, bs[k]));
    let mut plan = SectionalizingPlan::from_assignment(inst, assign);
    for (&j, members) in &plan.islands {
        let reach = bfs_tree(adj, members, j);
        if members
            .iter()
            .any(|&b| inst.role(b) == BusRole::NonBlackStart && !reach.contains_key(&b))
        {
            return Ok(None);
        }
    }
    plan.split_detached(inst);
    if validate_plan(inst, &plan, opts).is_err() {
        return Ok(None);
    }
    let mut schedules = BTreeMap::new();
    for (j, view) in island_views(inst, &plan, horizon, opts) {
        let key = (j, view.units.iter().map(|(b, _)| *b).collect::<Vec<_>>());
        let s = match memo.get(&key) {
            Some(s) => s.clone(),
            None => {
                let s = gss_bruteforce(&view, limits)?;
                memo.insert(key, s.clone());
                s
            }
        };
        match s {
            Some(s) => {
                schedules.insert(j, s);
            }
            None => return Ok(None),
        }
    }
    Ok(Some(PpsrSolution::new(plan, schedules)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BsCurve, NbsParams};
    use blackstart_milp::BranchAndBound;

    fn two_node() -> Instance {
        let mut inst = Instance::new("two");
        inst.buses = [BusId(1), BusId(2)].into();
        inst.lines = [Line::new(BusId(1), BusId(2))].into();
        inst.bs.insert(BusId(1), BsCurve::Constant(10.0));
        inst.nbs.insert(
            BusId(2),
            NbsParams {
                crank_mw: 5.0,
                crank_periods: 1,
                ramp_periods: 1,
                max_mw: 20.0,
            },
        );
        inst
    }

    #[test]
    fn two_node_model_counts() {
        let pm = build_ppsr_model(&two_node(), 3, &PpsrOptions::default());
        assert_eq!(pm.x.len(), 2);
        assert_eq!(pm.s.values().map(Vec::len).sum::<usize>(), 3);
        assert_eq!(pm.y.len(), 1);
        assert_eq!(pm.f.len(), 1);
    }

    #[test]
    fn two_node_optimum() {
        let inst = two_node();
        let opts = PpsrOptions::default();
        let sol = solve_ppsr(&inst, 3, &opts, &BranchAndBound::new(), &SolveLimits::unlimited(), None)
            .unwrap()
            .into_solution()
            .unwrap();
        assert_eq!(sol.rt, 1);
        assert_eq!(sol.bottleneck, vec![BusId(1)]);
        let oracle = ppsr_bruteforce(&inst, 3, &opts, &OracleLimits::default())
            .unwrap()
            .unwrap();
        assert_eq!(oracle.rt, 1);
    }

    #[test]
    fn plan_violations_are_named() {
        let inst = two_node();
        let opts = PpsrOptions::default();
        let empty = SectionalizingPlan::singletons(&inst);
        assert_eq!(
            validate_plan(&inst, &empty, &opts),
            Err(vec![PlanViolation::UnitUnassigned(BusId(2))])
        );
        let mut twice = SectionalizingPlan::from_assignment(&inst, [(BusId(2), BusId(1))]);
        twice.detached.insert(BusId(1), [BusId(2)].into());
        assert!(validate_plan(&inst, &twice, &opts)
            .unwrap_err()
            .contains(&PlanViolation::AssignedTwice(BusId(2))));
    }
}
