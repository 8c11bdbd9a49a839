//! Upper bounds: tree partitions, local search and the reduced graph.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use blackstart_milp::{Backend, MilpModel, Sense, SolveLimits, VarId};
use petgraph::unionfind::UnionFind;
use rand::Rng;

use crate::error::{SolveError, Verdict};
use crate::grid::{bfs_tree, induced_connected, BusId, BusRole, Instance, Line, Period};
use crate::gss::{
    add_window_rows, capacity_terms, solve_gss, start_time_terms, IslandView, Schedule,
};
use crate::ppsr::{
    island_views, remaining, solve_built, solve_ppsr, PpsrModel, PpsrOptions, PpsrSolution,
    SectionalizingPlan,
};
use crate::report::{BoundLog, Track};

/// A spanning tree given by its lines.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanningTree {
    pub lines: BTreeSet<Line>,
}

impl SpanningTree {
    /// Next bus on the tree path from every bus towards `root`.
    pub fn parents_towards(&self, buses: &BTreeSet<BusId>, root: BusId) -> BTreeMap<BusId, BusId> {
        let adj = crate::grid::adjacency(buses, &self.lines);
        bfs_tree(&adj, buses, root)
    }
}

/// Minimum spanning tree under independent uniform `[0, 1]` line weights.
pub fn random_spanning_tree<R: Rng>(inst: &Instance, rng: &mut R) -> Result<SpanningTree, SolveError> {
    let index: BTreeMap<BusId, usize> = inst.buses.iter().enumerate().map(|(k, &b)| (b, k)).collect();
    let mut weighted: Vec<(f64, Line)> = inst.lines.iter().map(|&l| (rng.gen::<f64>(), l)).collect();
    weighted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut uf = UnionFind::new(index.len());
    let mut lines = BTreeSet::new();
    for (_, l) in weighted {
        if uf.union(index[&l.u], index[&l.v]) {
            lines.insert(l);
        }
    }
    if lines.len() + 1 != inst.buses.len() {
        return Err(SolveError::Disconnected);
    }
    Ok(SpanningTree { lines })
}

/// Tree-partition model: the sequencing rows of the full model plus path
/// closure `x(i, j) <= x(i', j)`, where `i'` follows `i` on the tree path to
/// `j`. Transshipment buses must join an island but get no startup rows.
pub fn build_ppsrt_model(
    inst: &Instance,
    tree: &SpanningTree,
    horizon: Period,
    opts: &PpsrOptions,
) -> Result<PpsrModel, SolveError> {
    if tree.lines.len() + 1 != inst.buses.len()
        || !tree.lines.iter().all(|l| inst.lines.contains(l))
        || !induced_connected(&crate::grid::adjacency(&inst.buses, &tree.lines), &inst.buses)
    {
        return Err(SolveError::InvalidInput("tree does not span the instance".into()));
    }
    let mut m = MilpModel::new();
    let bs = inst.black_start();
    let units = inst.units();
    let mut x = BTreeMap::new();
    for &v in &inst.buses {
        for &j in &bs {
            let id = m.add_binary(format!("x_{v}_{j}"));
            m.set_priority(id, 2).expect("fresh variable");
            x.insert((v, j), id);
        }
    }
    let mut s = BTreeMap::new();
    for (i, _) in &units {
        for &j in &bs {
            let vars: Vec<VarId> = (1..=horizon)
                .map(|t| {
                    let id = m.add_binary(format!("s_{i}_{j}_{t}"));
                    m.set_priority(id, 1).expect("fresh variable");
                    id
                })
                .collect();
            s.insert((*i, j), vars);
        }
    }
    let rt = m.add_variable("RT", blackstart_milp::VarKind::Continuous, 0.0, f64::from(horizon));
    let mut add = |name: String, terms: Vec<(VarId, f64)>, sense, rhs| {
        m.add_constraint(name, terms, sense, rhs).expect("variables exist");
    };
    for &j in &bs {
        for &k in &bs {
            add(format!("root_{j}_{k}"), vec![(x[&(j, k)], 1.0)], Sense::Eq, f64::from(u8::from(j == k)));
        }
    }
    for &v in &inst.buses {
        if inst.role(v) != BusRole::BlackStart {
            let terms = bs.iter().map(|&j| (x[&(v, j)], 1.0)).collect();
            add(format!("partition_{v}"), terms, Sense::Eq, 1.0);
        }
    }
    for (i, _) in &units {
        for &j in &bs {
            let mut terms: Vec<(VarId, f64)> = s[&(*i, j)].iter().map(|&v| (v, 1.0)).collect();
            terms.push((x[&(*i, j)], -1.0));
            add(format!("link_{i}_{j}"), terms, Sense::Eq, 0.0);
        }
    }
    let params: Vec<(BusId, _)> = units.iter().map(|&(b, u)| (b, u.params(horizon))).collect();
    for &j in &bs {
        let sj: Vec<(BusId, Vec<VarId>)> = units.iter().map(|(i, _)| (*i, s[&(*i, j)].clone())).collect();
        for t in 1..=horizon {
            add(format!("capacity_{j}_{t}"), capacity_terms(&params, &sj, t), Sense::Ge, -inst.bs[&j].at(t));
        }
    }
    for (i, _) in &units {
        let mut terms: Vec<(VarId, f64)> = bs.iter().flat_map(|&j| start_time_terms(&s[&(*i, j)])).collect();
        terms.push((rt, -1.0));
        add(format!("bottleneck_{i}"), terms, Sense::Le, 0.0);
    }
    for &j in &bs {
        let toward = tree.parents_towards(&inst.buses, j);
        for &i in &inst.buses {
            if inst.role(i) == BusRole::BlackStart {
                continue;
            }
            let next = toward[&i];
            if next != j {
                add(format!("path_{i}_{j}"), vec![(x[&(i, j)], 1.0), (x[&(next, j)], -1.0)], Sense::Le, 0.0);
            }
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
                m.add_constraint(format!("balance_lo_{j}"), terms.clone(), Sense::Ge, -bal.limit_mw)
                    .expect("variables exist");
                m.add_constraint(format!("balance_hi_{j}"), terms, Sense::Le, bal.limit_mw)
                    .expect("variables exist");
            }
        }
    }
    m.set_objective([(rt, 1.0)]).expect("variables exist");
    m.set_integral_objective(true);
    Ok(PpsrModel {
        model: m,
        horizon,
        x,
        s,
        y: BTreeMap::new(),
        f: BTreeMap::new(),
        rt,
    })
}

pub fn solve_ppsrt(
    inst: &Instance,
    tree: &SpanningTree,
    horizon: Period,
    opts: &PpsrOptions,
    backend: &dyn Backend,
    limits: &SolveLimits,
) -> Result<Verdict<PpsrSolution>, SolveError> {
    let pm = build_ppsrt_model(inst, tree, horizon, opts)?;
    solve_built(inst, pm, opts, backend, limits, None)
}

/// Result of [`local_search`].
#[derive(Clone, Debug, PartialEq)]
pub struct LsOutcome {
    pub solution: PpsrSolution,
    /// Passes of the outer loop, including the final one without a merge.
    pub iterations: usize,
    pub merges: usize,
}

/// Pairwise island improvement.
///
/// Islands are re-sequenced with horizon `rt0`. Each pass fixes the
/// bottleneck island (lowest BS id on ties), tries the other islands in
/// increasing rt order and re-partitions the first connected pair whose
/// joint optimum beats the bottleneck. The search stops after a pass
/// without improvement or once the deadline passes.
pub fn local_search(
    inst: &Instance,
    start: &PpsrSolution,
    rt0: Period,
    opts: &PpsrOptions,
    backend: &dyn Backend,
    deadline: Option<Instant>,
) -> Result<LsOutcome, SolveError> {
    let horizon = rt0.max(1);
    let mut plan = start.plan.clone();
    let mut rts: BTreeMap<BusId, Schedule> = BTreeMap::new();
    for (j, view) in island_views(inst, &plan, horizon, opts) {
        let schedule = match remaining(deadline) {
            Some(limits) => match solve_gss(&view, backend, &limits)? {
                Verdict::Optimal(s) | Verdict::Feasible(s) => s,
                Verdict::Infeasible => {
                    return Err(SolveError::InvalidInput(format!(
                        "island {j} cannot be sequenced within {horizon} periods"
                    )))
                }
                Verdict::TimedOut => start.schedules.get(&j).cloned().unwrap_or_default(),
            },
            None => start.schedules.get(&j).cloned().unwrap_or_default(),
        };
        rts.insert(j, schedule);
    }
    let adj = inst.adjacency();
    let mut iterations = 0;
    let mut merges = 0;
    'outer: loop {
        iterations += 1;
        let (j_max, rt_max) = rts
            .iter()
            .fold(None, |best: Option<(BusId, Period)>, (&j, s)| match best {
                Some((_, r)) if r >= s.rt => best,
                _ => Some((j, s.rt)),
            })
            .expect("at least one island");
        let mut others: Vec<(Period, BusId)> = rts
            .iter()
            .filter(|(&j, _)| j != j_max)
            .map(|(&j, s)| (s.rt, j))
            .collect();
        others.sort();
        for (_, j_small) in others {
            let Some(limits) = remaining(deadline) else {
                break 'outer;
            };
            let merged: BTreeSet<BusId> = plan.islands[&j_max].union(&plan.islands[&j_small]).copied().collect();
            if rt_max == 0 || !induced_connected(&adj, &merged) {
                continue;
            }
            let sub = inst.induced(&merged);
            let warm = PpsrSolution::new(
                SectionalizingPlan {
                    islands: [j_max, j_small].iter().map(|j| (*j, plan.islands[j].clone())).collect(),
                    detached: BTreeMap::new(),
                },
                [j_max, j_small].iter().map(|j| (*j, rts[j].clone())).collect(),
            );
            let two = match solve_ppsr(&sub, rt_max, opts, backend, &limits, Some(&warm))? {
                Verdict::Optimal(s) | Verdict::Feasible(s) => s,
                Verdict::Infeasible | Verdict::TimedOut => continue,
            };
            if two.rt >= rt_max {
                continue;
            }
            for j in [j_max, j_small] {
                plan.islands.insert(j, two.plan.islands[&j].clone());
                match two.plan.detached.get(&j) {
                    Some(d) => plan.detached.insert(j, d.clone()),
                    None => plan.detached.remove(&j),
                };
            }
            for j in [j_max, j_small] {
                let view = IslandView::of_island(inst, j, &plan.islands[&j], horizon, opts.windows);
                let schedule = remaining(deadline)
                    .and_then(|limits| solve_gss(&view, backend, &limits).ok())
                    .and_then(Verdict::into_solution)
                    .unwrap_or_else(|| two.schedules[&j].clone());
                rts.insert(j, schedule);
            }
            merges += 1;
            continue 'outer;
        }
        break;
    }
    Ok(LsOutcome {
        solution: PpsrSolution::new(plan, rts),
        iterations,
        merges,
    })
}

/// Lines of the reduced graph: every island's BFS tree (neighbours in
/// ascending id order) plus every line not inside a single island.
pub fn reduced_subgraph(inst: &Instance, plan: &SectionalizingPlan) -> BTreeSet<Line> {
    let adj = inst.adjacency();
    let mut lines = plan.cut_lines(inst);
    for (&j, members) in &plan.islands {
        for (&child, &parent) in &bfs_tree(&adj, members, j) {
            if child != parent {
                lines.insert(Line::new(child, parent));
            }
        }
    }
    lines
}

/// Best plan found by one pipeline run.
#[derive(Clone, Debug, PartialEq)]
pub struct UpperBound {
    pub solution: PpsrSolution,
    /// Horizon the tree model was finally solved at.
    pub tree_horizon: Period,
}

/// Tree partition at `2 * t_low` (doubling while infeasible, up to
/// `max_horizon`), then local search, then the full model on the reduced
/// graph warm-started from the local-search plan. Every improvement is
/// logged on the upper track.
#[allow(clippy::too_many_arguments)]
pub fn upper_bound_pipeline<R: Rng>(
    inst: &Instance,
    t_low: Period,
    max_horizon: Period,
    opts: &PpsrOptions,
    backend: &dyn Backend,
    rng: &mut R,
    deadline: Option<Instant>,
    log: &mut BoundLog,
) -> Result<Option<UpperBound>, SolveError> {
    let tree = random_spanning_tree(inst, rng)?;
    let mut horizon = t_low.saturating_mul(2).max(1);
    let initial = loop {
        let Some(limits) = remaining(deadline) else {
            return Ok(None);
        };
        match solve_ppsrt(inst, &tree, horizon, opts, backend, &limits)? {
            Verdict::Optimal(s) | Verdict::Feasible(s) => break s,
            Verdict::TimedOut => return Ok(None),
            Verdict::Infeasible if horizon >= max_horizon => return Ok(None),
            Verdict::Infeasible => horizon = horizon.saturating_mul(2).min(max_horizon),
        }
    };
    log.push(Track::Upper, "tree_partition", initial.rt);
    let tree_horizon = horizon;
    let mut best = initial.clone();

    let ls = local_search(inst, &initial, initial.rt, opts, backend, deadline)?;
    if ls.solution.rt < best.rt {
        log.push(Track::Upper, "local_search", ls.solution.rt);
        best = ls.solution.clone();
    }

    let reduced = inst.with_lines(reduced_subgraph(inst, &ls.solution.plan));
    if let Some(limits) = remaining(deadline) {
        let h = ls.solution.rt.max(1);
        if let Some(sol) = solve_ppsr(&reduced, h, opts, backend, &limits, Some(&ls.solution))?.into_solution() {
            if sol.rt < best.rt {
                log.push(Track::Upper, "reduced_graph", sol.rt);
                best = sol;
            }
        }
    }
    Ok(Some(UpperBound {
        solution: best,
        tree_horizon,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BsCurve, NbsParams};
    use crate::randomized::evaluate_plan;
    use blackstart_milp::BranchAndBound;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path(n: u32) -> Instance {
        let mut inst = Instance::new("path");
        inst.buses = (1..=n).map(BusId).collect();
        inst.lines = (1..n).map(|k| Line::new(BusId(k), BusId(k + 1))).collect();
        inst
    }

    /// 1 -- 2 -- 3 -- 4 with a slow BS at 1, a strong BS at 4 and one
    /// generator at 2.
    fn lopsided() -> Instance {
        let mut inst = path(4);
        inst.bs.insert(BusId(1), BsCurve::Series(vec![0.0, 0.0, 5.0]));
        inst.bs.insert(BusId(4), BsCurve::Constant(10.0));
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

    fn solution(inst: &Instance, plan: SectionalizingPlan) -> PpsrSolution {
        evaluate_plan(inst, &plan, 5, &PpsrOptions::default(), &BranchAndBound::new(), None)
            .unwrap()
            .solution(&plan)
            .unwrap()
    }

    #[test]
    fn spanning_tree_spans() {
        let mut inst = path(3);
        inst.lines.insert(Line::new(BusId(1), BusId(3)));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_spanning_tree(&inst, &mut rng).unwrap();
        assert_eq!(t.lines.len(), 2);
        assert!(t.lines.is_subset(&inst.lines));
        inst.buses.insert(BusId(9));
        assert_eq!(random_spanning_tree(&inst, &mut rng), Err(SolveError::Disconnected));
    }

    #[test]
    fn star_tree_has_no_path_rows() {
        let mut inst = path(1);
        inst.buses.extend([BusId(2), BusId(3)]);
        inst.lines = [Line::new(BusId(1), BusId(2)), Line::new(BusId(1), BusId(3))].into();
        inst.bs.insert(BusId(1), BsCurve::Constant(5.0));
        let tree = SpanningTree { lines: inst.lines.clone() };
        let pm = build_ppsrt_model(&inst, &tree, 2, &PpsrOptions::default()).unwrap();
        assert!(!pm.model.to_lp_string().contains("path_"));
    }

    #[test]
    fn path_rows_follow_the_tree() {
        let mut inst = path(3);
        inst.bs.insert(BusId(1), BsCurve::Constant(5.0));
        let tree = SpanningTree { lines: inst.lines.clone() };
        let pm = build_ppsrt_model(&inst, &tree, 2, &PpsrOptions::default()).unwrap();
        let lp = pm.model.to_lp_string();
        assert!(lp.contains("path_3_1"));
        assert!(!lp.contains("path_2_1"));
        // bus 3 in the island without bus 2 breaks x(3,1) <= x(2,1)
        let mut vals = vec![0.0; pm.model.num_vars()];
        for b in [1, 3] {
            vals[pm.x[&(BusId(b), BusId(1))].index()] = 1.0;
        }
        assert!(pm.model.check_assignment(&vals, 1e-9).is_err());
    }

    #[test]
    fn tree_must_span() {
        let inst = path(3);
        let tree = SpanningTree {
            lines: [Line::new(BusId(1), BusId(2))].into(),
        };
        assert!(build_ppsrt_model(&inst, &tree, 2, &PpsrOptions::default()).is_err());
    }

    #[test]
    fn local_search_single_island_is_identity() {
        let mut inst = path(3);
        inst.bs.insert(BusId(1), BsCurve::Constant(10.0));
        inst.nbs.insert(BusId(3), lopsided().nbs[&BusId(2)]);
        let start = solution(&inst, SectionalizingPlan::from_assignment(&inst, [(BusId(2), BusId(1)), (BusId(3), BusId(1))]));
        let ls = local_search(&inst, &start, start.rt, &PpsrOptions::default(), &BranchAndBound::new(), None).unwrap();
        assert_eq!(ls.solution.plan, start.plan);
        assert_eq!((ls.iterations, ls.merges), (1, 0));
    }

    #[test]
    fn local_search_moves_the_bottleneck_unit() {
        let inst = lopsided();
        let plan = SectionalizingPlan::from_assignment(&inst, [(BusId(2), BusId(1)), (BusId(3), BusId(4))]);
        let start = solution(&inst, plan);
        assert_eq!(start.rt, 3);
        let ls = local_search(&inst, &start, start.rt, &PpsrOptions::default(), &BranchAndBound::new(), None).unwrap();
        assert_eq!(ls.solution.rt, 1);
        assert_eq!(ls.merges, 1);
        assert_eq!(ls.solution.plan.island_of(BusId(2)), Some(BusId(4)));
        assert!(validate_plan_ok(&inst, &ls.solution.plan));
    }

    fn validate_plan_ok(inst: &Instance, plan: &SectionalizingPlan) -> bool {
        crate::ppsr::validate_plan(inst, plan, &PpsrOptions::default()).is_ok()
    }

    #[test]
    fn reduced_graph_of_a_path_is_the_path() {
        let inst = lopsided();
        let plan = SectionalizingPlan::from_assignment(&inst, [(BusId(2), BusId(1)), (BusId(3), BusId(4))]);
        assert_eq!(reduced_subgraph(&inst, &plan), inst.lines);
    }

    #[test]
    fn reduced_graph_drops_island_chords() {
        let mut inst = path(3);
        inst.lines.insert(Line::new(BusId(1), BusId(3)));
        inst.bs.insert(BusId(1), BsCurve::Constant(1.0));
        let plan = SectionalizingPlan::from_assignment(&inst, [(BusId(2), BusId(1)), (BusId(3), BusId(1))]);
        let reduced = reduced_subgraph(&inst, &plan);
        assert_eq!(reduced.len(), 2);
        assert!(!reduced.contains(&Line::new(BusId(2), BusId(3))));
    }

    #[test]
    fn pipeline_reaches_the_optimum() {
        let inst = lopsided();
        let mut log = BoundLog::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ub = upper_bound_pipeline(
            &inst,
            1,
            16,
            &PpsrOptions::default(),
            &BranchAndBound::new(),
            &mut rng,
            None,
            &mut log,
        )
        .unwrap()
        .unwrap();
        assert_eq!(ub.solution.rt, 1);
        assert!(validate_plan_ok(&inst, &ub.solution.plan));
        assert_eq!(log.events[0].event, "tree_partition");
        assert_eq!(log.best(Track::Upper), Some(1));
    }
}
