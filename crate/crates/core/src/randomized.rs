//! Randomized multi-start heuristic for large grids.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use blackstart_milp::Backend;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bounding::local_search;
use crate::error::{SolveError, Verdict};
use crate::grid::{BusId, Instance, Period};
use crate::gss::{solve_gss, Schedule};
use crate::ppsr::{island_views, remaining, PpsrOptions, PpsrSolution, SectionalizingPlan};
use crate::report::RunRow;

/// Grows islands from the BS buses one bus at a time. Each round draws a
/// fresh uniform value for every pair `(w, j)` with `w` unassigned and
/// adjacent to island `j`, and attaches the pair with the highest value
/// (ties to the lowest bus id, then the lowest BS id).
pub fn random_sectionalizing_plan<R: Rng>(inst: &Instance, rng: &mut R) -> SectionalizingPlan {
    let adj = inst.adjacency();
    let mut plan = SectionalizingPlan::singletons(inst);
    let mut owner: BTreeMap<BusId, BusId> = inst.bs.keys().map(|&j| (j, j)).collect();
    let mut waiting: BTreeSet<BusId> = inst
        .buses
        .iter()
        .copied()
        .filter(|b| !owner.contains_key(b))
        .collect();
    while !waiting.is_empty() {
        let mut best: Option<(f64, BusId, BusId)> = None;
        for &w in &waiting {
            let islands: BTreeSet<BusId> = adj[&w].iter().filter_map(|n| owner.get(n).copied()).collect();
            for j in islands {
                let draw: f64 = rng.gen();
                if best.is_none_or(|(b, _, _)| draw > b) {
                    best = Some((draw, w, j));
                }
            }
        }
        let Some((_, w, j)) = best else {
            log::warn!("{} buses cannot reach any black-start bus", waiting.len());
            break;
        };
        waiting.remove(&w);
        owner.insert(w, j);
        plan.islands.get_mut(&j).expect("island exists").insert(w);
    }
    plan
}

/// Restoration time of a plan.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// `None` when some island cannot be sequenced.
    pub rt: Option<Period>,
    /// The island defining `rt`, or the first island found infeasible.
    pub bottleneck: Option<BusId>,
    pub schedules: BTreeMap<BusId, Schedule>,
    /// True when an island solve hit the time limit instead of a verdict.
    pub timed_out: bool,
}

impl Evaluation {
    pub fn solution(&self, plan: &SectionalizingPlan) -> Option<PpsrSolution> {
        self.rt
            .map(|_| PpsrSolution::new(plan.clone(), self.schedules.clone()))
    }
}

/// Sequences every island at horizon `horizon`, stopping at the first
/// infeasible one.
pub fn evaluate_plan(
    inst: &Instance,
    plan: &SectionalizingPlan,
    horizon: Period,
    opts: &PpsrOptions,
    backend: &dyn Backend,
    deadline: Option<Instant>,
) -> Result<Evaluation, SolveError> {
    let mut schedules = BTreeMap::new();
    for (j, view) in island_views(inst, plan, horizon, opts) {
        let failed = |timed_out| Evaluation {
            rt: None,
            bottleneck: Some(j),
            schedules: BTreeMap::new(),
            timed_out,
        };
        let Some(limits) = remaining(deadline) else {
            return Ok(failed(true));
        };
        match solve_gss(&view, backend, &limits)? {
            Verdict::Optimal(s) | Verdict::Feasible(s) => {
                schedules.insert(j, s);
            }
            Verdict::Infeasible => return Ok(failed(false)),
            Verdict::TimedOut => return Ok(failed(true)),
        }
    }
    let rt = schedules.values().map(|s| s.rt).max().unwrap_or(0);
    let bottleneck = (rt > 0)
        .then(|| schedules.iter().find(|(_, s)| s.rt == rt).map(|(&j, _)| j))
        .flatten();
    Ok(Evaluation {
        rt: Some(rt),
        bottleneck,
        schedules,
        timed_out: false,
    })
}

/// Settings shared by every run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub horizon: Period,
    pub opts: PpsrOptions,
    /// Wall-clock budget per run.
    pub deadline: Option<Duration>,
    /// Cap on random plans drawn per run.
    pub max_attempts: Option<usize>,
}

impl RunConfig {
    pub fn new(horizon: Period) -> RunConfig {
        RunConfig {
            horizon,
            opts: PpsrOptions::default(),
            deadline: None,
            max_attempts: Some(100),
        }
    }
}

/// Record of one randomized run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub run_index: usize,
    pub seed: u64,
    pub found_feasible: bool,
    pub attempts: usize,
    pub time_to_feasible: Option<Duration>,
    pub initial_rt: Option<Period>,
    pub final_rt: Option<Period>,
    pub improved_by_ls: bool,
    pub initial: Option<PpsrSolution>,
    pub best: Option<PpsrSolution>,
}

impl RunResult {
    pub fn row(&self) -> RunRow {
        RunRow {
            run_index: self.run_index,
            seed: self.seed,
            feasible: self.found_feasible,
            time_to_feasible_sec: self.time_to_feasible.map(|d| d.as_secs_f64()),
            initial_rt: self.initial_rt,
            final_rt: self.final_rt,
            ls_improved: self.improved_by_ls,
        }
    }
}

/// Draws random plans until one is feasible, then improves it by local
/// search for the rest of the budget.
pub fn run_once(
    inst: &Instance,
    run_index: usize,
    seed: u64,
    cfg: &RunConfig,
    backend: &dyn Backend,
) -> Result<RunResult, SolveError> {
    let start = Instant::now();
    let deadline = cfg.deadline.map(|d| start + d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut result = RunResult {
        run_index,
        seed,
        found_feasible: false,
        attempts: 0,
        time_to_feasible: None,
        initial_rt: None,
        final_rt: None,
        improved_by_ls: false,
        initial: None,
        best: None,
    };
    let initial = loop {
        if remaining(deadline).is_none() || cfg.max_attempts.is_some_and(|m| result.attempts >= m) {
            return Ok(result);
        }
        result.attempts += 1;
        let plan = random_sectionalizing_plan(inst, &mut rng);
        let eval = evaluate_plan(inst, &plan, cfg.horizon, &cfg.opts, backend, deadline)?;
        if let Some(sol) = eval.solution(&plan) {
            break sol;
        }
    };
    result.found_feasible = true;
    result.time_to_feasible = Some(start.elapsed());
    result.initial_rt = Some(initial.rt);
    let ls = local_search(inst, &initial, initial.rt, &cfg.opts, backend, deadline)?;
    let best = if ls.solution.rt < initial.rt {
        ls.solution
    } else {
        initial.clone()
    };
    result.improved_by_ls = best.rt < initial.rt;
    result.final_rt = Some(best.rt);
    result.initial = Some(initial);
    result.best = Some(best);
    Ok(result)
}

/// All runs of a multi-start experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Orchestration {
    /// Runs in run-index order.
    pub runs: Vec<RunResult>,
    /// Index into `runs` of the best feasible run, if any.
    pub best: Option<usize>,
}

impl Orchestration {
    pub fn best_run(&self) -> Option<&RunResult> {
        self.best.map(|k| &self.runs[k])
    }

    /// Runs ordered by final rt, infeasible runs last.
    pub fn sorted_by_final(&self) -> Vec<&RunResult> {
        let mut v: Vec<&RunResult> = self.runs.iter().collect();
        v.sort_by_key(|r| (r.final_rt.is_none(), r.final_rt, r.run_index));
        v
    }

    pub fn summary(&self, lower_bound: Option<Period>) -> RunSummary {
        let times: Vec<f64> = self
            .runs
            .iter()
            .filter_map(|r| r.time_to_feasible.map(|d| d.as_secs_f64()))
            .collect();
        RunSummary {
            upper_bound: self.best_run().and_then(|r| r.final_rt),
            lower_bound,
            n_runs: self.runs.len(),
            n_feasible: self.runs.iter().filter(|r| r.found_feasible).count(),
            mean_time_to_feasible: (!times.is_empty())
                .then(|| times.iter().sum::<f64>() / times.len() as f64),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub upper_bound: Option<Period>,
    pub lower_bound: Option<Period>,
    pub n_runs: usize,
    pub n_feasible: usize,
    pub mean_time_to_feasible: Option<f64>,
}

/// Runs `n_runs` independent runs seeded `base_seed + i` on `jobs` threads
/// and keeps the lowest final rt (lowest run index on ties).
pub fn orchestrate(
    inst: &Instance,
    n_runs: usize,
    base_seed: u64,
    cfg: &RunConfig,
    backend: &dyn Backend,
    jobs: usize,
) -> Result<Orchestration, SolveError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SolveError::InvalidInput(format!("cannot start worker threads: {e}")))?;
    let runs: Result<Vec<RunResult>, SolveError> = pool.install(|| {
        (0..n_runs)
            .into_par_iter()
            .map(|k| run_once(inst, k, base_seed.wrapping_add(k as u64), cfg, backend))
            .collect()
    });
    let runs = runs?;
    let best = runs
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.final_rt.map(|rt| (rt, k)))
        .min()
        .map(|(_, k)| k);
    Ok(Orchestration { runs, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BsCurve, Line, NbsParams};
    use crate::ppsr::validate_plan;
    use blackstart_milp::BranchAndBound;

    fn nbs(c: f64, tc: Period, tr: Period, p: f64) -> NbsParams {
        NbsParams {
            crank_mw: c,
            crank_periods: tc,
            ramp_periods: tr,
            max_mw: p,
        }
    }

    fn worked() -> Instance {
        let mut inst = Instance::new("worked");
        inst.buses = (1..=3).map(BusId).collect();
        inst.lines = [(1, 2), (1, 3), (2, 3)]
            .iter()
            .map(|&(u, v)| Line::new(BusId(u), BusId(v)))
            .collect();
        inst.bs.insert(BusId(1), BsCurve::Constant(10.0));
        inst.nbs.insert(BusId(2), nbs(10.0, 2, 3, 60.0));
        inst.nbs.insert(BusId(3), nbs(30.0, 6, 9, 180.0));
        inst
    }

    /// j1 -- w -- j2
    fn bridge() -> Instance {
        let mut inst = Instance::new("bridge");
        inst.buses = (1..=3).map(BusId).collect();
        inst.lines = [Line::new(BusId(1), BusId(2)), Line::new(BusId(2), BusId(3))].into();
        inst.bs.insert(BusId(1), BsCurve::Constant(5.0));
        inst.bs.insert(BusId(3), BsCurve::Constant(5.0));
        inst
    }

    #[test]
    fn bridge_bus_joins_one_island() {
        let inst = bridge();
        let mut seen = BTreeSet::new();
        for seed in 0..40 {
            let plan = random_sectionalizing_plan(&inst, &mut ChaCha8Rng::seed_from_u64(seed));
            assert!(validate_plan(&inst, &plan, &PpsrOptions::default()).is_ok());
            assert!(plan.unassigned(&inst).is_empty());
            seen.insert(plan.island_of(BusId(2)).unwrap());
        }
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn single_black_start_takes_everything() {
        let inst = worked();
        let plan = random_sectionalizing_plan(&inst, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(plan.islands[&BusId(1)], inst.buses);
    }

    #[test]
    fn same_seed_same_plan() {
        let inst = bridge();
        let a = random_sectionalizing_plan(&inst, &mut ChaCha8Rng::seed_from_u64(11));
        let b = random_sectionalizing_plan(&inst, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }

    #[test]
    fn evaluate_worked_example() {
        let inst = worked();
        let plan = SectionalizingPlan::from_assignment(&inst, [(BusId(2), BusId(1)), (BusId(3), BusId(1))]);
        let e = evaluate_plan(&inst, &plan, 20, &PpsrOptions::default(), &BranchAndBound::new(), None).unwrap();
        assert_eq!((e.rt, e.bottleneck), (Some(4), Some(BusId(1))));
    }

    #[test]
    fn evaluate_infeasible_island() {
        let mut inst = bridge();
        inst.buses.insert(BusId(4));
        inst.lines.insert(Line::new(BusId(3), BusId(4)));
        inst.nbs.insert(BusId(4), nbs(50.0, 1, 1, 60.0));
        let plan = SectionalizingPlan::from_assignment(&inst, [(BusId(2), BusId(1)), (BusId(4), BusId(3))]);
        let e = evaluate_plan(&inst, &plan, 10, &PpsrOptions::default(), &BranchAndBound::new(), None).unwrap();
        assert_eq!((e.rt, e.bottleneck, e.timed_out), (None, Some(BusId(3)), false));
    }

    #[test]
    fn evaluate_without_units() {
        let inst = bridge();
        let plan = SectionalizingPlan::from_assignment(&inst, [(BusId(2), BusId(1))]);
        let e = evaluate_plan(&inst, &plan, 10, &PpsrOptions::default(), &BranchAndBound::new(), None).unwrap();
        assert_eq!((e.rt, e.bottleneck), (Some(0), None));
    }

    #[test]
    fn zero_deadline_finds_nothing() {
        let mut cfg = RunConfig::new(20);
        cfg.deadline = Some(Duration::ZERO);
        let r = run_once(&worked(), 0, 0, &cfg, &BranchAndBound::new()).unwrap();
        assert!(!r.found_feasible);
        assert_eq!(r.final_rt, None);
    }

    #[test]
    fn single_island_run() {
        let r = run_once(&worked(), 0, 5, &RunConfig::new(20), &BranchAndBound::new()).unwrap();
        assert_eq!((r.attempts, r.initial_rt, r.final_rt), (1, Some(4), Some(4)));
        assert!(!r.improved_by_ls);
    }

    #[test]
    fn orchestration_matches_independent_runs() {
        let inst = worked();
        let cfg = RunConfig::new(20);
        let strip = |mut r: RunResult| {
            r.time_to_feasible = None;
            r
        };
        let o = orchestrate(&inst, 3, 7, &cfg, &BranchAndBound::new(), 2).unwrap();
        assert_eq!(o.best, Some(0));
        for (k, r) in o.runs.into_iter().enumerate() {
            let alone = run_once(&inst, k, 7 + k as u64, &cfg, &BranchAndBound::new()).unwrap();
            assert_eq!(strip(r), strip(alone));
        }
    }
}
