use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use blackstart::bounding::upper_bound_pipeline;
use blackstart::generate::{generate_instance, Template};
use blackstart::gss::{find_lower_bound, validate_schedule};
use blackstart::io::{instance_to_json, parse_instance, with_balance_limit};
use blackstart::matpower::import_topology;
use blackstart::randomized::{orchestrate, RunConfig};
use blackstart::report::{
    parse_bound_log, runs_to_csv, tidy_report, BoundLog, PlanFile, ScheduleFile, Track,
};
use blackstart::{
    lower_bound_scan, solve_gss, validate_plan, BusId, Instance, IslandView,
    LoadError, Period, PpsrOptions, PpsrSolution, SolveError, Verdict,
};
use blackstart_milp::{Backend, SolveLimits};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Command, Mode, ModelArgs};

/// How a command failed: `Domain` maps to exit code 1, `Usage` to 2.
#[derive(Debug)]
pub enum Failure {
    Domain(String),
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Backend { .. } | SolveError::InvalidInput(_) => Failure::Usage(e.into()),
            other => Failure::Domain(other.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

pub fn run(command: Command) -> CmdResult {
    match command {
        Command::Validate { instance, plan, model } => cmd_validate(&instance, plan.as_deref(), &model),
        Command::Gss {
            instance,
            horizon,
            aggregate,
            out,
            model,
        } => cmd_gss(&instance, horizon, aggregate, out.as_deref(), &model),
        Command::Solve {
            instance,
            mode,
            horizon,
            seed,
            deadline_sec,
            out,
            log,
            timings,
            model,
        } => {
            let deadline = budget(deadline_sec)?;
            let ctx = SolveArgs {
                horizon,
                seed,
                deadline,
                timings,
            };
            cmd_solve(&instance, mode, &ctx, out.as_deref(), log.as_deref(), &model)
        }
        Command::Randomized {
            instance,
            horizon,
            runs,
            seed,
            deadline_sec,
            max_attempts,
            jobs,
            out,
            plan,
            timings,
            model,
        } => {
            let (inst, opts) = load(&instance, &model, horizon)?;
            let backend = model.backend.create();
            let mut cfg = RunConfig::new(horizon);
            cfg.opts = opts;
            cfg.deadline = budget(deadline_sec)?;
            cfg.max_attempts = Some(max_attempts);
            cmd_randomized(&inst, runs, seed, &cfg, backend.as_ref(), jobs, timings, out.as_deref(), plan.as_deref())
        }
        Command::Gen {
            topology,
            template,
            bs_count,
            seed,
            out,
        } => cmd_gen(&topology, &template, bs_count, seed, out.as_deref()),
        Command::Report { log, out } => cmd_report(&log, out.as_deref()),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Usage)
}

fn emit(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn budget(secs: Option<f64>) -> Result<Option<Duration>, Failure> {
    secs.map(|s| {
        Duration::try_from_secs_f64(s).map_err(|_| Failure::Usage(anyhow!("--deadline-sec must be a non-negative number")))
    })
    .transpose()
}

fn load_error(path: &Path, e: LoadError) -> Failure {
    Failure::Domain(format!("{}: {e}", path.display()))
}

/// Loads and validates an instance and applies the model toggles.
fn load(path: &Path, model: &ModelArgs, horizon: Period) -> Result<(Instance, PpsrOptions), Failure> {
    let text = read(path)?;
    let mut inst = blackstart::load_instance(&text).map_err(|e| load_error(path, e))?;
    let opts = PpsrOptions {
        windows: model.critical_windows,
        balance: model.balance_mw.is_some(),
    };
    if let Some(limit) = model.balance_mw {
        if !(limit.is_finite() && limit >= 0.0) {
            return Err(Failure::Usage(anyhow!("--balance-mw must be finite and non-negative")));
        }
        inst = with_balance_limit(&inst, limit, horizon);
    }
    if opts.windows && inst.critical_windows.is_empty() {
        log::warn!("--critical-windows given but the instance has no windows");
    }
    Ok((inst, opts))
}

fn cmd_validate(path: &Path, plan: Option<&Path>, model: &ModelArgs) -> CmdResult {
    let text = read(path)?;
    let (inst, extra) = match parse_instance(&text) {
        Ok(v) => v,
        Err(e) => return Err(load_error(path, e)),
    };
    let mut report = blackstart::validate_instance(&inst);
    report.violations.splice(0..0, extra);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !report.is_valid() {
        for v in &report.violations {
            println!("violation: {v}");
        }
        return Err(Failure::Domain(format!(
            "{}: {} violation(s)",
            path.display(),
            report.violations.len()
        )));
    }
    println!("instance ok: {} buses, {} lines, {} black-start, {} units", inst.buses.len(), inst.lines.len(), inst.bs.len(), inst.units().len());
    let Some(plan_path) = plan else {
        return Ok(());
    };
    let file = PlanFile::from_json(&read(plan_path)?).map_err(|e| Failure::Domain(format!("{}: {e}", plan_path.display())))?;
    let horizon = file
        .islands
        .iter()
        .filter_map(|i| i.schedule.as_ref().map(|s| s.trace.len() as Period))
        .max()
        .unwrap_or(file.overall_rt)
        .max(file.overall_rt);
    let (inst, opts) = load(path, model, horizon.max(1))?;
    let mut problems: Vec<String> = match validate_plan(&inst, &file.plan(), &opts) {
        Ok(()) => Vec::new(),
        Err(vs) => vs.iter().map(ToString::to_string).collect(),
    };
    for isl in &file.islands {
        let Some(members) = file.plan().islands.get(&isl.bs).cloned() else {
            continue;
        };
        let view = IslandView::of_island(&inst, isl.bs, &members, horizon.max(1), opts.windows);
        match &isl.schedule {
            Some(s) => {
                if let Err(e) = validate_schedule(&view, &s.schedule()) {
                    problems.push(format!("island {}: {e}", isl.bs));
                }
            }
            None if !view.units.is_empty() => problems.push(format!("island {} has units but no schedule", isl.bs)),
            None => {}
        }
    }
    if problems.is_empty() {
        println!("plan ok: {} islands, restoration time {}", file.islands.len(), file.overall_rt);
        Ok(())
    } else {
        for p in &problems {
            println!("violation: {p}");
        }
        Err(Failure::Domain(format!("{}: {} violation(s)", plan_path.display(), problems.len())))
    }
}

fn cmd_gss(path: &Path, horizon: Period, aggregate: bool, out: Option<&Path>, model: &ModelArgs) -> CmdResult {
    let (inst, opts) = load(path, model, horizon)?;
    let view = if aggregate {
        IslandView::aggregate(&inst, horizon, opts.windows)
    } else {
        let [j] = inst.black_start()[..] else {
            return Err(Failure::Domain(format!(
                "gss needs exactly one black-start bus, found {}; use --aggregate or solve",
                inst.bs.len()
            )));
        };
        IslandView::of_island(&inst, j, &inst.buses, horizon, opts.windows)
    };
    let island_bs = inst.black_start().first().copied().unwrap_or(BusId(0));
    let backend = model.backend.create();
    match solve_gss(&view, backend.as_ref(), &SolveLimits::unlimited())? {
        Verdict::Optimal(s) | Verdict::Feasible(s) => {
            let file = ScheduleFile::new(island_bs, &view, &s);
            let mut text = serde_json::to_string_pretty(&file).map_err(anyhow::Error::from)?;
            text.push('\n');
            emit(out, &text)?;
            eprintln!("restoration time {}", s.rt);
            Ok(())
        }
        Verdict::Infeasible => Err(Failure::Domain(format!("infeasible: no schedule within {horizon} periods"))),
        Verdict::TimedOut => Err(Failure::Domain("solver timed out".into())),
    }
}

struct SolveArgs {
    horizon: Period,
    seed: u64,
    deadline: Option<Duration>,
    timings: bool,
}

fn cmd_solve(path: &Path, mode: Mode, args: &SolveArgs, out: Option<&Path>, log_path: Option<&Path>, model: &ModelArgs) -> CmdResult {
    let (inst, opts) = load(path, model, args.horizon)?;
    let backend = model.backend.create();
    let start = Instant::now();
    let deadline = args.deadline.map(|d| start + d);
    let mut log = BoundLog::starting_at(start);

    let t_low = match find_lower_bound(&inst, 1, args.horizon, opts.windows, backend.as_ref(), &SolveLimits::unlimited()) {
        Ok(t) => t,
        Err(SolveError::HorizonTooSmall(h)) => {
            write_log(log_path, &log, args.timings)?;
            return Err(Failure::Domain(format!(
                "infeasible: even the aggregated relaxation needs more than {h} periods"
            )));
        }
        Err(e) => return Err(e.into()),
    };
    log.push(Track::Lower, "aggregate", t_low);

    let mut upper: Option<PpsrSolution> = None;
    if mode == Mode::Bounds {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        if let Some(ub) = upper_bound_pipeline(&inst, t_low, args.horizon, &opts, backend.as_ref(), &mut rng, deadline, &mut log)? {
            upper = Some(ub.solution);
        }
    }
    let scan = lower_bound_scan(&inst, &opts, t_low, args.horizon, backend.as_ref(), deadline, &mut log)?;
    if let Some(sol) = scan.solution {
        if upper.as_ref().is_none_or(|u| sol.rt < u.rt) {
            if mode == Mode::Bounds {
                log.push(Track::Upper, "exact", sol.rt);
            }
            upper = Some(sol);
        }
    }
    write_log(log_path, &log, args.timings)?;

    let lb = log.best(Track::Lower).unwrap_or(t_low);
    let ub = upper.as_ref().map(|s| s.rt);
    let gap = ub.map(|u| u.saturating_sub(lb));
    let show = |x: Option<Period>| x.map_or("none".to_string(), |v| v.to_string());
    eprintln!("lower_bound={lb} upper_bound={} gap={}", show(ub), show(gap));
    let Some(sol) = upper else {
        if scan.lower_bound > args.horizon {
            return Err(Failure::Domain(format!("infeasible: no plan within {} periods", args.horizon)));
        }
        if mode == Mode::Bounds {
            return Ok(());
        }
        return Err(Failure::Domain(format!("no plan found before the deadline; lower bound {lb}")));
    };
    emit(out, &PlanFile::new(&inst, &sol, args.horizon, &opts).to_json())
}

fn write_log(path: Option<&Path>, log: &BoundLog, timings: bool) -> CmdResult {
    match path {
        Some(p) => emit(Some(p), &log.to_csv(timings)),
        None => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_randomized(
    inst: &Instance,
    runs: usize,
    seed: u64,
    cfg: &RunConfig,
    backend: &dyn Backend,
    jobs: usize,
    timings: bool,
    out: Option<&Path>,
    plan_path: Option<&Path>,
) -> CmdResult {
    if runs == 0 {
        return Err(Failure::Usage(anyhow!("--runs must be at least 1")));
    }
    let result = orchestrate(inst, runs, seed, cfg, backend, jobs)?;
    let lower = blackstart::aggregate_lower_bound(inst, cfg.horizon, cfg.opts.windows, backend, &SolveLimits::unlimited()).ok();
    let rows: Vec<_> = result.sorted_by_final().into_iter().map(|r| r.row()).collect();
    emit(out, &runs_to_csv(&rows, timings))?;
    let summary = result.summary(lower);
    let show = |x: Option<Period>| x.map_or("none".to_string(), |v| v.to_string());
    eprintln!(
        "upper_bound={} lower_bound={} feasible={}/{}",
        show(summary.upper_bound),
        show(summary.lower_bound),
        summary.n_feasible,
        summary.n_runs
    );
    if timings {
        if let Some(t) = summary.mean_time_to_feasible {
            eprintln!("mean_time_to_feasible={t:.3}");
        }
    }
    let Some(best) = result.best_run().and_then(|r| r.best.as_ref()) else {
        return Err(Failure::Domain(format!("no feasible plan in {runs} runs")));
    };
    if let Some(p) = plan_path {
        emit(Some(p), &PlanFile::new(inst, best, cfg.horizon, &cfg.opts).to_json())?;
    }
    Ok(())
}

fn cmd_gen(topology: &Path, template: &Path, bs_count: usize, seed: u64, out: Option<&Path>) -> CmdResult {
    let topo = import_topology(&read(topology)?).map_err(|e| Failure::Domain(format!("{}: {e}", topology.display())))?;
    for w in &topo.warnings {
        eprintln!("warning: {w}");
    }
    let tpl = Template::from_json(&read(template)?).map_err(|e| Failure::Domain(format!("{}: {e}", template.display())))?;
    let inst = generate_instance(&topo, &tpl, bs_count, seed).map_err(|e| Failure::Domain(e.to_string()))?;
    let report = blackstart::validate_instance(&inst);
    for v in &report.violations {
        eprintln!("warning: generated instance: {v}");
    }
    emit(out, &instance_to_json(&inst))
}

fn cmd_report(log: &Path, out: Option<&Path>) -> CmdResult {
    let events = parse_bound_log(&read(log)?).map_err(|e| Failure::Domain(format!("{}: {e}", log.display())))?;
    emit(out, &tidy_report(&events))
}
