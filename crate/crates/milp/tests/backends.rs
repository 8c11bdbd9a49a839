use std::path::PathBuf;
use std::process::Command;
use std::time::Duration;

use blackstart_milp::{
    solve, Backend, BranchAndBound, Exhaustive, ExternalCommand, MilpModel, Sense, SolveLimits,
    SolveStatus, VarId, VarKind,
};
use proptest::prelude::*;

fn backends() -> Vec<Box<dyn Backend>> {
    vec![Box::new(BranchAndBound::new()), Box::new(Exhaustive::new())]
}

fn unlimited(model: &MilpModel, backend: &dyn Backend) -> blackstart_milp::SolveOutcome {
    solve(model, backend, &SolveLimits::unlimited())
}

#[test]
fn empty_model_is_optimal_with_zero_objective() {
    for b in backends() {
        let out = unlimited(&MilpModel::new(), b.as_ref());
        assert_eq!(out.status, SolveStatus::Optimal, "{}", b.name());
        assert_eq!(out.objective, Some(0.0));
    }
}

#[test]
fn single_binary_forced_up() {
    let mut m = MilpModel::new();
    let x = m.add_binary("x");
    m.add_constraint("lb", [(x, 1.0)], Sense::Ge, 1.0).unwrap();
    m.set_objective([(x, 1.0)]).unwrap();
    for b in backends() {
        let out = unlimited(&m, b.as_ref());
        assert_eq!(out.status, SolveStatus::Optimal);
        assert_eq!(out.values.unwrap()[x.index()], 1.0);
    }
}

#[test]
fn contradictory_bounds_are_proven_infeasible() {
    let mut m = MilpModel::new();
    let x = m.add_binary("x");
    m.add_constraint("lb", [(x, 1.0)], Sense::Ge, 1.0).unwrap();
    m.add_constraint("ub", [(x, 1.0)], Sense::Le, 0.0).unwrap();
    for b in backends() {
        let out = unlimited(&m, b.as_ref());
        assert_eq!(out.status, SolveStatus::Infeasible, "{}", b.name());
        assert!(out.values.is_none());
    }
}

#[test]
fn three_binaries_cover_two() {
    let mut m = MilpModel::new();
    let xs: Vec<VarId> = (0..3).map(|k| m.add_binary(format!("x{k}"))).collect();
    m.add_constraint("cover", xs.iter().map(|&x| (x, 1.0)), Sense::Ge, 2.0)
        .unwrap();
    m.set_objective(xs.iter().map(|&x| (x, 1.0))).unwrap();
    for b in backends() {
        let out = unlimited(&m, b.as_ref());
        assert_eq!(out.status, SolveStatus::Optimal);
        assert_eq!(out.objective, Some(2.0));
    }
}

#[test]
fn exhaustive_rejects_oversized_spaces() {
    let mut m = MilpModel::new();
    for k in 0..30 {
        m.add_binary(format!("x{k}"));
    }
    let out = unlimited(&m, &Exhaustive::new());
    assert_eq!(out.status, SolveStatus::Error);
    assert!(out.diagnostic.unwrap().contains("exceeds the cap"));
    let out = unlimited(&m, &Exhaustive::with_cap(2f64.powi(30)));
    assert_eq!(out.status, SolveStatus::Optimal);
}

#[test]
fn exhaustive_rejects_coupled_continuous_rows() {
    let mut m = MilpModel::new();
    let a = m.add_variable("a", VarKind::Continuous, 0.0, 1.0);
    let b = m.add_variable("b", VarKind::Continuous, 0.0, 1.0);
    m.add_constraint("c", [(a, 1.0), (b, 1.0)], Sense::Le, 1.0)
        .unwrap();
    assert_eq!(unlimited(&m, &Exhaustive::new()).status, SolveStatus::Error);
}

#[test]
fn general_integers_and_continuous_objective() {
    // min z  s.t. z >= 2n - 3, z >= 3 - 2n, n integer in [-5, 5], z continuous.
    let mut m = MilpModel::new();
    let n = m.add_variable("n", VarKind::Integer, -5.0, 5.0);
    let z = m.add_variable("z", VarKind::Continuous, -100.0, 100.0);
    m.add_constraint("a", [(z, 1.0), (n, -2.0)], Sense::Ge, -3.0)
        .unwrap();
    m.add_constraint("b", [(z, 1.0), (n, 2.0)], Sense::Ge, 3.0)
        .unwrap();
    m.set_objective([(z, 1.0)]).unwrap();
    for b in backends() {
        let out = unlimited(&m, b.as_ref());
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.objective.unwrap() - 1.0).abs() < 1e-9, "{}", b.name());
    }
}

#[test]
fn warm_start_never_beats_the_optimum() {
    let mut m = MilpModel::new();
    let xs: Vec<VarId> = (0..6).map(|k| m.add_binary(format!("x{k}"))).collect();
    m.add_constraint(
        "knap",
        xs.iter().enumerate().map(|(k, &x)| (x, 2.0 + k as f64)),
        Sense::Ge,
        9.0,
    )
    .unwrap();
    m.set_objective(xs.iter().map(|&x| (x, 1.0))).unwrap();
    m.set_warm_start(xs.iter().map(|&x| (x, 1.0))).unwrap();
    let out = unlimited(&m, &BranchAndBound::new());
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!(out.objective.unwrap() <= 6.0);
    assert_eq!(out.objective, Some(2.0));
}

#[test]
fn node_limit_reports_feasible_or_timed_out() {
    let mut m = MilpModel::new();
    let xs: Vec<VarId> = (0..12).map(|k| m.add_binary(format!("x{k}"))).collect();
    m.add_constraint(
        "odd",
        xs.iter().map(|&x| (x, 2.0)),
        Sense::Eq,
        7.0,
    )
    .unwrap();
    let bnb = BranchAndBound {
        node_limit: Some(5),
    };
    let out = unlimited(&m, &bnb);
    assert_eq!(out.status, SolveStatus::TimedOut);

    let zero = SolveLimits::with_time_limit(Duration::ZERO);
    let mut easy = MilpModel::new();
    let x = easy.add_binary("x");
    easy.set_objective([(x, 1.0)]).unwrap();
    easy.set_warm_start([(x, 1.0)]).unwrap();
    let out = solve(&easy, &BranchAndBound::new(), &zero);
    assert_eq!(out.status, SolveStatus::Feasible);
    assert_eq!(out.objective, Some(1.0));
}

#[test]
fn lying_backend_is_caught_by_the_checker() {
    struct Liar;
    impl Backend for Liar {
        fn name(&self) -> &str {
            "liar"
        }
        fn solve_model(
            &self,
            model: &MilpModel,
            _: &SolveLimits,
        ) -> blackstart_milp::SolveOutcome {
            blackstart_milp::SolveOutcome::solved(
                SolveStatus::Optimal,
                0.0,
                vec![0.0; model.num_vars()],
            )
        }
    }
    let mut m = MilpModel::new();
    let x = m.add_binary("x");
    m.add_constraint("lb", [(x, 1.0)], Sense::Ge, 1.0).unwrap();
    let out = unlimited(&m, &Liar);
    assert_eq!(out.status, SolveStatus::Error);
    assert!(out.values.is_none());
}

#[test]
fn missing_external_program_is_an_error() {
    let out = unlimited(&MilpModel::new(), &ExternalCommand::new("/nonexistent/solver"));
    assert_eq!(out.status, SolveStatus::Error);
    assert!(out.diagnostic.unwrap().contains("unavailable"));
}

fn scipy_shim() -> Option<PathBuf> {
    let ok = Command::new("python3")
        .args(["-c", "from scipy.optimize import milp"])
        .status()
        .is_ok_and(|s| s.success());
    ok.then(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/support/scipy_solver.py"))
}

#[derive(Clone, Debug)]
struct RandomModel {
    binaries: usize,
    integers: usize,
    rows: Vec<(Vec<f64>, f64, f64, u8)>,
    objective: Vec<f64>,
}

fn random_model() -> impl Strategy<Value = RandomModel> {
    (1usize..7, 0usize..3).prop_flat_map(|(binaries, integers)| {
        let n = binaries + integers + 1;
        let row = (
            prop::collection::vec(-4i32..5, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            -6i32..8,
            prop::bool::ANY,
            0u8..3,
        )
            .prop_map(|(coefs, rhs, with_z, sense)| {
                let zc = if with_z { 1.0 } else { 0.0 };
                (coefs, f64::from(rhs), zc, sense)
            });
        (
            prop::collection::vec(row, 1..5),
            prop::collection::vec(-3i32..4, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
        )
            .prop_map(move |(rows, objective)| RandomModel {
                binaries,
                integers,
                rows,
                objective,
            })
    })
}

fn build(r: &RandomModel) -> MilpModel {
    let mut m = MilpModel::new();
    let mut vars = Vec::new();
    for k in 0..r.binaries {
        vars.push(m.add_binary(format!("b{k}")));
    }
    for k in 0..r.integers {
        vars.push(m.add_variable(format!("n{k}"), VarKind::Integer, -2.0, 2.0));
    }
    let z = m.add_variable("z", VarKind::Continuous, -10.0, 10.0);
    for (k, (coefs, rhs, zc, sense)) in r.rows.iter().enumerate() {
        // The last coefficient slot belongs to z and is scaled by the flag.
        let mut terms: Vec<(VarId, f64)> = vars.iter().copied().zip(coefs.iter().copied()).collect();
        terms.push((z, coefs[vars.len()] * zc));
        let sense = [Sense::Le, Sense::Ge, Sense::Eq][*sense as usize];
        m.add_constraint(format!("r{k}"), terms, sense, *rhs).unwrap();
    }
    let mut obj: Vec<(VarId, f64)> = vars.iter().copied().zip(r.objective.iter().copied()).collect();
    obj.push((z, r.objective[vars.len()]));
    m.set_objective(obj).unwrap();
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn branch_and_bound_matches_enumeration(r in random_model()) {
        let m = build(&r);
        let exact = unlimited(&m, &Exhaustive::new());
        let bnb = unlimited(&m, &BranchAndBound::new());
        prop_assert_eq!(exact.status, bnb.status);
        if exact.status == SolveStatus::Optimal {
            let (a, b) = (exact.objective.unwrap(), bnb.objective.unwrap());
            prop_assert!((a - b).abs() < 1e-6, "exhaustive {} vs bnb {}", a, b);
        }
    }
}

#[test]
fn external_backend_agrees_with_enumeration() {
    let Some(shim) = scipy_shim() else {
        eprintln!("python3 with scipy not available; skipping external backend check");
        return;
    };
    let external = ExternalCommand::new(shim);
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(25));
    runner
        .run(&random_model(), |r| {
            let m = build(&r);
            let exact = unlimited(&m, &Exhaustive::new());
            let ext = unlimited(&m, &external);
            prop_assert_eq!(exact.status, ext.status, "{:?}", ext.diagnostic);
            if exact.status == SolveStatus::Optimal {
                prop_assert!((exact.objective.unwrap() - ext.objective.unwrap()).abs() < 1e-6);
            }
            Ok(())
        })
        .unwrap();
}
