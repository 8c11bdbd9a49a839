use blackstart::gss::{capacity_trace, validate_schedule};
use blackstart::synth::random_island;
use blackstart::{gss_bruteforce, solve_gss, OracleLimits, Verdict};
use blackstart_milp::{BranchAndBound, Exhaustive, SolveLimits};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn solver_matches_enumeration(seed in any::<u64>()) {
        let island = random_island(&mut ChaCha8Rng::seed_from_u64(seed), 4, 10);
        let oracle = gss_bruteforce(&island, &OracleLimits::default()).unwrap();
        let got = solve_gss(&island, &BranchAndBound::new(), &SolveLimits::unlimited()).unwrap();
        match (&got, &oracle) {
            (Verdict::Optimal(s), Some(o)) => {
                prop_assert_eq!(s.rt, o.rt);
                prop_assert!(validate_schedule(&island, s).is_ok());
            }
            (Verdict::Infeasible, None) => {}
            _ => prop_assert!(false, "solver {:?} vs oracle {:?}", got, oracle),
        }
    }

    #[test]
    fn oracle_schedule_trace_is_non_negative(seed in any::<u64>()) {
        let island = random_island(&mut ChaCha8Rng::seed_from_u64(seed), 4, 8);
        if let Some(s) = gss_bruteforce(&island, &OracleLimits::default()).unwrap() {
            prop_assert!(capacity_trace(&island, &s.start).iter().all(|&c| c >= -1e-9));
        }
    }

    #[test]
    fn feasibility_is_monotone_in_horizon(seed in any::<u64>()) {
        let island = random_island(&mut ChaCha8Rng::seed_from_u64(seed), 3, 8);
        let limits = OracleLimits::default();
        if let Some(s) = gss_bruteforce(&island, &limits).unwrap() {
            let longer = island.with_horizon(island.horizon + 2);
            let t = gss_bruteforce(&longer, &limits).unwrap().expect("still feasible");
            prop_assert_eq!(t.rt, s.rt);
        }
    }
}

#[test]
fn exhaustive_backend_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..25 {
        let island = random_island(&mut rng, 3, 5);
        let a = solve_gss(&island, &BranchAndBound::new(), &SolveLimits::unlimited()).unwrap();
        let b = solve_gss(&island, &Exhaustive::new(), &SolveLimits::unlimited()).unwrap();
        assert_eq!(a.solution().map(|s| s.rt), b.solution().map(|s| s.rt));
        assert_eq!(a.is_infeasible(), b.is_infeasible());
    }
}
