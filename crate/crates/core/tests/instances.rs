use std::path::PathBuf;

use blackstart::generate::{generate_instance, Template};
use blackstart::io::instance_to_json;
use blackstart::matpower::import_topology;
use blackstart::synth::{random_instance, SynthParams};
use blackstart::{load_instance, validate_instance, BsCurve, NbsParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn data(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn params() -> impl Strategy<Value = NbsParams> {
    (0u32..=30, 0u32..=6, 0u32..=6, 0u32..=200).prop_map(|(c, tc, tr, p)| NbsParams {
        crank_mw: f64::from(c),
        crank_periods: tc,
        ramp_periods: tr,
        max_mw: f64::from(p),
    })
}

proptest! {
    #[test]
    fn capacity_shape(p in params(), k in 1u32..20) {
        for off in 1..=p.crank_periods {
            prop_assert_eq!(p.capacity_at(off), -p.crank_mw);
        }
        let start = p.crank_periods + 1;
        for off in start..start + p.ramp_periods + 5 {
            prop_assert!(p.capacity_at(off + 1) >= p.capacity_at(off));
        }
        prop_assert_eq!(p.capacity_at(p.crank_periods + p.ramp_periods + k), p.max_mw);
    }

    #[test]
    fn critical_load_never_produces(d in 0u32..50, horizon in 1u32..30) {
        let p = NbsParams::critical_load(f64::from(d), horizon);
        for off in 1..=horizon {
            prop_assert_eq!(p.capacity_at(off), -f64::from(d));
        }
    }

    #[test]
    fn json_round_trip(seed in any::<u64>()) {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), &SynthParams::default());
        prop_assert!(validate_instance(&inst).is_valid());
        let back = load_instance(&instance_to_json(&inst)).unwrap();
        prop_assert_eq!(back, inst);
    }
}

#[test]
fn worked_example_file() {
    let inst = load_instance(&data("worked_example.json")).unwrap();
    assert_eq!(inst.bs.len(), 1);
    assert_eq!(inst.units().len(), 2);
    assert_eq!(inst.nbs.values().map(|p| p.capacity_at(4)).next(), Some(20.0));
    assert!(validate_instance(&inst).is_valid());
    assert!(load_instance(&data("two_islands.json")).is_ok());
}

#[test]
fn generated_case_uses_template_capacity() {
    let topo = import_topology(&data("case9.m")).unwrap();
    assert_eq!((topo.buses.len(), topo.lines.len()), (9, 9));
    let template = Template::from_json(&data("template.json")).unwrap();
    let a = generate_instance(&topo, &template, 2, 0).unwrap();
    assert!(a.bs.values().all(|c| *c == BsCurve::Constant(48.49)));
    assert!(validate_instance(&a).is_valid());
    assert_eq!(a.nbs.len(), 3);
    // largest template unit lands on the fastest-ramping generator bus
    assert_eq!(a.nbs[&blackstart::BusId(2)].max_mw, 200.0);
    assert_eq!(a, generate_instance(&topo, &template, 2, 0).unwrap());
    let all = generate_instance(&topo, &template, 9, 3).unwrap();
    assert!(all.units().is_empty());
}
