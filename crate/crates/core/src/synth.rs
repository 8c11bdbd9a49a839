//! Small random instances for oracle comparisons.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::grid::{BsCurve, BusId, Instance, Line, NbsParams, Period, Unit};
use crate::gss::IslandView;

/// Size and parameter ranges of random instances.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub min_buses: u32,
    pub max_buses: u32,
    pub max_black_start: u32,
    pub max_units: u32,
    /// Probability that a non-tree pair of buses is linked.
    pub extra_edge_prob: f64,
    /// Probability that a unit is a critical load instead of a generator.
    pub critical_load_prob: f64,
    /// Probability that a non-BS bus without a unit is kept as transshipment
    /// rather than given a unit (while units remain).
    pub transshipment_prob: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            min_buses: 2,
            max_buses: 8,
            max_black_start: 2,
            max_units: 4,
            extra_edge_prob: 0.25,
            critical_load_prob: 0.15,
            transshipment_prob: 0.3,
        }
    }
}

/// A random connected graph on buses `1..=n`: a random recursive tree plus
/// independent extra edges.
pub fn random_connected_graph<R: Rng>(rng: &mut R, n: u32, extra_edge_prob: f64) -> BTreeSet<Line> {
    let mut lines = BTreeSet::new();
    for v in 2..=n {
        let u = rng.gen_range(1..v);
        lines.insert(Line::new(BusId(u), BusId(v)));
    }
    for u in 1..=n {
        for v in u + 1..=n {
            if rng.gen_bool(extra_edge_prob) {
                lines.insert(Line::new(BusId(u), BusId(v)));
            }
        }
    }
    lines
}

/// A random valid instance.
pub fn random_instance<R: Rng>(rng: &mut R, p: &SynthParams) -> Instance {
    let n = rng.gen_range(p.min_buses.max(2)..=p.max_buses.max(2));
    let mut inst = Instance::new("random");
    inst.buses = (1..=n).map(BusId).collect();
    inst.lines = random_connected_graph(rng, n, p.extra_edge_prob);
    let mut order: Vec<BusId> = inst.buses.iter().copied().collect();
    order.shuffle(rng);
    let n_bs = rng.gen_range(1..=p.max_black_start.clamp(1, n - 1)) as usize;
    for &b in &order[..n_bs] {
        let curve = if rng.gen_bool(0.7) {
            BsCurve::Constant(f64::from(rng.gen_range(2..=15)))
        } else {
            let mut level = f64::from(rng.gen_range(0..=6));
            let len = rng.gen_range(2..=5);
            BsCurve::Series(
                (0..len)
                    .map(|_| {
                        level += f64::from(rng.gen_range(0..=5));
                        level
                    })
                    .collect(),
            )
        };
        inst.bs.insert(b, curve);
    }
    let mut units = 0;
    for &b in &order[n_bs..] {
        if units >= p.max_units || rng.gen_bool(p.transshipment_prob) {
            continue;
        }
        units += 1;
        if rng.gen_bool(p.critical_load_prob) {
            inst.critical_loads.insert(b, f64::from(rng.gen_range(1..=6)));
        } else {
            inst.nbs.insert(b, random_generator(rng));
        }
    }
    inst
}

/// A random single-BS island with up to `max_units` units and a horizon in
/// `1..=max_horizon`.
pub fn random_island<R: Rng>(rng: &mut R, max_units: usize, max_horizon: Period) -> IslandView {
    let bs = if rng.gen_bool(0.7) {
        BsCurve::Constant(f64::from(rng.gen_range(2..=15)))
    } else {
        let mut level = 0.0;
        BsCurve::Series(
            (0..rng.gen_range(1..=4))
                .map(|_| {
                    level += f64::from(rng.gen_range(0..=8));
                    level
                })
                .collect(),
        )
    };
    let n = rng.gen_range(0..=max_units);
    let units = (0..n)
        .map(|k| {
            let unit = if rng.gen_bool(0.15) {
                Unit::CriticalLoad(f64::from(rng.gen_range(1..=6)))
            } else {
                Unit::Generator(random_generator(rng))
            };
            (BusId(k as u32 + 2), unit)
        })
        .collect();
    IslandView::new(bs, units, rng.gen_range(1..=max_horizon.max(1)))
}

pub fn random_generator<R: Rng>(rng: &mut R) -> NbsParams {
    NbsParams {
        crank_mw: f64::from(rng.gen_range(1..=20)),
        crank_periods: rng.gen_range(0..=3),
        ramp_periods: rng.gen_range(1..=3),
        max_mw: f64::from(rng.gen_range(5..=40)),
    }
}

pub fn random_horizon<R: Rng>(rng: &mut R, max: Period) -> Period {
    rng.gen_range(3.min(max)..=max)
}
