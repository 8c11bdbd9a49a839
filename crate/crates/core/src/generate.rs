//! Synthetic instances built on an imported topology by transplanting a
//! library of generator and load parameters.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GenerateError;
use crate::grid::{BsCurve, BusId, Instance, Mw, NbsParams};
use crate::matpower::Topology;

/// Parameter library taken from a reference system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    #[serde(default)]
    pub name: String,
    pub bs_capacities_mw: Vec<Mw>,
    pub generators: Vec<NbsParams>,
    #[serde(default)]
    pub critical_loads_mw: Vec<Mw>,
}

impl Template {
    pub fn max_bs_capacity(&self) -> Option<Mw> {
        self.bs_capacities_mw.iter().copied().reduce(f64::max)
    }

    pub fn from_json(text: &str) -> Result<Template, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Buses ordered by decreasing key, lowest id first on ties.
fn ranked(mut buses: Vec<(BusId, f64)>) -> Vec<BusId> {
    buses.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    buses.into_iter().map(|(b, _)| b).collect()
}

/// Index into a library of `n` items for target rank `r` of `m`, so the
/// first target gets the first item and the last target the last.
fn rank_index(r: usize, m: usize, n: usize) -> usize {
    if m <= 1 {
        0
    } else {
        (r * (n - 1) + (m - 1) / 2) / (m - 1)
    }
}

/// Builds an instance on `topo`:
///
/// * the `bs_count` highest-degree buses become BS buses with a constant
///   curve at the largest template BS capacity;
/// * template generators, largest capacity first, go to the non-BS generator
///   buses ranked by ramp rate (by `Pmax` when the case has no ramp data);
/// * template critical loads, largest first, go to the remaining buses
///   ranked by demand.
///
/// When the case marks no generator (or no demand) buses, sites are drawn
/// at random from the seed.
pub fn generate_instance(
    topo: &Topology,
    template: &Template,
    bs_count: usize,
    seed: u64,
) -> Result<Instance, GenerateError> {
    let cap = template.max_bs_capacity().ok_or(GenerateError::EmptyTemplate)?;
    if template.generators.is_empty() {
        return Err(GenerateError::EmptyTemplate);
    }
    if bs_count < 1 {
        return Err(GenerateError::NoBlackStart);
    }
    if bs_count > topo.buses.len() {
        return Err(GenerateError::TooManyBlackStart {
            requested: bs_count,
            available: topo.buses.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inst = Instance::new(if template.name.is_empty() {
        topo.name.clone()
    } else {
        format!("{}+{}", topo.name, template.name)
    });
    inst.buses = topo.buses.clone();
    inst.lines = topo.lines.clone();

    let by_degree = ranked(topo.buses.iter().map(|&b| (b, topo.degree(b) as f64)).collect());
    for &b in &by_degree[..bs_count] {
        inst.bs.insert(b, BsCurve::Constant(cap));
    }
    let attr = |b: &BusId| topo.attrs.get(b).cloned().unwrap_or_default();
    let free: Vec<BusId> = topo.buses.iter().copied().filter(|b| !inst.bs.contains_key(b)).collect();

    let use_ramp = free.iter().any(|b| attr(b).ramp > 0.0);
    let mut gen_sites: Vec<(BusId, f64)> = free
        .iter()
        .filter(|b| attr(b).has_gen)
        .map(|b| {
            let a = attr(b);
            (*b, if use_ramp { a.ramp } else { a.pmax })
        })
        .collect();
    if gen_sites.is_empty() && !topo.attrs.values().any(|a| a.has_gen) {
        let mut pool = free.clone();
        pool.shuffle(&mut rng);
        pool.truncate(template.generators.len());
        pool.sort();
        gen_sites = pool.into_iter().map(|b| (b, 0.0)).collect();
    }
    let gen_sites = ranked(gen_sites);
    let mut gens = template.generators.clone();
    gens.sort_by(|a, b| b.max_mw.partial_cmp(&a.max_mw).unwrap_or(Ordering::Equal));
    for (r, &b) in gen_sites.iter().enumerate() {
        inst.nbs.insert(b, gens[rank_index(r, gen_sites.len(), gens.len())]);
    }

    let mut loads = template.critical_loads_mw.clone();
    loads.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    if !loads.is_empty() {
        let rest: Vec<BusId> = free.iter().copied().filter(|b| !inst.nbs.contains_key(b)).collect();
        let mut load_sites: Vec<(BusId, f64)> =
            rest.iter().filter(|b| attr(b).pd > 0.0).map(|b| (*b, attr(b).pd)).collect();
        if load_sites.is_empty() {
            let mut pool = rest;
            pool.shuffle(&mut rng);
            pool.truncate(loads.len());
            pool.sort();
            load_sites = pool.into_iter().map(|b| (b, 0.0)).collect();
        }
        let load_sites = ranked(load_sites);
        for (r, &b) in load_sites.iter().enumerate() {
            inst.critical_loads.insert(b, loads[rank_index(r, load_sites.len(), loads.len())]);
        }
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Line;
    use crate::matpower::BusAttrs;

    fn star_topology() -> Topology {
        // Bus 1 is the hub; 2..=5 are leaves, 5 also links to 4.
        let mut t = Topology {
            name: "star".into(),
            ..Topology::default()
        };
        for b in 1..=5 {
            t.buses.insert(BusId(b));
            t.attrs.insert(BusId(b), BusAttrs::default());
        }
        for (u, v) in [(1, 2), (1, 3), (1, 4), (1, 5), (4, 5)] {
            t.lines.insert(Line::new(BusId(u), BusId(v)));
        }
        for (b, ramp) in [(2, 1.0), (3, 5.0)] {
            let a = t.attrs.get_mut(&BusId(b)).unwrap();
            a.has_gen = true;
            a.ramp = ramp;
            a.pmax = 100.0 - ramp;
        }
        t.attrs.get_mut(&BusId(4)).unwrap().pd = 3.0;
        t.attrs.get_mut(&BusId(5)).unwrap().pd = 7.0;
        t
    }

    fn template() -> Template {
        let g = |p| NbsParams {
            crank_mw: 1.0,
            crank_periods: 1,
            ramp_periods: 2,
            max_mw: p,
        };
        Template {
            name: "t".into(),
            bs_capacities_mw: vec![12.36, 48.49, 8.87],
            generators: vec![g(10.0), g(50.0), g(30.0)],
            critical_loads_mw: vec![1.0, 4.0],
        }
    }

    #[test]
    fn rank_matching() {
        let inst = generate_instance(&star_topology(), &template(), 1, 0).unwrap();
        assert_eq!(inst.bs.keys().copied().collect::<Vec<_>>(), vec![BusId(1)]);
        assert_eq!(inst.bs[&BusId(1)], BsCurve::Constant(48.49));
        assert_eq!(inst.nbs[&BusId(3)].max_mw, 50.0);
        assert_eq!(inst.nbs[&BusId(2)].max_mw, 10.0);
        assert_eq!(inst.critical_loads[&BusId(5)], 4.0);
        assert_eq!(inst.critical_loads[&BusId(4)], 1.0);
        assert!(crate::io::validate_instance(&inst).is_valid());
    }

    #[test]
    fn degree_ties_go_to_lowest_id() {
        let inst = generate_instance(&star_topology(), &template(), 3, 0).unwrap();
        // degrees: 1 -> 4, 4 and 5 -> 2, others 1
        let bs: Vec<BusId> = inst.bs.keys().copied().collect();
        assert_eq!(bs, vec![BusId(1), BusId(4), BusId(5)]);
    }

    #[test]
    fn every_bus_black_start() {
        let inst = generate_instance(&star_topology(), &template(), 5, 0).unwrap();
        assert_eq!(inst.bs.len(), 5);
        assert!(inst.nbs.is_empty() && inst.critical_loads.is_empty());
    }

    #[test]
    fn errors() {
        let t = star_topology();
        let mut empty = template();
        empty.generators.clear();
        assert_eq!(generate_instance(&t, &empty, 1, 0), Err(GenerateError::EmptyTemplate));
        assert_eq!(generate_instance(&t, &template(), 0, 0), Err(GenerateError::NoBlackStart));
        assert!(matches!(
            generate_instance(&t, &template(), 6, 0),
            Err(GenerateError::TooManyBlackStart { .. })
        ));
    }

    #[test]
    fn seeded_sites_are_deterministic() {
        let mut t = star_topology();
        for a in t.attrs.values_mut() {
            *a = BusAttrs::default();
        }
        let a = generate_instance(&t, &template(), 1, 9).unwrap();
        let b = generate_instance(&t, &template(), 1, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.nbs.len(), 3);
        assert_eq!(a.critical_loads.len(), 1);
    }

    #[test]
    fn rank_index_endpoints() {
        assert_eq!(rank_index(0, 5, 3), 0);
        assert_eq!(rank_index(4, 5, 3), 2);
        assert_eq!(rank_index(0, 1, 3), 0);
        assert_eq!(rank_index(1, 2, 10), 9);
    }
}
