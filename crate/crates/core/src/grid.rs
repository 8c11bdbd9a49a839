//! Grid, generator and instance types.
//!
//! An [`Instance`] is the immutable description of a blacked-out grid:
//! buses and lines, black-start (BS) curves, non-black-start (NBS)
//! generator parameters, critical loads and optional side constraints.
//! Time is measured in periods everywhere; `period_minutes` is metadata.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Megawatts.
pub type Mw = f64;
/// A 1-based period index or a count of periods.
pub type Period = u32;

/// Tolerance used when a capacity trace is compared against zero.
pub const CAPACITY_TOL: Mw = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusRole {
    BlackStart,
    NonBlackStart,
    Transshipment,
}

/// A transmission line with a fixed orientation: lowest id first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Line {
    pub u: BusId,
    pub v: BusId,
}

impl Line {
    /// Orients the line from the lower to the higher bus id.
    pub fn new(a: BusId, b: BusId) -> Line {
        if a <= b {
            Line { u: a, v: b }
        } else {
            Line { u: b, v: a }
        }
    }

    pub fn other(&self, end: BusId) -> BusId {
        if end == self.u {
            self.v
        } else {
            self.u
        }
    }

    pub fn touches(&self, bus: BusId) -> bool {
        self.u == bus || self.v == bus
    }
}

/// Startup parameters of an NBS generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NbsParams {
    /// Cranking power drawn while starting.
    pub crank_mw: Mw,
    pub crank_periods: Period,
    pub ramp_periods: Period,
    /// Full output once ramping completes.
    pub max_mw: Mw,
}

impl NbsParams {
    /// A critical load of `demand` encoded as a generator that cranks for
    /// the whole horizon and never produces power.
    pub fn critical_load(demand: Mw, horizon: Period) -> NbsParams {
        NbsParams {
            crank_mw: demand,
            crank_periods: horizon,
            ramp_periods: 0,
            max_mw: 0.0,
        }
    }

    /// The zero-capacity unit used for transshipment buses.
    pub fn zero() -> NbsParams {
        NbsParams {
            crank_mw: 0.0,
            crank_periods: 0,
            ramp_periods: 0,
            max_mw: 0.0,
        }
    }

    /// Output at `offset` periods after the start; offset 1 is the start
    /// period itself.
    ///
    /// Cranking draws `-crank_mw` for `crank_periods` periods, output then
    /// ramps linearly from zero in steps of `max_mw / ramp_periods` and
    /// stays at `max_mw` from offset `crank + ramp + 1` on.
    pub fn capacity_at(&self, offset: Period) -> Mw {
        debug_assert!(offset >= 1, "offsets start at 1");
        let crank = self.crank_periods;
        let ramp = self.ramp_periods;
        if offset <= crank {
            -self.crank_mw
        } else if offset <= crank + ramp {
            f64::from(offset - crank - 1) * self.max_mw / f64::from(ramp)
        } else {
            self.max_mw
        }
    }
}

/// Output of a black-start generator by period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BsCurve {
    Constant(Mw),
    /// Output for periods `1..=len`; later periods hold the last value.
    Series(Vec<Mw>),
}

impl BsCurve {
    pub fn at(&self, period: Period) -> Mw {
        debug_assert!(period >= 1);
        match self {
            BsCurve::Constant(c) => *c,
            BsCurve::Series(s) => {
                let idx = (period as usize - 1).min(s.len().saturating_sub(1));
                s.get(idx).copied().unwrap_or(0.0)
            }
        }
    }

    /// Pointwise sum of several curves over `1..=horizon`.
    pub fn aggregate<'a>(curves: impl IntoIterator<Item = &'a BsCurve>, horizon: Period) -> BsCurve {
        let curves: Vec<&BsCurve> = curves.into_iter().collect();
        if curves.iter().all(|c| matches!(c, BsCurve::Constant(_))) {
            return BsCurve::Constant(curves.iter().map(|c| c.at(1)).sum());
        }
        BsCurve::Series(
            (1..=horizon.max(1))
                .map(|t| curves.iter().map(|c| c.at(t)).sum())
                .collect(),
        )
    }

    fn is_decreasing_somewhere(&self) -> bool {
        match self {
            BsCurve::Constant(_) => false,
            BsCurve::Series(s) => s.windows(2).any(|w| w[1] < w[0]),
        }
    }
}

/// Earliest and latest allowed start period of a unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticalWindow {
    pub earliest: Period,
    pub latest: Period,
}

/// Load-generation balance: every island's net injection stays in
/// `[-limit_mw, limit_mw]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Balance {
    pub limit_mw: Mw,
    /// Net generation per bus; positive for generation, negative for load.
    #[serde(default)]
    pub net_mw: BTreeMap<BusId, Mw>,
}

/// What an NBS-role bus carries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unit {
    Generator(NbsParams),
    CriticalLoad(Mw),
}

impl Unit {
    /// Concrete parameters for a model with the given horizon.
    pub fn params(&self, horizon: Period) -> NbsParams {
        match *self {
            Unit::Generator(p) => p,
            Unit::CriticalLoad(d) => NbsParams::critical_load(d, horizon),
        }
    }
}

/// A restoration instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub name: String,
    pub period_minutes: u32,
    pub buses: BTreeSet<BusId>,
    pub lines: BTreeSet<Line>,
    pub bs: BTreeMap<BusId, BsCurve>,
    pub nbs: BTreeMap<BusId, NbsParams>,
    pub critical_loads: BTreeMap<BusId, Mw>,
    pub critical_windows: BTreeMap<BusId, CriticalWindow>,
    pub balance: Option<Balance>,
}

impl Instance {
    pub fn new(name: impl Into<String>) -> Instance {
        Instance {
            name: name.into(),
            period_minutes: 5,
            buses: BTreeSet::new(),
            lines: BTreeSet::new(),
            bs: BTreeMap::new(),
            nbs: BTreeMap::new(),
            critical_loads: BTreeMap::new(),
            critical_windows: BTreeMap::new(),
            balance: None,
        }
    }

    pub fn role(&self, bus: BusId) -> BusRole {
        if self.bs.contains_key(&bus) {
            BusRole::BlackStart
        } else if self.nbs.contains_key(&bus) || self.critical_loads.contains_key(&bus) {
            BusRole::NonBlackStart
        } else {
            BusRole::Transshipment
        }
    }

    /// BS buses in ascending id order.
    pub fn black_start(&self) -> Vec<BusId> {
        self.bs.keys().copied().collect()
    }

    /// NBS generators and critical loads in ascending id order.
    pub fn units(&self) -> Vec<(BusId, Unit)> {
        let mut out: Vec<(BusId, Unit)> = self
            .nbs
            .iter()
            .map(|(&b, &p)| (b, Unit::Generator(p)))
            .chain(
                self.critical_loads
                    .iter()
                    .map(|(&b, &d)| (b, Unit::CriticalLoad(d))),
            )
            .collect();
        out.sort_by_key(|(b, _)| *b);
        out
    }

    pub fn unit(&self, bus: BusId) -> Option<Unit> {
        self.nbs
            .get(&bus)
            .map(|&p| Unit::Generator(p))
            .or_else(|| self.critical_loads.get(&bus).map(|&d| Unit::CriticalLoad(d)))
    }

    pub fn transshipment(&self) -> Vec<BusId> {
        self.buses
            .iter()
            .copied()
            .filter(|&b| self.role(b) == BusRole::Transshipment)
            .collect()
    }

    /// Sorted neighbour lists.
    pub fn adjacency(&self) -> BTreeMap<BusId, Vec<BusId>> {
        adjacency(&self.buses, &self.lines)
    }

    pub fn degree(&self, bus: BusId) -> usize {
        self.lines.iter().filter(|l| l.touches(bus)).count()
    }

    pub fn is_connected(&self) -> bool {
        induced_connected(&self.adjacency(), &self.buses)
    }

    /// The subinstance induced by `keep`: lines with both ends kept, and
    /// every per-bus record restricted to `keep`.
    pub fn induced(&self, keep: &BTreeSet<BusId>) -> Instance {
        let mut sub = self.clone();
        sub.buses = self.buses.intersection(keep).copied().collect();
        sub.lines = self
            .lines
            .iter()
            .copied()
            .filter(|l| keep.contains(&l.u) && keep.contains(&l.v))
            .collect();
        sub.bs.retain(|b, _| keep.contains(b));
        sub.nbs.retain(|b, _| keep.contains(b));
        sub.critical_loads.retain(|b, _| keep.contains(b));
        sub.critical_windows.retain(|b, _| keep.contains(b));
        if let Some(bal) = &mut sub.balance {
            bal.net_mw.retain(|b, _| keep.contains(b));
        }
        sub
    }

    /// Same buses and data, different line set.
    pub fn with_lines(&self, lines: impl IntoIterator<Item = Line>) -> Instance {
        let mut sub = self.clone();
        sub.lines = lines.into_iter().collect();
        sub
    }

    /// Lists every violated invariant. An empty report means valid.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let v = &mut report.violations;
        if self.bs.is_empty() {
            v.push(Violation::NoBlackStart);
        }
        for bus in self.bs.keys().chain(self.nbs.keys()).chain(self.critical_loads.keys()) {
            if !self.buses.contains(bus) {
                v.push(Violation::UnknownBus(*bus));
            }
        }
        for &bus in &self.buses {
            let roles = usize::from(self.bs.contains_key(&bus))
                + usize::from(self.nbs.contains_key(&bus))
                + usize::from(self.critical_loads.contains_key(&bus));
            if roles > 1 {
                v.push(Violation::MultipleRoles(bus));
            }
        }
        for l in &self.lines {
            if l.u == l.v {
                v.push(Violation::SelfLoop(l.u));
            }
            if !self.buses.contains(&l.u) || !self.buses.contains(&l.v) {
                v.push(Violation::LineEndpoint(*l));
            }
        }
        for (&bus, curve) in &self.bs {
            let bad = match curve {
                BsCurve::Constant(c) => !(c.is_finite() && *c >= 0.0),
                BsCurve::Series(s) => s.is_empty() || s.iter().any(|x| !(x.is_finite() && *x >= 0.0)),
            };
            if bad {
                v.push(Violation::BadCurve(bus));
            } else if curve.is_decreasing_somewhere() {
                report
                    .warnings
                    .push(format!("black-start curve at bus {bus} decreases over time"));
            }
        }
        for (&bus, p) in &self.nbs {
            let finite = p.crank_mw.is_finite() && p.max_mw.is_finite();
            if !finite || p.crank_mw < 0.0 || p.max_mw <= 0.0 || p.ramp_periods < 1 {
                v.push(Violation::BadGenerator(bus));
            }
        }
        for (&bus, &d) in &self.critical_loads {
            if !(d.is_finite() && d > 0.0) {
                v.push(Violation::BadCriticalLoad(bus));
            }
        }
        for (&bus, w) in &self.critical_windows {
            if w.earliest > w.latest {
                v.push(Violation::InvertedWindow(bus));
            }
            if self.role(bus) != BusRole::NonBlackStart {
                v.push(Violation::WindowWithoutUnit(bus));
            }
        }
        if let Some(b) = &self.balance {
            if !(b.limit_mw.is_finite() && b.limit_mw >= 0.0) {
                v.push(Violation::BadBalance);
            }
        }
        if !self.buses.is_empty() && !self.is_connected() {
            v.push(Violation::Disconnected);
        }
        report
    }
}

/// A violated instance invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    DuplicateBus(BusId),
    DuplicateLine(Line),
    SelfLoop(BusId),
    LineEndpoint(Line),
    UnknownBus(BusId),
    MultipleRoles(BusId),
    NoBlackStart,
    BadCurve(BusId),
    BadGenerator(BusId),
    BadCriticalLoad(BusId),
    InvertedWindow(BusId),
    WindowWithoutUnit(BusId),
    BadBalance,
    Disconnected,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateBus(b) => write!(f, "duplicate bus id {b}"),
            Violation::DuplicateLine(l) => write!(f, "duplicate line {}-{}", l.u, l.v),
            Violation::SelfLoop(b) => write!(f, "self-loop line at bus {b}"),
            Violation::LineEndpoint(l) => write!(f, "line {}-{} references an unknown bus", l.u, l.v),
            Violation::UnknownBus(b) => write!(f, "bus {b} is referenced but not declared"),
            Violation::MultipleRoles(b) => write!(f, "bus {b} has more than one role"),
            Violation::NoBlackStart => write!(f, "no black-start generator"),
            Violation::BadCurve(b) => write!(f, "black-start curve at bus {b} is empty, negative or non-finite"),
            Violation::BadGenerator(b) => write!(
                f,
                "generator at bus {b} needs crank_mw >= 0, max_mw > 0 and ramp_periods >= 1"
            ),
            Violation::BadCriticalLoad(b) => write!(f, "critical load at bus {b} needs demand_mw > 0"),
            Violation::InvertedWindow(b) => write!(f, "critical window at bus {b} has earliest > latest"),
            Violation::WindowWithoutUnit(b) => {
                write!(f, "critical window at bus {b} has no generator or critical load")
            }
            Violation::BadBalance => write!(f, "balance limit must be finite and non-negative"),
            Violation::Disconnected => write!(f, "disconnected graph"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub(crate) fn adjacency(
    buses: &BTreeSet<BusId>,
    lines: &BTreeSet<Line>,
) -> BTreeMap<BusId, Vec<BusId>> {
    let mut adj: BTreeMap<BusId, Vec<BusId>> = buses.iter().map(|&b| (b, Vec::new())).collect();
    for l in lines {
        adj.entry(l.u).or_default().push(l.v);
        adj.entry(l.v).or_default().push(l.u);
    }
    for n in adj.values_mut() {
        n.sort_unstable();
        n.dedup();
    }
    adj
}

/// Breadth-first search from `root` restricted to `members`, visiting
/// neighbours in ascending id order. Returns the parent of every reached
/// bus (the root maps to itself).
pub fn bfs_tree(
    adj: &BTreeMap<BusId, Vec<BusId>>,
    members: &BTreeSet<BusId>,
    root: BusId,
) -> BTreeMap<BusId, BusId> {
    let mut parent = BTreeMap::new();
    if !members.contains(&root) {
        return parent;
    }
    parent.insert(root, root);
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &w in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            if members.contains(&w) && !parent.contains_key(&w) {
                parent.insert(w, u);
                queue.push_back(w);
            }
        }
    }
    parent
}

/// Whether `members` induces a connected subgraph (empty sets count as
/// connected).
pub fn induced_connected(adj: &BTreeMap<BusId, Vec<BusId>>, members: &BTreeSet<BusId>) -> bool {
    match members.iter().next() {
        None => true,
        Some(&root) => bfs_tree(adj, members, root).len() == members.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn figure_one() -> NbsParams {
        NbsParams {
            crank_mw: 10.0,
            crank_periods: 2,
            ramp_periods: 3,
            max_mw: 60.0,
        }
    }

    #[test]
    fn capacity_curve_of_the_reference_generator() {
        let p = figure_one();
        let trace: Vec<Mw> = (1..=8).map(|k| p.capacity_at(k)).collect();
        assert_eq!(trace, vec![-10.0, -10.0, 0.0, 20.0, 40.0, 60.0, 60.0, 60.0]);
    }

    #[test]
    fn critical_load_never_produces_power() {
        let p = NbsParams::critical_load(7.5, 12);
        assert!((1..=12).all(|k| p.capacity_at(k) == -7.5));
    }

    #[test]
    fn transshipment_unit_is_flat_zero() {
        assert!((1..=5).all(|k| NbsParams::zero().capacity_at(k) == 0.0));
    }

    #[test]
    fn series_curve_holds_its_last_value() {
        let c = BsCurve::Series(vec![1.0, 2.0, 5.0]);
        assert_eq!(c.at(1), 1.0);
        assert_eq!(c.at(3), 5.0);
        assert_eq!(c.at(40), 5.0);
        let sum = BsCurve::aggregate([&c, &BsCurve::Constant(10.0)], 4);
        assert_eq!(sum, BsCurve::Series(vec![11.0, 12.0, 15.0, 15.0]));
    }

    #[test]
    fn line_orientation_is_lowest_id_first() {
        let l = Line::new(BusId(9), BusId(4));
        assert_eq!((l.u, l.v), (BusId(4), BusId(9)));
        assert_eq!(l.other(BusId(4)), BusId(9));
    }

    #[test]
    fn bfs_respects_membership_and_order() {
        let buses: BTreeSet<BusId> = (1..=4).map(BusId).collect();
        let lines: BTreeSet<Line> = [(1, 2), (1, 3), (2, 4), (3, 4)]
            .into_iter()
            .map(|(a, b)| Line::new(BusId(a), BusId(b)))
            .collect();
        let adj = adjacency(&buses, &lines);
        let tree = bfs_tree(&adj, &buses, BusId(1));
        assert_eq!(tree[&BusId(4)], BusId(2));
        let without_two: BTreeSet<BusId> = [1, 3, 4].into_iter().map(BusId).collect();
        assert_eq!(bfs_tree(&adj, &without_two, BusId(1))[&BusId(4)], BusId(3));
        let split: BTreeSet<BusId> = [1, 4].into_iter().map(BusId).collect();
        assert!(!induced_connected(&adj, &split));
    }
}
