//! Instance file format.
//!
//! Instances are JSON documents:
//!
//! ```json
//! {
//!   "name": "three-bus",
//!   "period_minutes": 5,
//!   "buses": [1, 2, 3],
//!   "lines": [[1, 2], [1, 3], [2, 3]],
//!   "bs": [{"bus": 1, "curve": 10.0}],
//!   "nbs": [{"bus": 2, "crank_mw": 10, "crank_periods": 2, "ramp_periods": 3, "max_mw": 60}],
//!   "critical_loads": [{"bus": 3, "demand_mw": 4.5}],
//!   "critical_windows": [{"bus": 2, "earliest": 1, "latest": 6}],
//!   "balance": {"limit_mw": 50, "net_mw": {"2": 60, "3": -4.5}}
//! }
//! ```
//!
//! `curve` is either a number (constant output) or an array of MW values
//! for periods 1, 2, ...

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::LoadError;
use crate::grid::{
    Balance, BsCurve, BusId, CriticalWindow, Instance, Line, Mw, NbsParams, Period,
    ValidationReport, Violation,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsRecord {
    pub bus: BusId,
    pub curve: BsCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NbsRecord {
    pub bus: BusId,
    pub crank_mw: Mw,
    pub crank_periods: Period,
    pub ramp_periods: Period,
    pub max_mw: Mw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalLoadRecord {
    pub bus: BusId,
    pub demand_mw: Mw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub bus: BusId,
    pub earliest: Period,
    pub latest: Period,
}

fn default_period_minutes() -> u32 {
    5
}

/// Serialized form of an [`Instance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_period_minutes")]
    pub period_minutes: u32,
    pub buses: Vec<BusId>,
    pub lines: Vec<(BusId, BusId)>,
    pub bs: Vec<BsRecord>,
    #[serde(default)]
    pub nbs: Vec<NbsRecord>,
    #[serde(default)]
    pub critical_loads: Vec<CriticalLoadRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub critical_windows: Vec<WindowRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance: Option<Balance>,
}

impl InstanceFile {
    /// Builds the instance, reporting duplicates that the set-based
    /// [`Instance`] representation would otherwise silently merge.
    pub fn into_instance(self) -> (Instance, Vec<Violation>) {
        let mut dup = Vec::new();
        let mut inst = Instance::new(self.name);
        inst.period_minutes = self.period_minutes;
        for b in self.buses {
            if !inst.buses.insert(b) {
                dup.push(Violation::DuplicateBus(b));
            }
        }
        for (a, b) in self.lines {
            if a == b {
                dup.push(Violation::SelfLoop(a));
                continue;
            }
            let l = Line::new(a, b);
            if !inst.lines.insert(l) {
                dup.push(Violation::DuplicateLine(l));
            }
        }
        for r in self.bs {
            if inst.bs.insert(r.bus, r.curve).is_some() {
                dup.push(Violation::MultipleRoles(r.bus));
            }
        }
        for r in self.nbs {
            let p = NbsParams {
                crank_mw: r.crank_mw,
                crank_periods: r.crank_periods,
                ramp_periods: r.ramp_periods,
                max_mw: r.max_mw,
            };
            if inst.nbs.insert(r.bus, p).is_some() {
                dup.push(Violation::MultipleRoles(r.bus));
            }
        }
        for r in self.critical_loads {
            if inst.critical_loads.insert(r.bus, r.demand_mw).is_some() {
                dup.push(Violation::MultipleRoles(r.bus));
            }
        }
        for r in self.critical_windows {
            inst.critical_windows.insert(
                r.bus,
                CriticalWindow {
                    earliest: r.earliest,
                    latest: r.latest,
                },
            );
        }
        inst.balance = self.balance;
        (inst, dup)
    }

    pub fn from_instance(inst: &Instance) -> InstanceFile {
        InstanceFile {
            name: inst.name.clone(),
            period_minutes: inst.period_minutes,
            buses: inst.buses.iter().copied().collect(),
            lines: inst.lines.iter().map(|l| (l.u, l.v)).collect(),
            bs: inst
                .bs
                .iter()
                .map(|(&bus, curve)| BsRecord {
                    bus,
                    curve: curve.clone(),
                })
                .collect(),
            nbs: inst
                .nbs
                .iter()
                .map(|(&bus, p)| NbsRecord {
                    bus,
                    crank_mw: p.crank_mw,
                    crank_periods: p.crank_periods,
                    ramp_periods: p.ramp_periods,
                    max_mw: p.max_mw,
                })
                .collect(),
            critical_loads: inst
                .critical_loads
                .iter()
                .map(|(&bus, &demand_mw)| CriticalLoadRecord { bus, demand_mw })
                .collect(),
            critical_windows: inst
                .critical_windows
                .iter()
                .map(|(&bus, w)| WindowRecord {
                    bus,
                    earliest: w.earliest,
                    latest: w.latest,
                })
                .collect(),
            balance: inst.balance.clone(),
        }
    }
}

/// Parses instance text without validating it.
pub fn parse_instance(text: &str) -> Result<(Instance, Vec<Violation>), LoadError> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| LoadError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(file.into_instance())
}

/// Parses and validates instance text.
pub fn load_instance(text: &str) -> Result<Instance, LoadError> {
    let (inst, duplicates) = parse_instance(text)?;
    let report = validate_with(&inst, duplicates);
    if report.is_valid() {
        for w in &report.warnings {
            log::warn!("{w}");
        }
        Ok(inst)
    } else {
        Err(LoadError::Invalid(report))
    }
}

/// Parses instance text and returns its validation report, without failing
/// on violations.
pub fn validate_text(text: &str) -> Result<ValidationReport, LoadError> {
    let (inst, duplicates) = parse_instance(text)?;
    Ok(validate_with(&inst, duplicates))
}

pub fn validate_instance(inst: &Instance) -> ValidationReport {
    inst.validate()
}

fn validate_with(inst: &Instance, mut extra: Vec<Violation>) -> ValidationReport {
    let mut report = inst.validate();
    extra.append(&mut report.violations);
    report.violations = extra;
    report
}

pub fn instance_to_json(inst: &Instance) -> String {
    let mut s = serde_json::to_string_pretty(&InstanceFile::from_instance(inst))
        .expect("instance serialization cannot fail");
    s.push('\n');
    s
}

/// Per-bus net generation for the balance rows: the instance's own
/// figures when present, otherwise full output of each generator (BS output
/// at `horizon`) minus critical demand.
pub fn net_generation(inst: &Instance, horizon: Period) -> BTreeMap<BusId, Mw> {
    if let Some(b) = inst.balance.as_ref().filter(|b| !b.net_mw.is_empty()) {
        return b.net_mw.clone();
    }
    let mut net = BTreeMap::new();
    for (&b, curve) in &inst.bs {
        net.insert(b, curve.at(horizon.max(1)));
    }
    for (&b, p) in &inst.nbs {
        net.insert(b, p.max_mw);
    }
    for (&b, &d) in &inst.critical_loads {
        net.insert(b, -d);
    }
    net
}

/// Applies a balance limit, deriving per-bus figures when the instance has
/// none.
pub fn with_balance_limit(inst: &Instance, limit_mw: Mw, horizon: Period) -> Instance {
    let mut out = inst.clone();
    out.balance = Some(Balance {
        limit_mw,
        net_mw: net_generation(inst, horizon),
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "name": "worked-example",
        "buses": [1, 2, 3],
        "lines": [[1, 2], [1, 3], [2, 3]],
        "bs": [{"bus": 1, "curve": 10}],
        "nbs": [
            {"bus": 2, "crank_mw": 10, "crank_periods": 2, "ramp_periods": 3, "max_mw": 60},
            {"bus": 3, "crank_mw": 30, "crank_periods": 6, "ramp_periods": 9, "max_mw": 180}
        ]
    }"#;

    #[test]
    fn worked_example_loads() {
        let inst = load_instance(EXAMPLE).unwrap();
        assert_eq!(inst.bs.len(), 1);
        assert_eq!(inst.units().len(), 2);
        assert_eq!(inst.period_minutes, 5);
        assert!(validate_instance(&inst).is_valid());
    }

    #[test]
    fn duplicate_bus_is_reported() {
        let text = EXAMPLE.replace("[1, 2, 3]", "[1, 2, 3, 2]");
        match load_instance(&text) {
            Err(LoadError::Invalid(r)) => {
                assert!(r.violations.contains(&Violation::DuplicateBus(BusId(2))))
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn two_components_are_disconnected() {
        let text = EXAMPLE
            .replace("[1, 2, 3]", "[1, 2, 3, 4, 5]")
            .replace("[2, 3]]", "[2, 3], [4, 5]]");
        let err = load_instance(&text).unwrap_err();
        assert!(err.to_string().contains("disconnected graph"), "{err}");
    }

    #[test]
    fn parse_errors_carry_a_position() {
        let err = load_instance("{\n  \"buses\": [1,\n  oops]\n}").unwrap_err();
        match err {
            LoadError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverted_window_and_negative_crank_are_violations() {
        let text = EXAMPLE
            .replace("\"crank_mw\": 10,", "\"crank_mw\": -1,")
            .replace(
                "\"nbs\"",
                "\"critical_windows\": [{\"bus\": 3, \"earliest\": 5, \"latest\": 2}], \"nbs\"",
            );
        let report = validate_text(&text).unwrap();
        assert!(report.violations.contains(&Violation::InvertedWindow(BusId(3))));
        assert!(report.violations.contains(&Violation::BadGenerator(BusId(2))));
    }

    #[test]
    fn series_curves_and_balance_round_trip() {
        let text = EXAMPLE
            .replace("\"curve\": 10", "\"curve\": [5, 10, 10]")
            .replace(
                "\"nbs\"",
                "\"balance\": {\"limit_mw\": 50, \"net_mw\": {\"2\": 60, \"3\": -4.5}}, \"nbs\"",
            );
        let inst = load_instance(&text).unwrap();
        assert_eq!(inst.bs[&BusId(1)], BsCurve::Series(vec![5.0, 10.0, 10.0]));
        assert_eq!(inst.balance.as_ref().unwrap().net_mw[&BusId(3)], -4.5);
        let again = load_instance(&instance_to_json(&inst)).unwrap();
        assert_eq!(again, inst);
    }
}
