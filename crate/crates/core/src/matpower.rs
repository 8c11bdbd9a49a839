//! Topology import from MATPOWER case files (`mpc.bus`, `mpc.gen`,
//! `mpc.branch` matrices). Only the graph and a few raw bus attributes are
//! kept; electrical parameters are ignored.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::TopologyError;
use crate::grid::{BusId, Line};

// Column positions in the standard case layout.
const BUS_I: usize = 0;
const BUS_PD: usize = 2;
const GEN_BUS: usize = 0;
const GEN_PMAX: usize = 8;
const GEN_RAMP_AGC: usize = 16;
const GEN_RAMP_30: usize = 18;
const F_BUS: usize = 0;
const T_BUS: usize = 1;

/// Raw attributes of a bus used to place generators and loads.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BusAttrs {
    /// Real power demand.
    pub pd: f64,
    /// Summed `Pmax` of generators at the bus.
    pub pmax: f64,
    /// Summed ramp rate of generators at the bus (0 when the case has none).
    pub ramp: f64,
    pub has_gen: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Topology {
    pub name: String,
    pub buses: BTreeSet<BusId>,
    pub lines: BTreeSet<Line>,
    pub attrs: BTreeMap<BusId, BusAttrs>,
    pub warnings: Vec<String>,
}

impl Topology {
    pub fn degree(&self, b: BusId) -> usize {
        self.lines.iter().filter(|l| l.touches(b)).count()
    }
}

type Table = Vec<Vec<f64>>;

/// Extracts the numeric matrix assigned to `mpc.<name>`, or `None` when the
/// case has no such table.
fn table(text: &str, name: &str) -> Result<Option<Table>, TopologyError> {
    let err = |row, message: String| TopologyError {
        table: name.to_string(),
        row,
        message,
    };
    let body: String = text
        .lines()
        .map(|l| l.split('%').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n");
    let key = format!("mpc.{name}");
    let mut search = 0;
    let start = loop {
        let Some(pos) = body[search..].find(&key) else {
            return Ok(None);
        };
        let after = search + pos + key.len();
        let rest = body[after..].trim_start();
        if let Some(rest) = rest.strip_prefix('=') {
            if let Some(open) = rest.trim_start().strip_prefix('[') {
                break body.len() - open.len();
            }
        }
        search = after;
    };
    let end = body[start..]
        .find(']')
        .map(|e| start + e)
        .ok_or_else(|| err(0, "unterminated matrix".into()))?;
    let mut rows = Vec::new();
    for raw in body[start..end].split([';', '\n']) {
        let cells: Vec<&str> = raw
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|c| !c.is_empty())
            .collect();
        if cells.is_empty() {
            continue;
        }
        let row = rows.len() + 1;
        let values = cells
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|_| err(row, format!("cannot parse {c:?} as a number")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(values);
    }
    Ok(Some(rows))
}

fn bus_id(table: &str, row: usize, v: f64) -> Result<BusId, TopologyError> {
    if v.fract() != 0.0 || v < 1.0 || v > f64::from(u32::MAX) {
        return Err(TopologyError {
            table: table.into(),
            row,
            message: format!("invalid bus number {v}"),
        });
    }
    Ok(BusId(v as u32))
}

fn need(table: &str, row: usize, cells: &[f64], n: usize) -> Result<(), TopologyError> {
    if cells.len() < n {
        return Err(TopologyError {
            table: table.into(),
            row,
            message: format!("expected at least {n} columns, found {}", cells.len()),
        });
    }
    Ok(())
}

fn case_name(text: &str) -> String {
    text.lines()
        .find_map(|l| {
            let l = l.trim().strip_prefix("function")?;
            let rhs = l.split('=').nth(1).unwrap_or(l);
            Some(rhs.trim().trim_end_matches(';').to_string())
        })
        .unwrap_or_else(|| "case".into())
}

/// Reads bus, generator and branch tables. Parallel branches collapse into
/// one line; self-loops are dropped with a warning.
pub fn import_topology(text: &str) -> Result<Topology, TopologyError> {
    let missing = |t: &str| TopologyError {
        table: t.into(),
        row: 0,
        message: "table not found".into(),
    };
    let bus_rows = table(text, "bus")?.ok_or_else(|| missing("bus"))?;
    let branch_rows = table(text, "branch")?.ok_or_else(|| missing("branch"))?;
    let gen_rows = table(text, "gen")?.unwrap_or_default();

    let mut topo = Topology {
        name: case_name(text),
        ..Topology::default()
    };
    for (k, cells) in bus_rows.iter().enumerate() {
        need("bus", k + 1, cells, BUS_PD + 1)?;
        let b = bus_id("bus", k + 1, cells[BUS_I])?;
        if !topo.buses.insert(b) {
            return Err(TopologyError {
                table: "bus".into(),
                row: k + 1,
                message: format!("duplicate bus {b}"),
            });
        }
        topo.attrs.insert(
            b,
            BusAttrs {
                pd: cells[BUS_PD],
                ..BusAttrs::default()
            },
        );
    }
    for (k, cells) in gen_rows.iter().enumerate() {
        need("gen", k + 1, cells, GEN_PMAX + 1)?;
        let b = bus_id("gen", k + 1, cells[GEN_BUS])?;
        let Some(a) = topo.attrs.get_mut(&b) else {
            return Err(TopologyError {
                table: "gen".into(),
                row: k + 1,
                message: format!("unknown bus {b}"),
            });
        };
        a.has_gen = true;
        a.pmax += cells[GEN_PMAX];
        let ramp = cells
            .get(GEN_RAMP_30)
            .or_else(|| cells.get(GEN_RAMP_AGC))
            .copied()
            .unwrap_or(0.0);
        a.ramp += ramp;
    }
    for (k, cells) in branch_rows.iter().enumerate() {
        need("branch", k + 1, cells, T_BUS + 1)?;
        let u = bus_id("branch", k + 1, cells[F_BUS])?;
        let v = bus_id("branch", k + 1, cells[T_BUS])?;
        for b in [u, v] {
            if !topo.buses.contains(&b) {
                return Err(TopologyError {
                    table: "branch".into(),
                    row: k + 1,
                    message: format!("unknown bus {b}"),
                });
            }
        }
        if u == v {
            let w = format!("branch row {}: self-loop at bus {u} dropped", k + 1);
            log::warn!("{w}");
            topo.warnings.push(w);
            continue;
        }
        topo.lines.insert(Line::new(u, v));
    }
    Ok(topo)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CASE: &str = "function mpc = case3
mpc.version = '2';
mpc.baseMVA = 100;
%% bus data
%	bus_i	type	Pd	Qd
mpc.bus = [
	1	3	0	0;
	2	1	20	5;
	3	2	35	0;
];
mpc.gen = [
	3	10	0	10	-10	1	100	1	60	0	0 0 0 0 0 0 2 3 4 0 0;
];
mpc.branch = [
	1	2	0.01	0.1	0	0	0	0	0	0	1;
	2	3	0.01	0.1	0	0	0	0	0	0	1;
	1	2	0.02	0.2	0	0	0	0	0	0	1;
];
";

    #[test]
    fn parallel_branches_collapse() {
        let t = import_topology(CASE).unwrap();
        assert_eq!(t.name, "case3");
        assert_eq!(t.buses.len(), 3);
        assert_eq!(t.lines.len(), 2);
        assert!(t.warnings.is_empty());
        let a = &t.attrs[&BusId(3)];
        assert!(a.has_gen);
        assert_eq!((a.pd, a.pmax, a.ramp), (35.0, 60.0, 4.0));
        assert_eq!(t.attrs[&BusId(2)].pd, 20.0);
    }

    #[test]
    fn self_loop_dropped_with_warning() {
        let text = CASE.replace("1\t2\t0.02", "2\t2\t0.02");
        let t = import_topology(&text).unwrap();
        assert_eq!(t.lines.len(), 2);
        assert_eq!(t.warnings.len(), 1);
        assert!(t.warnings[0].contains("self-loop at bus 2"));
    }

    #[test]
    fn isolated_bus_imports() {
        let text = CASE.replace("\t3\t2\t35\t0;\n", "\t3\t2\t35\t0;\n\t4\t1\t0\t0;\n");
        let t = import_topology(&text).unwrap();
        assert_eq!(t.buses.len(), 4);
        assert_eq!(t.degree(BusId(4)), 0);
    }

    #[test]
    fn malformed_row_reports_index() {
        let text = CASE.replace("2\t3\t0.01", "2\tx\t0.01");
        let e = import_topology(&text).unwrap_err();
        assert_eq!((e.table.as_str(), e.row), ("branch", 2));
        let text = CASE.replace("\t2\t1\t20\t5;", "\t2\t1;");
        let e = import_topology(&text).unwrap_err();
        assert_eq!((e.table.as_str(), e.row), ("bus", 2));
    }

    #[test]
    fn missing_table() {
        let e = import_topology("mpc.bus = [1 3 0 0];").unwrap_err();
        assert_eq!(e.table, "branch");
    }

    #[test]
    fn single_line_matrix() {
        let t = import_topology("mpc.bus = [1 3 0; 2 1 4];\nmpc.branch = [1 2];").unwrap();
        assert_eq!(t.lines.len(), 1);
    }
}
