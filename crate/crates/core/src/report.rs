//! Output files: plans, schedules, bound logs and run reports.
//!
//! Wall-clock columns are only filled when timings are requested, so the
//! default output of every command is a pure function of its inputs.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BusId, Instance, Mw, Period};
use crate::gss::{capacity_trace, IslandView, Schedule};
use crate::ppsr::{PpsrOptions, PpsrSolution, SectionalizingPlan};

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ReportError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Track {
    Lower,
    Upper,
}

impl fmt::Display for Track {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Track::Lower => "lower",
            Track::Upper => "upper",
        })
    }
}

impl FromStr for Track {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lower" => Ok(Track::Lower),
            "upper" => Ok(Track::Upper),
            other => Err(format!("unknown track {other:?}")),
        }
    }
}

/// One bound improvement.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundEvent {
    pub elapsed_sec: Option<f64>,
    pub track: Track,
    pub event: String,
    pub value: Period,
}

/// Bound events in the order they happened.
#[derive(Clone, Debug)]
pub struct BoundLog {
    start: Instant,
    pub events: Vec<BoundEvent>,
}

impl Default for BoundLog {
    fn default() -> Self {
        BoundLog::new()
    }
}

impl BoundLog {
    pub fn new() -> BoundLog {
        BoundLog::starting_at(Instant::now())
    }

    pub fn starting_at(start: Instant) -> BoundLog {
        BoundLog {
            start,
            events: Vec::new(),
        }
    }

    pub fn push(&mut self, track: Track, event: &str, value: Period) {
        log::info!("{track} bound {value} ({event})");
        self.events.push(BoundEvent {
            elapsed_sec: Some(self.start.elapsed().as_secs_f64()),
            track,
            event: event.to_string(),
            value,
        });
    }

    pub fn extend(&mut self, other: BoundLog) {
        self.events.extend(other.events);
    }

    pub fn best(&self, track: Track) -> Option<Period> {
        let vals = self.events.iter().filter(|e| e.track == track).map(|e| e.value);
        match track {
            Track::Lower => vals.max(),
            Track::Upper => vals.min(),
        }
    }

    pub fn to_csv(&self, timings: bool) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["elapsed_sec", "track", "event", "value"])
            .expect("in-memory write");
        for e in &self.events {
            w.write_record([
                fmt_secs(e.elapsed_sec, timings),
                e.track.to_string(),
                e.event.clone(),
                e.value.to_string(),
            ])
            .expect("in-memory write");
        }
        into_string(w)
    }
}

fn fmt_secs(secs: Option<f64>, timings: bool) -> String {
    match secs {
        Some(s) if timings => format!("{s:.3}"),
        _ => String::new(),
    }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Parses a bound log written by [`BoundLog::to_csv`].
pub fn parse_bound_log(text: &str) -> Result<Vec<BoundEvent>, ReportError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| ReportError {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["elapsed_sec", "track", "event", "value"] {
        return Err(ReportError {
            line: 1,
            message: "expected header elapsed_sec,track,event,value".into(),
        });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| ReportError {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| ReportError { line, message };
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", rec.len())));
        }
        let elapsed_sec = match rec[0].trim() {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|e| bad(format!("elapsed_sec: {e}")))?),
        };
        let track = rec[1].parse::<Track>().map_err(bad)?;
        let value = rec[3]
            .trim()
            .parse::<Period>()
            .map_err(|e| bad(format!("value: {e}")))?;
        out.push(BoundEvent {
            elapsed_sec,
            track,
            event: rec[2].to_string(),
            value,
        });
    }
    Ok(out)
}

/// Tidy table of the two bound series: the running maximum of lower events
/// and the running minimum of upper events, one row per event.
pub fn tidy_report(events: &[BoundEvent]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "elapsed_sec", "lower_bound", "upper_bound", "gap"])
        .expect("in-memory write");
    let (mut lb, mut ub): (Option<Period>, Option<Period>) = (None, None);
    for (k, e) in events.iter().enumerate() {
        match e.track {
            Track::Lower => lb = Some(lb.map_or(e.value, |x| x.max(e.value))),
            Track::Upper => ub = Some(ub.map_or(e.value, |x| x.min(e.value))),
        }
        let gap = match (lb, ub) {
            (Some(l), Some(u)) => u.saturating_sub(l).to_string(),
            _ => String::new(),
        };
        w.write_record([
            (k + 1).to_string(),
            fmt_secs(e.elapsed_sec, true),
            lb.map(|x| x.to_string()).unwrap_or_default(),
            ub.map(|x| x.to_string()).unwrap_or_default(),
            gap,
        ])
        .expect("in-memory write");
    }
    into_string(w)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub bus: BusId,
    pub period: Period,
}

/// Serialized schedule of one island.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub island_bs: BusId,
    pub starts: Vec<StartRecord>,
    pub rt: Period,
    pub trace: Vec<Mw>,
}

impl ScheduleFile {
    pub fn new(island_bs: BusId, view: &IslandView, schedule: &Schedule) -> ScheduleFile {
        ScheduleFile {
            island_bs,
            starts: schedule
                .start
                .iter()
                .map(|(&bus, &period)| StartRecord { bus, period })
                .collect(),
            rt: schedule.rt,
            trace: capacity_trace(view, &schedule.start),
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            start: self.starts.iter().map(|s| (s.bus, s.period)).collect(),
            rt: self.rt,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IslandFile {
    pub bs: BusId,
    pub members: Vec<BusId>,
    #[serde(default)]
    pub unassigned_transshipment: Vec<BusId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleFile>,
    #[serde(default)]
    pub rt: Period,
}

/// Serialized plan with per-island schedules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub islands: Vec<IslandFile>,
    pub overall_rt: Period,
    pub bottleneck_bs: Vec<BusId>,
    /// Buses outside every island.
    #[serde(default)]
    pub unassigned: Vec<BusId>,
}

impl PlanFile {
    pub fn new(inst: &Instance, sol: &PpsrSolution, horizon: Period, opts: &PpsrOptions) -> PlanFile {
        let views = sol.views(inst, horizon, opts);
        let islands = views
            .iter()
            .map(|(j, view)| {
                let schedule = sol.schedules.get(j);
                IslandFile {
                    bs: *j,
                    members: sol.plan.islands[j].iter().copied().collect(),
                    unassigned_transshipment: sol
                        .plan
                        .detached
                        .get(j)
                        .map(|d| d.iter().copied().collect())
                        .unwrap_or_default(),
                    schedule: schedule.map(|s| ScheduleFile::new(*j, view, s)),
                    rt: schedule.map_or(0, |s| s.rt),
                }
            })
            .collect();
        PlanFile {
            islands,
            overall_rt: sol.rt,
            bottleneck_bs: sol.bottleneck.clone(),
            unassigned: sol
                .plan
                .unassigned(inst)
                .difference(&detached_all(&sol.plan))
                .copied()
                .collect(),
        }
    }

    pub fn plan(&self) -> SectionalizingPlan {
        let mut plan = SectionalizingPlan::default();
        for isl in &self.islands {
            plan.islands
                .entry(isl.bs)
                .or_default()
                .extend(isl.members.iter().copied());
            if !isl.unassigned_transshipment.is_empty() {
                plan.detached
                    .entry(isl.bs)
                    .or_default()
                    .extend(isl.unassigned_transshipment.iter().copied());
            }
        }
        plan
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<PlanFile, ReportError> {
        serde_json::from_str(text).map_err(|e| ReportError {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

fn detached_all(plan: &SectionalizingPlan) -> BTreeSet<BusId> {
    plan.detached.values().flatten().copied().collect()
}

/// One row of the randomized run report.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub run_index: usize,
    pub seed: u64,
    pub feasible: bool,
    pub time_to_feasible_sec: Option<f64>,
    pub initial_rt: Option<Period>,
    pub final_rt: Option<Period>,
    pub ls_improved: bool,
}

pub fn runs_to_csv(rows: &[RunRow], timings: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "run_index",
        "seed",
        "feasible",
        "time_to_feasible_sec",
        "initial_rt",
        "final_rt",
        "ls_improved",
    ])
    .expect("in-memory write");
    let opt = |x: Option<Period>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.run_index.to_string(),
            r.seed.to_string(),
            r.feasible.to_string(),
            fmt_secs(r.time_to_feasible_sec, timings),
            opt(r.initial_rt),
            opt(r.final_rt),
            r.ls_improved.to_string(),
        ])
        .expect("in-memory write");
    }
    into_string(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_log_gives_header_only() {
        let csv = BoundLog::new().to_csv(false);
        assert_eq!(csv, "elapsed_sec,track,event,value\n");
        let tidy = tidy_report(&parse_bound_log(&csv).unwrap());
        assert_eq!(tidy, "step,elapsed_sec,lower_bound,upper_bound,gap\n");
    }

    #[test]
    fn interleaved_events_give_monotone_series() {
        let text = "elapsed_sec,track,event,value\n,lower,aggregate,3\n,upper,ppsrt,9\n,lower,infeasible,4\n,upper,local_search,6\n,upper,reduced,7\n";
        let tidy = tidy_report(&parse_bound_log(text).unwrap());
        let rows: Vec<&str> = tidy.lines().skip(1).collect();
        assert_eq!(rows, ["1,,3,,", "2,,3,9,6", "3,,4,9,5", "4,,4,6,2", "5,,4,6,2"]);
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let text = "elapsed_sec,track,event,value\n,lower,aggregate,3\n,sideways,x,1\n";
        assert_eq!(parse_bound_log(text).unwrap_err().line, 3);
        let text = "elapsed_sec,track,event,value\n,lower,aggregate,3\n,upper,x,-1\n";
        assert_eq!(parse_bound_log(text).unwrap_err().line, 3);
    }

    #[test]
    fn timings_are_opt_in() {
        let mut log = BoundLog::new();
        log.push(Track::Lower, "aggregate", 4);
        assert_eq!(log.to_csv(false), "elapsed_sec,track,event,value\n,lower,aggregate,4\n");
        assert!(log.to_csv(true).lines().nth(1).unwrap().contains('.'));
    }
}
