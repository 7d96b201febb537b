use std::fmt::Write as _;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ArriveStop,
    DepartStop,
    ArriveIntersection,
    DepartIntersection,
    HoldStart,
    HoldEnd,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ArriveStop => "arrive_stop",
            EventKind::DepartStop => "depart_stop",
            EventKind::ArriveIntersection => "arrive_intersection",
            EventKind::DepartIntersection => "depart_intersection",
            EventKind::HoldStart => "hold_start",
            EventKind::HoldEnd => "hold_end",
        }
    }

    pub fn is_motion(self) -> bool {
        !matches!(self, EventKind::HoldStart | EventKind::HoldEnd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Stop(usize),
    Intersection(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub time_s: f64,
    pub bus_id: usize,
    pub kind: EventKind,
    pub location: Location,
    /// Distance travelled along the unwrapped loop, metres.
    pub distance_m: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EventLog {
    pub records: Vec<LogRecord>,
}

impl EventLog {
    pub fn push(&mut self, record: LogRecord) {
        debug_assert!(self.records.last().is_none_or(|r| r.time_s <= record.time_s));
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Full log as tab-separated text.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("time_s\tbus_id\tevent\tlocation\tcumulative_distance_m\n");
        for r in &self.records {
            let loc = match r.location {
                Location::Stop(e) => format!("stop:{e}"),
                Location::Intersection(x) => format!("intersection:{x}"),
            };
            let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", r.time_s, r.bus_id, r.kind.as_str(), loc, r.distance_m);
        }
        out
    }

    /// Time-space trajectory: one line per arrival or departure.
    pub fn trajectory_tsv(&self) -> String {
        let mut out = String::from("time_s\tbus_id\tcumulative_distance_m\n");
        for r in self.records.iter().filter(|r| r.kind.is_motion()) {
            let _ = writeln!(out, "{}\t{}\t{}", r.time_s, r.bus_id, r.distance_m);
        }
        out
    }
}
