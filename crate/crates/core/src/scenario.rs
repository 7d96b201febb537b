//! Line topology, fleet, signals, demand and experiment parameters.
//!
//! A [`Scenario`] is built either from a TOML document ([`load_scenario`]) or
//! from a registered fixture ([`builtin_fixture`]). Every constructor goes
//! through the same validation, so a `Scenario` value is always consistent.
//! All ids are 1-based and stop ids are ordinal positions along the loop.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the sum of a destination series.
pub const SERIES_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to parse scenario document: {0}")]
    Parse(String),
    #[error("invalid {entity} {id}: {reason}")]
    Invalid { entity: &'static str, id: String, reason: String },
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("failed to read scenario: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(entity: &'static str, id: impl fmt::Display, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { entity, id: id.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Red,
    Green,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stop {
    pub id: usize,
    /// Passengers per minute.
    pub arrival_rate: f64,
    pub destination_series_id: usize,
    pub controllable: bool,
    pub action_set_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub id: usize,
    pub red_s: f64,
    pub green_s: f64,
    pub cycle_s: f64,
    pub initial_phase: Phase,
    pub initial_phase_remaining_s: f64,
    pub host_bus_line_segment: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment {
    pub id: usize,
    pub length_m: f64,
    pub noise_sd_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Element {
    Road(usize),
    Intersection(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusLineSegment {
    pub id: usize,
    pub from_stop: usize,
    pub to_stop: usize,
    pub ordered_elements: Vec<Element>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusSpec {
    pub id: usize,
    pub capacity: usize,
    pub initial_target_stop: usize,
    pub rtba_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    pub id: usize,
    pub holding_times_s: Vec<f64>,
}

impl ActionSet {
    pub fn contains(&self, a: f64) -> bool {
        self.holding_times_s.contains(&a)
    }

    fn is_zero_only(&self) -> bool {
        self.holding_times_s == [0.0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DestinationSeries {
    pub id: usize,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[default]
    None,
    Tshs,
    Nsla,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::None => "none",
            StrategyKind::Tshs => "tshs",
            StrategyKind::Nsla => "nsla",
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(StrategyKind::None),
            "tshs" => Ok(StrategyKind::Tshs),
            "nsla" => Ok(StrategyKind::Nsla),
            other => Err(format!("unknown strategy `{other}` (expected none|tshs|nsla)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlParams {
    pub strategy: StrategyKind,
    /// Look-ahead depth N.
    pub stages: usize,
    /// Discount γ.
    pub gamma: f64,
    /// Stops where the terminal-holding baseline acts.
    pub terminal_stops: Vec<usize>,
    /// Set attached to controllable stops that do not name their own.
    pub default_action_set: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DwellMode {
    /// Passengers arriving while a bus is held board when it is released.
    #[default]
    BoardAtRelease,
    /// Doors stay closed during a hold.
    DoorsClosed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwellParams {
    pub per_boarder_s: f64,
    pub per_alighter_s: f64,
    pub mode: DwellMode,
}

impl Default for DwellParams {
    fn default() -> Self {
        DwellParams { per_boarder_s: 1.0, per_alighter_s: 0.5, mode: DwellMode::BoardAtRelease }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BunchingParams {
    pub threshold_frac: f64,
    pub window_ctps: usize,
}

impl Default for BunchingParams {
    fn default() -> Self {
        BunchingParams { threshold_frac: 0.15, window_ctps: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Stop(usize),
    Intersection(usize),
}

/// The loop flattened into critical points (stops and intersections) in
/// traversal order, starting at stop 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub points: Vec<PointKind>,
    /// Road segment ids travelled from `points[i]` to `points[i + 1]` (circular).
    pub legs: Vec<Vec<usize>>,
    /// Point index of each stop, indexed by `stop_id - 1`.
    pub stop_points: Vec<usize>,
    /// Distance from stop 1 to each point, metres.
    pub offsets_m: Vec<f64>,
    pub length_m: f64,
}

impl Route {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub stops: Vec<Stop>,
    pub intersections: Vec<Intersection>,
    pub road_segments: Vec<RoadSegment>,
    pub bus_line_segments: Vec<BusLineSegment>,
    pub buses: Vec<BusSpec>,
    pub destination_series: Vec<DestinationSeries>,
    pub action_sets: Vec<ActionSet>,
    pub cruise_speed_mps: f64,
    pub observation_period_s: f64,
    /// Followers may not pass their leader at a critical point.
    pub no_overtaking: bool,
    pub control: ControlParams,
    pub dwell: DwellParams,
    pub bunching: BunchingParams,
    route: Route,
}

// ---------------------------------------------------------------------------
// Document schema

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub line: LineDoc,
    pub stops: Vec<StopDoc>,
    pub road_segments: Vec<RoadSegmentDoc>,
    pub bus_line_segments: Vec<BusLineSegmentDoc>,
    #[serde(default)]
    pub intersections: Vec<IntersectionDoc>,
    pub buses: Vec<BusDoc>,
    pub series: Vec<SeriesDoc>,
    #[serde(default)]
    pub action_sets: Vec<ActionSetDoc>,
    #[serde(default)]
    pub control: ControlDoc,
    #[serde(default)]
    pub dwell: DwellDoc,
    #[serde(default)]
    pub bunching: BunchingDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LineDoc {
    pub cruise_speed_kmh: f64,
    pub observation_period_s: f64,
    #[serde(default = "default_true")]
    pub no_overtaking: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StopDoc {
    pub id: usize,
    pub rate_per_min: f64,
    pub series: usize,
    #[serde(default)]
    pub controllable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_set: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RoadSegmentDoc {
    pub id: usize,
    pub length_m: f64,
    /// Defaults to 0.005 s per metre.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BusLineSegmentDoc {
    pub id: usize,
    pub from_stop: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_stop: Option<usize>,
    pub elements: Vec<Element>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IntersectionDoc {
    pub id: usize,
    pub red_s: f64,
    pub green_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_s: Option<f64>,
    pub initial_phase: Phase,
    pub initial_phase_remaining_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BusDoc {
    pub id: usize,
    pub capacity: usize,
    pub initial_stop: usize,
    pub rtba_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SeriesDoc {
    pub id: usize,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ActionSetDoc {
    pub id: usize,
    pub holding_times_s: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ControlDoc {
    #[serde(default)]
    pub strategy: StrategyKind,
    #[serde(default = "default_stages")]
    pub stages: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Overrides the per-stop `controllable` flags when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_stops: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_set: Option<usize>,
    #[serde(default)]
    pub terminal_stops: Vec<usize>,
}

fn default_stages() -> usize {
    3
}

fn default_gamma() -> f64 {
    0.5
}

impl Default for ControlDoc {
    fn default() -> Self {
        ControlDoc {
            strategy: StrategyKind::None,
            stages: default_stages(),
            gamma: default_gamma(),
            control_stops: None,
            action_set: None,
            terminal_stops: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DwellDoc {
    #[serde(rename = "per-boarder_s", default = "default_per_boarder")]
    pub per_boarder_s: f64,
    #[serde(rename = "per-alighter_s", default = "default_per_alighter")]
    pub per_alighter_s: f64,
    #[serde(default)]
    pub mode: DwellMode,
}

fn default_per_boarder() -> f64 {
    DwellParams::default().per_boarder_s
}

fn default_per_alighter() -> f64 {
    DwellParams::default().per_alighter_s
}

impl Default for DwellDoc {
    fn default() -> Self {
        let d = DwellParams::default();
        DwellDoc { per_boarder_s: d.per_boarder_s, per_alighter_s: d.per_alighter_s, mode: d.mode }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BunchingDoc {
    #[serde(default = "default_threshold")]
    pub threshold_frac: f64,
    #[serde(default = "default_window")]
    pub window_ctps: usize,
}

fn default_threshold() -> f64 {
    BunchingParams::default().threshold_frac
}

fn default_window() -> usize {
    BunchingParams::default().window_ctps
}

impl Default for BunchingDoc {
    fn default() -> Self {
        BunchingDoc { threshold_frac: default_threshold(), window_ctps: default_window() }
    }
}

// ---------------------------------------------------------------------------
// Loading

/// Parses and validates a TOML scenario document.
pub fn load_scenario(source: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = toml::from_str(source).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    Scenario::from_doc(doc)
}

/// Loads `builtin:<name>` fixtures or a TOML file from disk.
pub fn load_scenario_ref(reference: &str) -> Result<Scenario, ScenarioError> {
    match reference.strip_prefix("builtin:") {
        Some(name) => builtin_fixture(name),
        None => load_scenario_path(reference),
    }
}

pub fn load_scenario_path(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    load_scenario(&text)
}

fn check_ids<'a>(entity: &'static str, ids: impl Iterator<Item = &'a usize>) -> Result<(), ScenarioError> {
    for (expected, &id) in (1..).zip(ids) {
        if id != expected {
            return Err(invalid(entity, id, format!("ids must be 1..n in order; expected {expected}")));
        }
    }
    Ok(())
}

fn finite_nonneg(entity: &'static str, id: usize, what: &str, v: f64) -> Result<(), ScenarioError> {
    if !v.is_finite() || v < 0.0 {
        return Err(invalid(entity, id, format!("{what} must be finite and >= 0, got {v}")));
    }
    Ok(())
}

fn validate_action_set(set: &ActionSetDoc) -> Result<(), ScenarioError> {
    let h = &set.holding_times_s;
    if h.first() != Some(&0.0) {
        return Err(invalid("action set", set.id, "must begin with 0"));
    }
    for w in h.windows(2) {
        if !(w[1].is_finite() && w[1] > w[0]) {
            return Err(invalid("action set", set.id, "holding times must be strictly increasing"));
        }
    }
    Ok(())
}

impl Scenario {
    pub fn from_doc(mut doc: ScenarioDoc) -> Result<Self, ScenarioError> {
        // line
        let line = &doc.line;
        if !(line.cruise_speed_kmh.is_finite() && line.cruise_speed_kmh > 0.0) {
            return Err(invalid("line", "cruise_speed_kmh", "must be > 0"));
        }
        if !(line.observation_period_s.is_finite() && line.observation_period_s >= 0.0) {
            return Err(invalid("line", "observation_period_s", "must be >= 0"));
        }
        let cruise_speed_mps = line.cruise_speed_kmh / 3.6;

        check_ids("stop", doc.stops.iter().map(|s| &s.id))?;
        check_ids("road segment", doc.road_segments.iter().map(|r| &r.id))?;
        check_ids("intersection", doc.intersections.iter().map(|i| &i.id))?;
        check_ids("bus", doc.buses.iter().map(|b| &b.id))?;
        if doc.stops.len() < 2 {
            return Err(invalid("line", "stops", "at least two stops are required"));
        }
        if doc.buses.is_empty() {
            return Err(invalid("line", "buses", "at least one bus is required"));
        }
        let n_stops = doc.stops.len();

        // series
        let mut destination_series = Vec::with_capacity(doc.series.len());
        for s in &doc.series {
            if s.probabilities.is_empty() {
                return Err(invalid("series", s.id, "no probabilities"));
            }
            if s.probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(invalid("series", s.id, "probabilities must be >= 0"));
            }
            let sum: f64 = s.probabilities.iter().sum();
            if (sum - 1.0).abs() > SERIES_SUM_TOL {
                return Err(invalid("series", s.id, format!("probabilities sum to {sum}, not 1")));
            }
            if s.probabilities.len() >= n_stops {
                return Err(invalid("series", s.id, "destination offsets must be shorter than the loop"));
            }
            destination_series.push(DestinationSeries { id: s.id, probabilities: s.probabilities.clone() });
        }

        // action sets; make sure a {0} set exists for non-control stops
        let mut ids = BTreeSet::new();
        for set in &doc.action_sets {
            if !ids.insert(set.id) {
                return Err(invalid("action set", set.id, "duplicate id"));
            }
            validate_action_set(set)?;
        }
        let zero_set = match doc.action_sets.iter().find(|s| s.holding_times_s == [0.0]) {
            Some(s) => s.id,
            None => {
                let id = doc.action_sets.iter().map(|s| s.id).max().unwrap_or(0) + 1;
                doc.action_sets.push(ActionSetDoc { id, holding_times_s: vec![0.0] });
                id
            }
        };
        let action_sets: Vec<ActionSet> = doc
            .action_sets
            .iter()
            .map(|s| ActionSet { id: s.id, holding_times_s: s.holding_times_s.clone() })
            .collect();
        let set_exists = |id: usize| action_sets.iter().any(|s| s.id == id);
        let default_action_set = match doc.control.action_set {
            Some(id) if !set_exists(id) => {
                return Err(invalid("control", "action_set", format!("unknown action set {id}")))
            }
            Some(id) => id,
            None => zero_set,
        };

        // stops
        let control_stops: Option<BTreeSet<usize>> =
            doc.control.control_stops.as_ref().map(|v| v.iter().copied().collect());
        if let Some(cs) = &control_stops {
            if let Some(&bad) = cs.iter().find(|&&s| s == 0 || s > n_stops) {
                return Err(invalid("control", "control_stops", format!("unknown stop {bad}")));
            }
        }
        let mut stops = Vec::with_capacity(n_stops);
        for s in &doc.stops {
            finite_nonneg("stop", s.id, "rate_per_min", s.rate_per_min)?;
            if !destination_series.iter().any(|d| d.id == s.series) {
                return Err(invalid("stop", s.id, format!("unknown series {}", s.series)));
            }
            let controllable = match &control_stops {
                Some(cs) => cs.contains(&s.id),
                None => s.controllable,
            };
            let action_set_id = match (controllable, s.action_set) {
                (_, Some(id)) if !set_exists(id) => {
                    return Err(invalid("stop", s.id, format!("unknown action set {id}")))
                }
                (false, Some(id)) => {
                    if !action_sets.iter().find(|a| a.id == id).unwrap().is_zero_only() {
                        return Err(invalid("stop", s.id, "non-control stops must reference the action set {0}"));
                    }
                    id
                }
                (true, Some(id)) => id,
                (true, None) => default_action_set,
                (false, None) => zero_set,
            };
            stops.push(Stop {
                id: s.id,
                arrival_rate: s.rate_per_min,
                destination_series_id: s.series,
                controllable,
                action_set_id,
            });
        }

        // road segments
        let mut road_segments = Vec::with_capacity(doc.road_segments.len());
        for r in &doc.road_segments {
            if !(r.length_m.is_finite() && r.length_m > 0.0) {
                return Err(invalid("road segment", r.id, "length_m must be > 0"));
            }
            let noise_sd_s = r.noise_sd_s.unwrap_or(0.005 * r.length_m);
            finite_nonneg("road segment", r.id, "noise_sd_s", noise_sd_s)?;
            road_segments.push(RoadSegment { id: r.id, length_m: r.length_m, noise_sd_s });
        }

        // bus line segments: exactly one per stop, each going to the next stop
        let mut bls_docs = doc.bus_line_segments.clone();
        bls_docs.sort_by_key(|g| g.from_stop);
        if bls_docs.len() != n_stops {
            return Err(invalid(
                "line",
                "bus_line_segments",
                format!("expected {n_stops} bus line segments, found {}", bls_docs.len()),
            ));
        }
        let mut seg_ids = BTreeSet::new();
        let mut road_used = vec![0usize; road_segments.len()];
        let mut host = vec![Vec::new(); doc.intersections.len()];
        let mut bus_line_segments = Vec::with_capacity(n_stops);
        for (i, g) in bls_docs.iter().enumerate() {
            if !seg_ids.insert(g.id) {
                return Err(invalid("bus line segment", g.id, "duplicate id"));
            }
            let from = i + 1;
            if g.from_stop != from {
                return Err(invalid(
                    "bus line segment",
                    g.id,
                    format!("segments must partition the loop; no segment leaves stop {from}"),
                ));
            }
            let to = from % n_stops + 1;
            if let Some(t) = g.to_stop {
                if t != to {
                    return Err(invalid(
                        "bus line segment",
                        g.id,
                        format!("to_stop must be {to} (the stop after {from}), got {t}"),
                    ));
                }
            }
            if !g.elements.iter().any(|e| matches!(e, Element::Road(_))) {
                return Err(invalid("bus line segment", g.id, "contains no road segment"));
            }
            for e in &g.elements {
                match *e {
                    Element::Road(r) => {
                        if r == 0 || r > road_segments.len() {
                            return Err(invalid("bus line segment", g.id, format!("unknown road {r}")));
                        }
                        road_used[r - 1] += 1;
                    }
                    Element::Intersection(x) => {
                        if x == 0 || x > host.len() {
                            return Err(invalid("bus line segment", g.id, format!("unknown intersection {x}")));
                        }
                        host[x - 1].push(g.id);
                    }
                }
            }
            bus_line_segments.push(BusLineSegment {
                id: g.id,
                from_stop: from,
                to_stop: to,
                ordered_elements: g.elements.clone(),
            });
        }
        if let Some(r) = road_used.iter().position(|&c| c != 1) {
            return Err(invalid(
                "road segment",
                r + 1,
                format!("must appear in exactly one bus line segment (found {})", road_used[r]),
            ));
        }

        // intersections
        let mut intersections = Vec::with_capacity(doc.intersections.len());
        for (x, hosts) in doc.intersections.iter().zip(&host) {
            finite_nonneg("intersection", x.id, "red_s", x.red_s)?;
            finite_nonneg("intersection", x.id, "green_s", x.green_s)?;
            let cycle = x.red_s + x.green_s;
            if let Some(c) = x.cycle_s {
                if (c - cycle).abs() > 1e-9 {
                    return Err(invalid("intersection", x.id, format!("cycle_s {c} != red_s + green_s = {cycle}")));
                }
            }
            if !(cycle.is_finite() && cycle > 0.0) {
                return Err(invalid("intersection", x.id, "cycle must be > 0"));
            }
            let phase_len = match x.initial_phase {
                Phase::Red => x.red_s,
                Phase::Green => x.green_s,
            };
            if !(x.initial_phase_remaining_s > 0.0 && x.initial_phase_remaining_s <= phase_len) {
                return Err(invalid(
                    "intersection",
                    x.id,
                    format!(
                        "initial_phase_remaining_s must lie in (0, {phase_len}], got {}",
                        x.initial_phase_remaining_s
                    ),
                ));
            }
            if hosts.len() != 1 {
                return Err(invalid(
                    "intersection",
                    x.id,
                    format!("must appear in exactly one bus line segment (found {})", hosts.len()),
                ));
            }
            intersections.push(Intersection {
                id: x.id,
                red_s: x.red_s,
                green_s: x.green_s,
                cycle_s: cycle,
                initial_phase: x.initial_phase,
                initial_phase_remaining_s: x.initial_phase_remaining_s,
                host_bus_line_segment: hosts[0],
            });
        }

        // buses
        let mut buses = Vec::with_capacity(doc.buses.len());
        let mut occupied = BTreeSet::new();
        for b in &doc.buses {
            if b.capacity == 0 {
                return Err(invalid("bus", b.id, "capacity must be > 0"));
            }
            if b.initial_stop == 0 || b.initial_stop > n_stops {
                return Err(invalid("bus", b.id, format!("unknown initial stop {}", b.initial_stop)));
            }
            if !occupied.insert(b.initial_stop) {
                return Err(invalid("bus", b.id, "two buses share an initial stop"));
            }
            finite_nonneg("bus", b.id, "rtba_s", b.rtba_s)?;
            buses.push(BusSpec {
                id: b.id,
                capacity: b.capacity,
                initial_target_stop: b.initial_stop,
                rtba_s: b.rtba_s,
            });
        }

        // control
        let c = &doc.control;
        if !(c.gamma > 0.0 && c.gamma <= 1.0) {
            return Err(invalid("control", "gamma", format!("must lie in (0, 1], got {}", c.gamma)));
        }
        if c.stages == 0 {
            return Err(invalid("control", "stages", "must be >= 1"));
        }
        if let Some(&bad) = c.terminal_stops.iter().find(|&&s| s == 0 || s > n_stops) {
            return Err(invalid("control", "terminal_stops", format!("unknown stop {bad}")));
        }
        let control = ControlParams {
            strategy: c.strategy,
            stages: c.stages,
            gamma: c.gamma,
            terminal_stops: c.terminal_stops.clone(),
            default_action_set,
        };

        let d = &doc.dwell;
        finite_nonneg("dwell", 0, "per-boarder_s", d.per_boarder_s)?;
        finite_nonneg("dwell", 0, "per-alighter_s", d.per_alighter_s)?;
        let dwell = DwellParams { per_boarder_s: d.per_boarder_s, per_alighter_s: d.per_alighter_s, mode: d.mode };
        let bunching =
            BunchingParams { threshold_frac: doc.bunching.threshold_frac, window_ctps: doc.bunching.window_ctps };
        if !(bunching.threshold_frac.is_finite() && bunching.threshold_frac > 0.0) || bunching.window_ctps == 0 {
            return Err(invalid("bunching", 0, "threshold_frac and window_ctps must be positive"));
        }

        let mut scenario = Scenario {
            stops,
            intersections,
            road_segments,
            bus_line_segments,
            buses,
            destination_series,
            action_sets,
            cruise_speed_mps,
            observation_period_s: line.observation_period_s,
            no_overtaking: line.no_overtaking,
            control,
            dwell,
            bunching,
            route: Route {
                points: Vec::new(),
                legs: Vec::new(),
                stop_points: Vec::new(),
                offsets_m: Vec::new(),
                length_m: 0.0,
            },
        };
        scenario.route = scenario.build_route();
        Ok(scenario)
    }

    fn build_route(&self) -> Route {
        let mut points = Vec::new();
        let mut legs: Vec<Vec<usize>> = Vec::new();
        let mut stop_points = Vec::with_capacity(self.stops.len());
        let mut offsets_m = Vec::new();
        let mut dist = 0.0;
        for g in &self.bus_line_segments {
            stop_points.push(points.len());
            points.push(PointKind::Stop(g.from_stop));
            offsets_m.push(dist);
            legs.push(Vec::new());
            for e in &g.ordered_elements {
                match *e {
                    Element::Road(r) => {
                        legs.last_mut().unwrap().push(r);
                        dist += self.road_segments[r - 1].length_m;
                    }
                    Element::Intersection(x) => {
                        points.push(PointKind::Intersection(x));
                        offsets_m.push(dist);
                        legs.push(Vec::new());
                    }
                }
            }
        }
        Route { points, legs, stop_points, offsets_m, length_m: dist }
    }

    pub fn route(&self) -> &Route {
        &self.route
    }

    /// Loop length X in metres.
    pub fn loop_length_m(&self) -> f64 {
        self.route.length_m
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_stops(&self) -> usize {
        self.stops.len()
    }

    pub fn stop(&self, id: usize) -> &Stop {
        &self.stops[id - 1]
    }

    pub fn action_set(&self, id: usize) -> Option<&ActionSet> {
        self.action_sets.iter().find(|s| s.id == id)
    }

    /// Holding times allowed at a stop; `[0]` at non-control stops.
    pub fn stop_actions(&self, stop_id: usize) -> &[f64] {
        let s = self.stop(stop_id);
        &self.action_set(s.action_set_id).expect("validated action set reference").holding_times_s
    }

    pub fn series(&self, id: usize) -> &DestinationSeries {
        self.destination_series.iter().find(|d| d.id == id).expect("validated series reference")
    }

    /// Total passenger arrival rate over all stops, per minute.
    pub fn total_arrival_rate(&self) -> f64 {
        self.stops.iter().map(|s| s.arrival_rate).sum()
    }

    pub fn control_stops(&self) -> Vec<usize> {
        self.stops.iter().filter(|s| s.controllable).map(|s| s.id).collect()
    }

    /// Next stop along the loop.
    pub fn next_stop(&self, stop_id: usize) -> usize {
        stop_id % self.stops.len() + 1
    }

    /// Makes exactly `stops` controllable. Newly controllable stops take the
    /// default action set.
    pub fn with_control_stops(&self, stops: &[usize]) -> Result<Scenario, ScenarioError> {
        let mut doc = self.to_doc();
        doc.control.control_stops = Some(stops.to_vec());
        for s in &mut doc.stops {
            if !s.controllable || !stops.contains(&s.id) {
                s.action_set = None;
            }
        }
        Scenario::from_doc(doc)
    }

    /// Installs `holding_times_s` as the action set of every controllable stop.
    pub fn with_action_set(&self, holding_times_s: &[f64]) -> Result<Scenario, ScenarioError> {
        let mut doc = self.to_doc();
        let set = match doc.action_sets.iter().find(|s| s.holding_times_s == holding_times_s) {
            Some(s) => s.id,
            None => {
                let id = doc.action_sets.iter().map(|s| s.id).max().unwrap_or(0) + 1;
                doc.action_sets.push(ActionSetDoc { id, holding_times_s: holding_times_s.to_vec() });
                id
            }
        };
        doc.control.action_set = Some(set);
        for s in &mut doc.stops {
            if s.controllable {
                s.action_set = Some(set);
            }
        }
        Scenario::from_doc(doc)
    }

    pub fn with_observation_period(&self, seconds: f64) -> Scenario {
        let mut s = self.clone();
        s.observation_period_s = seconds;
        s
    }

    /// The fully resolved document form of this scenario.
    pub fn to_doc(&self) -> ScenarioDoc {
        ScenarioDoc {
            line: LineDoc {
                cruise_speed_kmh: self.cruise_speed_mps * 3.6,
                observation_period_s: self.observation_period_s,
                no_overtaking: self.no_overtaking,
            },
            stops: self
                .stops
                .iter()
                .map(|s| StopDoc {
                    id: s.id,
                    rate_per_min: s.arrival_rate,
                    series: s.destination_series_id,
                    controllable: s.controllable,
                    action_set: Some(s.action_set_id),
                })
                .collect(),
            road_segments: self
                .road_segments
                .iter()
                .map(|r| RoadSegmentDoc { id: r.id, length_m: r.length_m, noise_sd_s: Some(r.noise_sd_s) })
                .collect(),
            bus_line_segments: self
                .bus_line_segments
                .iter()
                .map(|g| BusLineSegmentDoc {
                    id: g.id,
                    from_stop: g.from_stop,
                    to_stop: Some(g.to_stop),
                    elements: g.ordered_elements.clone(),
                })
                .collect(),
            intersections: self
                .intersections
                .iter()
                .map(|x| IntersectionDoc {
                    id: x.id,
                    red_s: x.red_s,
                    green_s: x.green_s,
                    cycle_s: Some(x.cycle_s),
                    initial_phase: x.initial_phase,
                    initial_phase_remaining_s: x.initial_phase_remaining_s,
                })
                .collect(),
            buses: self
                .buses
                .iter()
                .map(|b| BusDoc {
                    id: b.id,
                    capacity: b.capacity,
                    initial_stop: b.initial_target_stop,
                    rtba_s: b.rtba_s,
                })
                .collect(),
            series: self
                .destination_series
                .iter()
                .map(|s| SeriesDoc { id: s.id, probabilities: s.probabilities.clone() })
                .collect(),
            action_sets: self
                .action_sets
                .iter()
                .map(|s| ActionSetDoc { id: s.id, holding_times_s: s.holding_times_s.clone() })
                .collect(),
            control: ControlDoc {
                strategy: self.control.strategy,
                stages: self.control.stages,
                gamma: self.control.gamma,
                control_stops: None,
                action_set: Some(self.control.default_action_set),
                terminal_stops: self.control.terminal_stops.clone(),
            },
            dwell: DwellDoc {
                per_boarder_s: self.dwell.per_boarder_s,
                per_alighter_s: self.dwell.per_alighter_s,
                mode: self.dwell.mode,
            },
            bunching: BunchingDoc {
                threshold_frac: self.bunching.threshold_frac,
                window_ctps: self.bunching.window_ctps,
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_doc()).expect("scenario documents always serialize")
    }
}

// ---------------------------------------------------------------------------
// Fixtures

pub const FIXTURES: &[&str] = &["he2019"];

pub fn builtin_fixture(name: &str) -> Result<Scenario, ScenarioError> {
    match name {
        "he2019" => Scenario::from_doc(he2019_doc()),
        other => Err(ScenarioError::UnknownFixture(other.to_string())),
    }
}

/// Action sets swept by the action-set experiment, in table order.
pub const HE2019_ACTION_SETS: [&[f64]; 6] = [
    &[0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
    &[0.0, 3.0, 6.0, 9.0, 12.0, 15.0],
    &[0.0, 2.0, 4.0, 6.0],
    &[0.0, 5.0, 10.0, 15.0],
    &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0],
    &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0],
];

/// Control-point sets swept by the control-point experiment, in table order.
pub const HE2019_CONTROL_SETS: [(&str, &[usize]); 5] = [
    ("11BS", &[2, 3, 5, 11, 15, 16, 17, 20, 21, 25, 29]),
    ("9BS", &[2, 5, 11, 15, 16, 20, 21, 25, 29]),
    ("7BS", &[2, 11, 15, 16, 20, 25, 29]),
    ("5BS", &[11, 15, 16, 20, 25]),
    ("3BS", &[11, 16, 25]),
];

pub const HE2019_TERMINAL_STOPS: [usize; 2] = [5, 20];

fn he2019_doc() -> ScenarioDoc {
    // capacity, initial stop, RTBA
    const BUSES: [(usize, usize, f64); 9] = [
        (72, 1, 20.0),
        (70, 4, 0.0),
        (80, 8, 40.0),
        (60, 11, 30.0),
        (72, 15, 50.0),
        (60, 18, 10.0),
        (72, 21, 30.0),
        (80, 25, 35.0),
        (60, 28, 25.0),
    ];
    // road segment ids per bus line segment, and their lengths
    const SEGMENTS: [&[(usize, f64)]; 30] = [
        &[(1, 200.0), (2, 400.0)],
        &[(3, 500.0)],
        &[(4, 600.0)],
        &[(5, 260.0), (6, 350.0)],
        &[(7, 530.0)],
        &[(8, 560.0)],
        &[(9, 600.0)],
        &[(10, 300.0), (11, 500.0)],
        &[(12, 600.0)],
        &[(13, 300.0), (14, 350.0)],
        &[(15, 600.0)],
        &[(16, 300.0), (17, 400.0)],
        &[(18, 300.0), (19, 320.0)],
        &[(20, 500.0)],
        &[(21, 450.0)],
        &[(22, 200.0), (23, 250.0), (24, 100.0)],
        &[(25, 570.0)],
        &[(26, 610.0)],
        &[(27, 600.0)],
        &[(28, 300.0), (29, 350.0)],
        &[(30, 200.0), (31, 400.0)],
        &[(32, 500.0)],
        &[(33, 600.0)],
        &[(34, 260.0), (35, 350.0)],
        &[(36, 530.0)],
        &[(37, 560.0)],
        &[(38, 600.0)],
        &[(39, 300.0), (40, 500.0)],
        &[(41, 600.0)],
        &[(42, 300.0), (43, 350.0)],
    ];
    // red, green, remaining of initial phase, initial phase, host segment
    const SIGNALS: [(f64, f64, f64, Phase, usize); 13] = [
        (40.0, 50.0, 20.0, Phase::Green, 1),
        (40.0, 30.0, 20.0, Phase::Red, 4),
        (40.0, 35.0, 20.0, Phase::Red, 8),
        (30.0, 45.0, 20.0, Phase::Green, 10),
        (30.0, 30.0, 20.0, Phase::Green, 12),
        (40.0, 30.0, 20.0, Phase::Red, 13),
        (40.0, 45.0, 30.0, Phase::Green, 16),
        (30.0, 35.0, 20.0, Phase::Green, 16),
        (30.0, 45.0, 20.0, Phase::Green, 20),
        (40.0, 50.0, 10.0, Phase::Green, 21),
        (40.0, 30.0, 20.0, Phase::Red, 24),
        (40.0, 35.0, 10.0, Phase::Red, 28),
        (30.0, 45.0, 20.0, Phase::Green, 30),
    ];
    const RATES: [(f64, &[usize]); 4] = [
        (1.0, &[2, 4, 6, 8, 13, 16, 17, 19, 24, 26, 28]),
        (2.0, &[1, 3, 5, 7, 10, 12, 14, 15, 18, 21, 22, 23, 25]),
        (3.0, &[9, 11, 27, 29]),
        (4.0, &[20, 30]),
    ];
    const SERIES_1_STOPS: [usize; 8] = [1, 7, 10, 13, 20, 21, 27, 30];
    const SERIES_1: [f64; 13] =
        [0.0135, 0.027, 0.0541, 0.0811, 0.1081, 0.1351, 0.1351, 0.1216, 0.1216, 0.0811, 0.0541, 0.0405, 0.0270];
    const SERIES_2: [f64; 10] = [0.0345, 0.0862, 0.1207, 0.1552, 0.1724, 0.1552, 0.1207, 0.0862, 0.0517, 0.0172];

    // The printed first series sums to 0.9999; rescale it onto the simplex.
    let normalize = |p: &[f64]| {
        let s: f64 = p.iter().sum();
        p.iter().map(|x| x / s).collect::<Vec<_>>()
    };

    let control_stops = HE2019_CONTROL_SETS[0].1;
    let stops = (1..=30)
        .map(|id| StopDoc {
            id,
            rate_per_min: RATES.iter().find(|(_, ids)| ids.contains(&id)).map(|(r, _)| *r).unwrap(),
            series: if SERIES_1_STOPS.contains(&id) { 1 } else { 2 },
            controllable: control_stops.contains(&id),
            action_set: None,
        })
        .collect();

    let mut road_segments = Vec::new();
    let mut bus_line_segments = Vec::new();
    for (g, roads) in SEGMENTS.iter().enumerate() {
        let g_id = g + 1;
        for &(id, length_m) in roads.iter() {
            road_segments.push(RoadSegmentDoc { id, length_m, noise_sd_s: None });
        }
        // intersections sit between consecutive road segments of the segment
        let mut signals = (0..SIGNALS.len()).filter(|&i| SIGNALS[i].4 == g_id).map(|i| i + 1);
        let mut elements = Vec::new();
        for (k, &(id, _)) in roads.iter().enumerate() {
            if k > 0 {
                if let Some(x) = signals.next() {
                    elements.push(Element::Intersection(x));
                }
            }
            elements.push(Element::Road(id));
        }
        debug_assert!(signals.next().is_none());
        bus_line_segments.push(BusLineSegmentDoc { id: g_id, from_stop: g_id, to_stop: Some(g_id % 30 + 1), elements });
    }

    ScenarioDoc {
        line: LineDoc { cruise_speed_kmh: 36.0, observation_period_s: 14400.0, no_overtaking: true },
        stops,
        road_segments,
        bus_line_segments,
        intersections: SIGNALS
            .iter()
            .enumerate()
            .map(|(i, &(red, green, rem, phase, _))| IntersectionDoc {
                id: i + 1,
                red_s: red,
                green_s: green,
                cycle_s: Some(red + green),
                initial_phase: phase,
                initial_phase_remaining_s: rem,
            })
            .collect(),
        buses: BUSES
            .iter()
            .enumerate()
            .map(|(i, &(capacity, initial_stop, rtba_s))| BusDoc { id: i + 1, capacity, initial_stop, rtba_s })
            .collect(),
        series: vec![
            SeriesDoc { id: 1, probabilities: normalize(&SERIES_1) },
            SeriesDoc { id: 2, probabilities: normalize(&SERIES_2) },
        ],
        action_sets: vec![
            ActionSetDoc { id: 1, holding_times_s: HE2019_ACTION_SETS[0].to_vec() },
            ActionSetDoc { id: 2, holding_times_s: vec![0.0] },
        ],
        control: ControlDoc {
            strategy: StrategyKind::Nsla,
            stages: 3,
            gamma: 0.5,
            control_stops: None,
            action_set: Some(1),
            terminal_stops: HE2019_TERMINAL_STOPS.to_vec(),
        },
        dwell: DwellDoc::default(),
        bunching: BunchingDoc::default(),
    }
}
