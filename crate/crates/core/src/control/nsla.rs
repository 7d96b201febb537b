//! Multi-stage look-ahead holding.
//!
//! From a CTP snapshot the line is rolled forward on expected values: at each
//! level the bus with the smallest time-to-activation departs its target
//! stop after a candidate hold, reaches the next stop after the expected
//! segment time, and dwells for the boarders predicted from the gap since
//! the previous arrival there. Each level is charged the squared deviation
//! of the resulting headways from the pre-decision target headway, and
//! deeper levels are discounted by γ per level. The first-level hold with
//! the smallest discounted total is chosen.

use thiserror::Error;

use super::DecisionRecord;
use crate::engine::SystemState;
use crate::headway::{headways_into, ExpectedModel, VirtualCoordinateMap};

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("bus {got} is not next to activate (bus {expected} is)")]
    NotNextActive { expected: usize, got: usize },
    #[error("holding {holding_s} s is not in the action set of stop {stop}")]
    ActionNotAllowed { stop: usize, holding_s: f64 },
    #[error("look-ahead needs at least one stage")]
    NoStages,
}

/// Look-ahead state. Times are relative to the decision instant.
#[derive(Debug, Clone, PartialEq)]
pub struct LookaheadState {
    pub target: Vec<usize>,
    pub t_d: Vec<f64>,
    /// Latest (possibly predicted) arrival per stop, index = stop id − 1.
    pub t_la: Vec<f64>,
}

impl LookaheadState {
    pub fn from_state(state: &SystemState) -> LookaheadState {
        let t0 = state.clock_s;
        let mut t_la: Vec<f64> = state.latest_arrival_s.iter().map(|t| t - t0).collect();
        for (b, pending) in state.pending_arrival_s.iter().enumerate() {
            if let Some(t) = pending {
                let e = state.target_stop[b];
                t_la[e - 1] = t_la[e - 1].max(t - t0);
            }
        }
        LookaheadState { target: state.target_stop.clone(), t_d: state.time_to_activation_s.clone(), t_la }
    }

    /// Bus with the smallest time-to-activation; ties go to the lower index.
    pub fn next_active(&self) -> usize {
        let mut best = 0;
        for b in 1..self.t_d.len() {
            if self.t_d[b] < self.t_d[best] {
                best = b;
            }
        }
        best
    }
}

struct Undo {
    bus: usize,
    target: usize,
    t_d: f64,
    stop: usize,
    t_la: f64,
}

struct Search<'a> {
    model: &'a ExpectedModel,
    map: &'a VirtualCoordinateMap,
    gamma: f64,
    stages: usize,
    target_headway: f64,
    h: Vec<f64>,
    sort: Vec<(f64, usize)>,
}

impl Search<'_> {
    /// Applies one activation in place and returns its cost.
    fn advance(&mut self, s: &mut LookaheadState, bus: usize, a: f64) -> (f64, Undo) {
        let e = s.target[bus];
        let next = self.model.next_stop(e);
        let arrival = s.t_d[bus] + a + self.model.segment_time(e);
        let dwell = self.model.predicted_dwell(next, arrival - s.t_la[next - 1]);
        let undo = Undo { bus, target: e, t_d: s.t_d[bus], stop: next, t_la: s.t_la[next - 1] };
        s.target[bus] = next;
        s.t_d[bus] = arrival + dwell;
        s.t_la[next - 1] = arrival;
        (self.cost(s), undo)
    }

    fn restore(s: &mut LookaheadState, u: Undo) {
        s.target[u.bus] = u.target;
        s.t_d[u.bus] = u.t_d;
        s.t_la[u.stop - 1] = u.t_la;
    }

    fn cost(&mut self, s: &LookaheadState) -> f64 {
        headways_into(self.map, &s.target, &s.t_d, &mut self.h, &mut self.sort);
        self.h.iter().map(|h| (h - self.target_headway).powi(2)).sum()
    }

    /// Optimal discounted cost from `level` (2..=N) onward.
    fn value(&mut self, s: &mut LookaheadState, level: usize) -> f64 {
        let bus = s.next_active();
        let model = self.model;
        let mut best = f64::INFINITY;
        for &a in model.actions(s.target[bus]) {
            let (c, undo) = self.advance(s, bus, a);
            let v = if level == self.stages { c } else { c + self.gamma * self.value(s, level + 1) };
            Self::restore(s, undo);
            if v < best {
                best = v;
            }
        }
        best
    }

    /// Discounted cost of every candidate at `level` for `bus`.
    fn candidates(&mut self, s: &mut LookaheadState, bus: usize, level: usize) -> Vec<(f64, f64)> {
        let model = self.model;
        model
            .actions(s.target[bus])
            .iter()
            .map(|&a| {
                let (c, undo) = self.advance(s, bus, a);
                let v = if level == self.stages { c } else { c + self.gamma * self.value(s, level + 1) };
                Self::restore(s, undo);
                (a, v)
            })
            .collect()
    }
}

/// First minimiser; candidates are in increasing holding order, so ties go
/// to the shorter hold.
fn argmin(candidates: &[(f64, f64)]) -> (f64, f64) {
    let mut best = candidates[0];
    for &c in &candidates[1..] {
        if c.1 < best.1 {
            best = c;
        }
    }
    best
}

/// Advances `state` by one level: `bus` is released after holding
/// `holding_s` and rolled to its next stop. Returns the new state and the
/// cost of the action against `target_headway`.
pub fn roll_forward_one_level(
    state: &LookaheadState,
    bus: usize,
    holding_s: f64,
    model: &ExpectedModel,
    map: &VirtualCoordinateMap,
    target_headway: f64,
) -> Result<(LookaheadState, f64), ControlError> {
    let min = state.t_d.iter().copied().fold(f64::INFINITY, f64::min);
    if state.t_d[bus] > min {
        return Err(ControlError::NotNextActive { expected: state.next_active(), got: bus });
    }
    let stop = state.target[bus];
    if !model.actions(stop).contains(&holding_s) {
        return Err(ControlError::ActionNotAllowed { stop, holding_s });
    }
    let mut search = Search {
        model,
        map,
        gamma: 1.0,
        stages: 1,
        target_headway,
        h: vec![0.0; state.target.len()],
        sort: Vec::with_capacity(state.target.len()),
    };
    let mut next = state.clone();
    let (c, _) = search.advance(&mut next, bus, holding_s);
    Ok((next, c))
}

/// Chooses the holding time for the CTP bus of `state` by an exhaustive
/// `stages`-level look-ahead discounted by `gamma`.
pub fn decide_nsla(
    state: &SystemState,
    stages: usize,
    gamma: f64,
    map: &VirtualCoordinateMap,
    model: &ExpectedModel,
) -> Result<(f64, DecisionRecord), ControlError> {
    if stages == 0 {
        return Err(ControlError::NoStages);
    }
    let bus = state.active_bus;
    let stop = state.target_stop[bus];
    let mut record = DecisionRecord {
        time_s: state.clock_s,
        bus_id: bus + 1,
        stop_id: stop,
        holding_s: 0.0,
        costs: Vec::new(),
        activated: vec![bus + 1],
        value: None,
    };
    if !model.controllable[stop - 1] {
        return Ok((0.0, record));
    }

    let mut s = LookaheadState::from_state(state);
    let n = s.target.len();
    let mut search =
        Search { model, map, gamma, stages, target_headway: 0.0, h: vec![0.0; n], sort: Vec::with_capacity(n) };
    // H(t_m): target headway before any hold, frozen for the whole search
    headways_into(map, &s.target, &s.t_d, &mut search.h, &mut search.sort);
    search.target_headway = search.h.iter().sum::<f64>() / n as f64;

    let costs = search.candidates(&mut s, bus, 1);
    let (a_star, value) = argmin(&costs);

    // activated buses along the optimal path
    let mut path = s.clone();
    let mut active = bus;
    let mut a = a_star;
    for level in 2..=stages {
        search.advance(&mut path, active, a);
        active = path.next_active();
        record.activated.push(active + 1);
        a = argmin(&search.candidates(&mut path, active, level)).0;
    }

    record.holding_s = a_star;
    record.costs = costs;
    record.value = Some(value);
    Ok((a_star, record))
}
