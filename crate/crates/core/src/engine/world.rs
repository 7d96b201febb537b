use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};
use std::time::Instant;

use thiserror::Error;

use super::demand::{generate_passengers, Passenger};
use super::dwell::dwell_time;
use super::log::{EventKind, EventLog, Location, LogRecord};
use super::signal::signal_delay_at;
use super::travel::sample_travel_time;
use super::SystemState;
use crate::control::{DecisionContext, DecisionRecord, Strategy};
use crate::headway::{
    build_virtual_map, expected_dwell_fixed_point, headway_snapshot, ExpectedModel, HeadwayError, HeadwaySnapshot,
    VirtualCoordinateMap,
};
use crate::rng::{stream, Purpose, SimRng};
use crate::scenario::{DwellMode, PointKind, Scenario};

/// Minimum separation between a leader leaving a critical point and its
/// follower reaching it.
pub const FOLLOW_GAP_S: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("strategy `{strategy}` chose holding {holding_s} s at stop {stop}, outside its action set")]
    ActionOutsideSet { strategy: String, stop: usize, holding_s: f64 },
    #[error("strategy `{strategy}` returned an invalid holding time {holding_s}")]
    InvalidHolding { strategy: String, holding_s: f64 },
    #[error(transparent)]
    Headway(#[from] HeadwayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventType {
    Arrive,
    ServiceDone,
    HoldEnd,
    LeaveIntersection,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    bus: usize,
    seq: u64,
    kind: EventType,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // simultaneous events go to the lower bus id first
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.bus.cmp(&other.bus)).then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Position {
    Serving {
        stop: usize,
        until: f64,
    },
    Held {
        stop: usize,
        until: f64,
    },
    AtIntersection {
        until: f64,
    },
    EnRoute {
        arrival: f64,
    },
    /// Waiting for the leader to clear the next critical point.
    Blocked,
}

#[derive(Debug, Clone)]
struct BusRt {
    id: usize,
    capacity: usize,
    /// Onboard passenger ids grouped by destination (index = stop id − 1).
    onboard: Vec<Vec<usize>>,
    onboard_count: usize,
    position: Position,
    /// Ordinal of the critical point the bus is at or heading to, counted
    /// from its initial stop.
    visit: usize,
    init_point: usize,
    lap: u32,
    /// Departure time from each visited point, by visit ordinal.
    departures: Vec<f64>,
}

#[derive(Debug, Clone)]
struct StopRt {
    /// Passenger ids in creation order.
    arrivals: Vec<usize>,
    next_arrival: usize,
    waiting: VecDeque<usize>,
    latest_arrival_s: f64,
}

/// Passenger accounting at an instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Census {
    pub created: usize,
    pub waiting: usize,
    pub onboard: usize,
    pub alighted: usize,
}

/// One decision epoch as seen by the metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct CtpRecord {
    pub time_s: f64,
    pub bus_id: usize,
    pub stop_id: usize,
    pub holding_s: f64,
    /// Headways before the hold is applied.
    pub snapshot: HeadwaySnapshot,
    pub record: Option<DecisionRecord>,
    pub decision_wall_s: f64,
}

#[derive(Debug, Clone)]
pub struct ReplicationOutput {
    pub log: EventLog,
    pub ctps: Vec<CtpRecord>,
    pub passengers: Vec<Passenger>,
    pub observation_period_s: f64,
    pub esh_s: f64,
    pub cycle_s: f64,
    pub wall_s: f64,
}

/// Mutable state of one replication.
pub struct World<'s> {
    scenario: &'s Scenario,
    map: VirtualCoordinateMap,
    model: ExpectedModel,
    esh: f64,
    horizon: f64,
    now: f64,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    buses: Vec<BusRt>,
    /// Leader index and the visit-ordinal shift from follower to leader.
    leader: Vec<Option<(usize, i64)>>,
    follower: Vec<Option<usize>>,
    /// For every critical point, the first stop at or after it.
    stop_ahead: Vec<usize>,
    stops: Vec<StopRt>,
    passengers: Vec<Passenger>,
    alighted: usize,
    noise: Vec<SimRng>,
    log: EventLog,
}

impl<'s> World<'s> {
    pub fn new(
        scenario: &'s Scenario,
        master_seed: u64,
        replication: u64,
        observation_period_s: f64,
    ) -> Result<World<'s>, EngineError> {
        let (dwell_table, esh) = expected_dwell_fixed_point(scenario)?;
        let map = build_virtual_map(scenario, &dwell_table)?;
        let model = ExpectedModel::new(scenario, &map);
        let route = scenario.route();
        let n_points = route.len();

        let mut passengers = Vec::new();
        let mut stops = Vec::with_capacity(scenario.n_stops());
        for s in &scenario.stops {
            let generated = if observation_period_s > 0.0 {
                let mut a = stream(master_seed, replication, Purpose::Arrivals, s.id as u32);
                let mut d = stream(master_seed, replication, Purpose::Destinations, s.id as u32);
                generate_passengers(scenario, s.id, (0.0, observation_period_s), passengers.len(), &mut a, &mut d)
            } else {
                Vec::new()
            };
            stops.push(StopRt {
                arrivals: generated.iter().map(|p| p.id).collect(),
                next_arrival: 0,
                waiting: VecDeque::new(),
                latest_arrival_s: -esh,
            });
            passengers.extend(generated);
        }

        let buses: Vec<BusRt> = scenario
            .buses
            .iter()
            .map(|b| BusRt {
                id: b.id,
                capacity: b.capacity,
                onboard: vec![Vec::new(); scenario.n_stops()],
                onboard_count: 0,
                position: Position::Serving { stop: b.initial_target_stop, until: b.rtba_s },
                visit: 0,
                init_point: route.stop_points[b.initial_target_stop - 1],
                lap: 0,
                departures: Vec::new(),
            })
            .collect();

        // ring order; the bus furthest along has the first bus as its leader
        let n = buses.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&b| buses[b].init_point);
        let mut leader = vec![None; n];
        let mut follower = vec![None; n];
        if n > 1 {
            for k in 0..n {
                let f = order[k];
                let l = order[(k + 1) % n];
                let wrap = if k + 1 == n { n_points as i64 } else { 0 };
                let shift = buses[f].init_point as i64 - buses[l].init_point as i64 - wrap;
                leader[f] = Some((l, shift));
                follower[l] = Some(f);
            }
        }

        let mut stop_ahead = vec![0; n_points];
        let mut next = 1;
        for p in (0..n_points).rev() {
            if let PointKind::Stop(e) = route.points[p] {
                next = e;
            }
            stop_ahead[p] = next;
        }

        let noise = scenario
            .buses
            .iter()
            .map(|b| stream(master_seed, replication, Purpose::TravelNoise, b.id as u32))
            .collect();

        let mut world = World {
            scenario,
            map,
            model,
            esh,
            horizon: observation_period_s,
            now: 0.0,
            queue: BinaryHeap::new(),
            seq: 0,
            buses,
            leader,
            follower,
            stop_ahead,
            stops,
            passengers,
            alighted: 0,
            noise,
            log: EventLog::default(),
        };
        if observation_period_s > 0.0 {
            for b in 0..n {
                let stop = scenario.buses[b].initial_target_stop;
                world.stops[stop - 1].latest_arrival_s = 0.0;
                world.record(b, EventKind::ArriveStop, 0.0);
                world.schedule(scenario.buses[b].rtba_s, b, EventType::ServiceDone);
            }
        }
        Ok(world)
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn esh(&self) -> f64 {
        self.esh
    }

    pub fn map(&self) -> &VirtualCoordinateMap {
        &self.map
    }

    pub fn model(&self) -> &ExpectedModel {
        &self.model
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn passengers(&self) -> &[Passenger] {
        &self.passengers
    }

    pub fn onboard_counts(&self) -> Vec<usize> {
        self.buses.iter().map(|b| b.onboard_count).collect()
    }

    pub fn capacities(&self) -> Vec<usize> {
        self.buses.iter().map(|b| b.capacity).collect()
    }

    pub fn census(&self) -> Census {
        let created = self.passengers.iter().filter(|p| p.created_at_s <= self.now).count();
        let waiting = self
            .stops
            .iter()
            .map(|s| {
                let unadmitted = s.arrivals[s.next_arrival..]
                    .iter()
                    .take_while(|&&id| self.passengers[id].created_at_s <= self.now)
                    .count();
                s.waiting.len() + unadmitted
            })
            .sum();
        Census { created, waiting, onboard: self.buses.iter().map(|b| b.onboard_count).sum(), alighted: self.alighted }
    }

    fn schedule(&mut self, time: f64, bus: usize, kind: EventType) {
        self.seq += 1;
        self.queue.push(Reverse(Event { time, bus, seq: self.seq, kind }));
    }

    fn point_of(&self, b: usize) -> usize {
        let bus = &self.buses[b];
        (bus.init_point + bus.visit) % self.scenario.route().len()
    }

    fn record(&mut self, b: usize, kind: EventKind, time: f64) {
        let p = self.point_of(b);
        let route = self.scenario.route();
        let location = match route.points[p] {
            PointKind::Stop(e) => Location::Stop(e),
            PointKind::Intersection(x) => Location::Intersection(x),
        };
        let distance_m = route.offsets_m[p] + f64::from(self.buses[b].lap) * route.length_m;
        self.log.push(LogRecord { time_s: time, bus_id: self.buses[b].id, kind, location, distance_m });
    }

    /// Advances until the next CTP, asks `strategy` for a holding time and
    /// applies it. Returns `None` once the observation period is over.
    pub fn step_to_next_ctp(
        &mut self,
        strategy: &mut dyn Strategy,
    ) -> Result<Option<(SystemState, CtpRecord)>, EngineError> {
        while let Some(&Reverse(ev)) = self.queue.peek() {
            if ev.time >= self.horizon {
                return Ok(None);
            }
            self.queue.pop();
            self.now = ev.time;
            match ev.kind {
                EventType::Arrive => self.on_arrive(ev.bus),
                EventType::LeaveIntersection => self.depart(ev.bus),
                EventType::HoldEnd => self.on_hold_end(ev.bus),
                EventType::ServiceDone => return self.on_ctp(ev.bus, strategy).map(Some),
            }
        }
        Ok(None)
    }

    fn on_arrive(&mut self, b: usize) {
        let t = self.now;
        if self.scenario.no_overtaking {
            if let Some((l, shift)) = self.leader[b] {
                let jl = self.buses[b].visit as i64 + shift;
                if jl >= 0 {
                    match self.buses[l].departures.get(jl as usize) {
                        Some(&d) if t < d + FOLLOW_GAP_S => {
                            self.schedule(d + FOLLOW_GAP_S, b, EventType::Arrive);
                            return;
                        }
                        Some(_) => {}
                        None => {
                            self.buses[b].position = Position::Blocked;
                            return;
                        }
                    }
                }
            }
        }
        let p = self.point_of(b);
        match self.scenario.route().points[p] {
            PointKind::Intersection(x) => {
                self.record(b, EventKind::ArriveIntersection, t);
                let delay = signal_delay_at(&self.scenario.intersections[x - 1], t);
                if delay > 0.0 {
                    self.buses[b].position = Position::AtIntersection { until: t + delay };
                    self.schedule(t + delay, b, EventType::LeaveIntersection);
                } else {
                    self.depart(b);
                }
            }
            PointKind::Stop(e) => {
                self.record(b, EventKind::ArriveStop, t);
                self.stops[e - 1].latest_arrival_s = t;
                let alighters = self.alight(b, e);
                let boarders = self.board(b, e);
                let dwell = dwell_time(boarders, alighters, &self.scenario.dwell);
                self.buses[b].position = Position::Serving { stop: e, until: t + dwell };
                self.schedule(t + dwell, b, EventType::ServiceDone);
            }
        }
    }

    fn admit(&mut self, e: usize) {
        let stop = &mut self.stops[e - 1];
        while let Some(&id) = stop.arrivals.get(stop.next_arrival) {
            if self.passengers[id].created_at_s > self.now {
                break;
            }
            stop.waiting.push_back(id);
            stop.next_arrival += 1;
        }
    }

    fn alight(&mut self, b: usize, e: usize) -> usize {
        let leaving = std::mem::take(&mut self.buses[b].onboard[e - 1]);
        for &id in &leaving {
            self.passengers[id].alighted_at_s = Some(self.now);
        }
        self.buses[b].onboard_count -= leaving.len();
        self.alighted += leaving.len();
        leaving.len()
    }

    /// First-come first-served boarding up to the remaining capacity.
    fn board(&mut self, b: usize, e: usize) -> usize {
        self.admit(e);
        let mut boarded = 0;
        while self.buses[b].onboard_count < self.buses[b].capacity {
            let Some(id) = self.stops[e - 1].waiting.pop_front() else {
                break;
            };
            let p = &mut self.passengers[id];
            p.boarded_at_s = Some(self.now);
            let dest = p.destination_stop;
            let bus = &mut self.buses[b];
            bus.onboard[dest - 1].push(id);
            bus.onboard_count += 1;
            boarded += 1;
        }
        boarded
    }

    fn on_ctp(&mut self, b: usize, strategy: &mut dyn Strategy) -> Result<(SystemState, CtpRecord), EngineError> {
        let Position::Serving { stop, .. } = self.buses[b].position else {
            unreachable!("CTP for a bus that is not serving");
        };
        // late arrivals during the dwell board without extending it
        self.board(b, stop);
        let state = self.system_state(b);
        let snapshot = headway_snapshot(&state, &self.map);
        let ctx = DecisionContext {
            scenario: self.scenario,
            state: &state,
            snapshot: &snapshot,
            map: &self.map,
            model: &self.model,
            esh: self.esh,
        };
        let started = Instant::now();
        let decision = strategy.decide(&ctx);
        let decision_wall_s = started.elapsed().as_secs_f64();
        let a = decision.holding_s;
        if !a.is_finite() || a < 0.0 {
            return Err(EngineError::InvalidHolding { strategy: strategy.name(), holding_s: a });
        }
        if strategy.uses_action_sets() && !self.model.actions(stop).contains(&a) {
            return Err(EngineError::ActionOutsideSet { strategy: strategy.name(), stop, holding_s: a });
        }
        let t = self.now;
        if a > 0.0 {
            self.record(b, EventKind::HoldStart, t);
            self.buses[b].position = Position::Held { stop, until: t + a };
            self.schedule(t + a, b, EventType::HoldEnd);
        } else {
            self.depart(b);
        }
        let record = CtpRecord {
            time_s: t,
            bus_id: self.buses[b].id,
            stop_id: stop,
            holding_s: a,
            snapshot,
            record: decision.record,
            decision_wall_s,
        };
        Ok((state, record))
    }

    fn on_hold_end(&mut self, b: usize) {
        let Position::Held { stop, .. } = self.buses[b].position else {
            unreachable!("hold ended for a bus that is not held");
        };
        if self.scenario.dwell.mode == DwellMode::BoardAtRelease {
            self.board(b, stop);
        }
        self.record(b, EventKind::HoldEnd, self.now);
        self.depart(b);
    }

    fn depart(&mut self, b: usize) {
        let t = self.now;
        let p = self.point_of(b);
        let route = self.scenario.route();
        let kind = match route.points[p] {
            PointKind::Stop(_) => EventKind::DepartStop,
            PointKind::Intersection(_) => EventKind::DepartIntersection,
        };
        self.record(b, kind, t);
        let travel: f64 = route.legs[p]
            .iter()
            .map(|&r| {
                sample_travel_time(
                    &self.scenario.road_segments[r - 1],
                    self.scenario.cruise_speed_mps,
                    &mut self.noise[b],
                )
            })
            .sum();
        let bus = &mut self.buses[b];
        bus.departures.push(t);
        let departed_visit = bus.visit;
        bus.visit += 1;
        if (p + 1).is_multiple_of(route.len()) {
            bus.lap += 1;
        }
        bus.position = Position::EnRoute { arrival: t + travel };
        self.schedule(t + travel, b, EventType::Arrive);

        if let Some(f) = self.follower[b] {
            if self.buses[f].position == Position::Blocked {
                let (_, shift) = self.leader[f].expect("follower has a leader");
                if self.buses[f].visit as i64 + shift == departed_visit as i64 {
                    self.schedule(t + FOLLOW_GAP_S, f, EventType::Arrive);
                    // stays Blocked until the re-arrival is processed
                }
            }
        }
    }

    /// The state variable at the current CTP of bus `active`.
    fn system_state(&self, active: usize) -> SystemState {
        let t = self.now;
        let n = self.buses.len();
        let mut target_stop = vec![0; n];
        let mut t_d = vec![0.0; n];
        let mut pending_arrival_s = vec![None; n];
        // (relative arrival estimate, bus)
        let mut incoming: Vec<(f64, usize)> = Vec::new();
        let route = self.scenario.route();
        for (i, bus) in self.buses.iter().enumerate() {
            let p = self.point_of(i);
            match bus.position {
                Position::Serving { stop, until } => {
                    target_stop[i] = stop;
                    t_d[i] = if i == active { 0.0 } else { (until - t).max(0.0) };
                }
                Position::Held { stop, until } => {
                    let next = self.model.next_stop(stop);
                    target_stop[i] = next;
                    incoming.push(((until - t) + self.model.segment_time(stop), i));
                }
                Position::AtIntersection { until } => {
                    let e = self.stop_ahead[p];
                    target_stop[i] = e;
                    let rest = self.map.forward_gap(self.map.point_departure(p), self.map.stop_arrival(e));
                    incoming.push(((until - t) + rest, i));
                }
                Position::EnRoute { .. } | Position::Blocked => {
                    let arrival = match bus.position {
                        Position::EnRoute { arrival } => arrival,
                        _ => t,
                    };
                    let e = self.stop_ahead[p];
                    target_stop[i] = e;
                    let rest = match route.points[p] {
                        PointKind::Stop(_) => 0.0,
                        PointKind::Intersection(_) => {
                            self.map.forward_gap(self.map.point_arrival(p), self.map.stop_arrival(e))
                        }
                    };
                    incoming.push(((arrival - t).max(0.0) + rest, i));
                }
            }
        }
        // buses heading to the same stop see the predicted arrival of the one ahead
        incoming.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let mut last: Vec<f64> = self.stops.iter().map(|s| s.latest_arrival_s - t).collect();
        for (arr, i) in incoming {
            let e = target_stop[i];
            t_d[i] = arr + self.model.predicted_dwell(e, arr - last[e - 1]);
            last[e - 1] = last[e - 1].max(arr);
            pending_arrival_s[i] = Some(t + arr);
        }
        SystemState {
            clock_s: t,
            active_bus: active,
            target_stop,
            time_to_activation_s: t_d,
            latest_arrival_s: self.stops.iter().map(|s| s.latest_arrival_s).collect(),
            pending_arrival_s,
        }
    }

    pub fn into_output(self, ctps: Vec<CtpRecord>, wall_s: f64) -> ReplicationOutput {
        ReplicationOutput {
            log: self.log,
            ctps,
            passengers: self.passengers,
            observation_period_s: self.horizon,
            esh_s: self.esh,
            cycle_s: self.map.cycle_s(),
            wall_s,
        }
    }
}

/// Runs one observation period. Identical inputs give identical logs.
pub fn run_replication(
    scenario: &Scenario,
    strategy: &mut dyn Strategy,
    master_seed: u64,
    replication: u64,
    observation_period_s: f64,
) -> Result<ReplicationOutput, EngineError> {
    let started = Instant::now();
    let mut world = World::new(scenario, master_seed, replication, observation_period_s)?;
    let mut ctps = Vec::new();
    while let Some((_, rec)) = world.step_to_next_ctp(strategy)? {
        ctps.push(rec);
    }
    let wall_s = started.elapsed().as_secs_f64();
    Ok(world.into_output(ctps, wall_s))
}
