//! Headway measurement on a virtual time coordinate.
//!
//! Every critical point of the loop is given a coordinate equal to the
//! expected time needed to reach it from the departure point of stop 1,
//! counting cruise time, expected signal delays and expected dwells. A bus
//! whose next departure is from stop `e` in `t_d` seconds sits at
//! `V(e) - t_d` on that circle, and its headway is the circular gap to the
//! nearest bus ahead.

use serde::Serialize;
use thiserror::Error;

use crate::engine::signal::expected_signal_delay;
use crate::engine::travel::expected_travel_time;
use crate::scenario::{PointKind, Scenario};

#[derive(Debug, Error, PartialEq)]
pub enum HeadwayError {
    #[error(
        "demand saturates the fleet: {n_buses} buses cannot absorb {boarding_load:.3} bus-equivalents of boarding time"
    )]
    Saturated { n_buses: usize, boarding_load: f64 },
    #[error("expected dwell table has {got} entries, expected {expected}")]
    DwellTable { got: usize, expected: usize },
}

/// Expected dwell per stop and the resulting system headway H̃, from the
/// linear boarder-dominated dwell model:
/// `H̃ = (X/v + Σ w_i) / (n_B − α Σ r_e / 60)`, `t̄_e = α r_e H̃ / 60`.
pub fn expected_dwell_fixed_point(scenario: &Scenario) -> Result<(Vec<f64>, f64), HeadwayError> {
    let alpha = scenario.dwell.per_boarder_s;
    let fixed = scenario.loop_length_m() / scenario.cruise_speed_mps
        + scenario.intersections.iter().map(expected_signal_delay).sum::<f64>();
    let load = alpha * scenario.total_arrival_rate() / 60.0;
    let n = scenario.n_buses() as f64;
    if n - load <= 0.0 {
        return Err(HeadwayError::Saturated { n_buses: scenario.n_buses(), boarding_load: load });
    }
    let esh = fixed / (n - load);
    let dwell = scenario.stops.iter().map(|s| alpha * s.arrival_rate * esh / 60.0).collect();
    Ok((dwell, esh))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirtualCoordinateMap {
    arrival: Vec<f64>,
    departure: Vec<f64>,
    stop_points: Vec<usize>,
    cycle_s: f64,
}

impl VirtualCoordinateMap {
    /// Cycle length C: expected time for one loop.
    pub fn cycle_s(&self) -> f64 {
        self.cycle_s
    }

    /// Coordinate of the departure point of `stop_id`.
    pub fn stop_departure(&self, stop_id: usize) -> f64 {
        self.departure[self.stop_points[stop_id - 1]]
    }

    pub fn stop_arrival(&self, stop_id: usize) -> f64 {
        self.arrival[self.stop_points[stop_id - 1]]
    }

    pub fn point_arrival(&self, point: usize) -> f64 {
        self.arrival[point]
    }

    pub fn point_departure(&self, point: usize) -> f64 {
        self.departure[point]
    }

    /// Expected time to go forward from coordinate `from` to `to`, in [0, C).
    pub fn forward_gap(&self, from: f64, to: f64) -> f64 {
        (to - from).rem_euclid(self.cycle_s)
    }

    pub fn n_points(&self) -> usize {
        self.arrival.len()
    }
}

/// Builds the coordinate chart from the scenario and a per-stop table of
/// expected dwells (indexed by `stop_id - 1`).
pub fn build_virtual_map(scenario: &Scenario, expected_dwell: &[f64]) -> Result<VirtualCoordinateMap, HeadwayError> {
    if expected_dwell.len() != scenario.n_stops() {
        return Err(HeadwayError::DwellTable { got: expected_dwell.len(), expected: scenario.n_stops() });
    }
    let route = scenario.route();
    let n = route.len();
    let mut arrival = vec![0.0; n];
    let mut departure = vec![0.0; n];
    let hold_at = |p: usize| match route.points[p] {
        PointKind::Stop(e) => expected_dwell[e - 1],
        PointKind::Intersection(x) => expected_signal_delay(&scenario.intersections[x - 1]),
    };
    let leg_time = |p: usize| -> f64 {
        route.legs[p]
            .iter()
            .map(|&r| expected_travel_time(&scenario.road_segments[r - 1], scenario.cruise_speed_mps))
            .sum()
    };
    // point 0 is stop 1; its departure is the origin
    let mut t = 0.0;
    for p in 1..n {
        t += leg_time(p - 1);
        arrival[p] = t;
        t += hold_at(p);
        departure[p] = t;
    }
    t += leg_time(n - 1);
    let cycle_s = t + hold_at(0);
    arrival[0] = t - cycle_s;
    departure[0] = 0.0;
    Ok(VirtualCoordinateMap { arrival, departure, stop_points: route.stop_points.clone(), cycle_s })
}

/// Expected-value transition data shared by the engine's state builder and
/// the look-ahead controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedModel {
    /// Expected traversal of the bus line segment leaving each stop (cruise
    /// plus expected signal delays), indexed by `stop_id - 1`.
    pub segment_s: Vec<f64>,
    /// Passenger arrival rate per second, indexed by `stop_id - 1`.
    pub rate_per_s: Vec<f64>,
    pub per_boarder_s: f64,
    /// Holding times allowed at each stop.
    pub actions: Vec<Vec<f64>>,
    pub controllable: Vec<bool>,
}

impl ExpectedModel {
    pub fn new(scenario: &Scenario, map: &VirtualCoordinateMap) -> ExpectedModel {
        let segment_s = scenario
            .stops
            .iter()
            .map(|s| {
                let next = scenario.next_stop(s.id);
                map.forward_gap(map.stop_departure(s.id), map.stop_arrival(next))
            })
            .collect();
        ExpectedModel {
            segment_s,
            rate_per_s: scenario.stops.iter().map(|s| s.arrival_rate / 60.0).collect(),
            per_boarder_s: scenario.dwell.per_boarder_s,
            actions: scenario.stops.iter().map(|s| scenario.stop_actions(s.id).to_vec()).collect(),
            controllable: scenario.stops.iter().map(|s| s.controllable).collect(),
        }
    }

    pub fn n_stops(&self) -> usize {
        self.segment_s.len()
    }

    pub fn next_stop(&self, stop_id: usize) -> usize {
        stop_id % self.n_stops() + 1
    }

    pub fn segment_time(&self, stop_id: usize) -> f64 {
        self.segment_s[stop_id - 1]
    }

    /// Predicted dwell of a bus reaching `stop_id` `gap_s` seconds after the
    /// previous bus did: the boarders who accumulated in between.
    pub fn predicted_dwell(&self, stop_id: usize, gap_s: f64) -> f64 {
        self.per_boarder_s * self.rate_per_s[stop_id - 1] * gap_s.max(0.0)
    }

    pub fn actions(&self, stop_id: usize) -> &[f64] {
        &self.actions[stop_id - 1]
    }
}

/// Position of a bus on the virtual circle (not reduced modulo C).
pub fn progress_of(map: &VirtualCoordinateMap, target_stop: usize, time_to_activation_s: f64) -> f64 {
    map.stop_departure(target_stop) - time_to_activation_s
}

/// Forward headway of every bus: the circular gap to the nearest bus ahead.
/// Equal positions are ordered by bus index, the higher index ahead.
pub fn headways(map: &VirtualCoordinateMap, targets: &[usize], t_d: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; targets.len()];
    headways_into(map, targets, t_d, &mut out, &mut Vec::with_capacity(targets.len()));
    out
}

pub(crate) fn headways_into(
    map: &VirtualCoordinateMap,
    targets: &[usize],
    t_d: &[f64],
    out: &mut [f64],
    scratch: &mut Vec<(f64, usize)>,
) {
    let c = map.cycle_s();
    scratch.clear();
    scratch.extend(targets.iter().zip(t_d).enumerate().map(|(b, (&e, &t))| (progress_of(map, e, t).rem_euclid(c), b)));
    scratch.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let n = scratch.len();
    for k in 0..n {
        let (p, b) = scratch[k];
        out[b] = if k + 1 < n { scratch[k + 1].0 - p } else { scratch[0].0 - p + c };
    }
}

/// Mean and pseudo standard deviation (population form) of a headway vector.
pub fn mean_and_sigma(h: &[f64]) -> (f64, f64) {
    let n = h.len() as f64;
    let mean = h.iter().sum::<f64>() / n;
    let var = h.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeadwaySnapshot {
    pub time_s: f64,
    /// Forward headway per bus (index = bus id − 1).
    pub headways: Vec<f64>,
    /// Dynamic target headway: mean of `headways`.
    pub target: f64,
    pub sigma: f64,
}

impl HeadwaySnapshot {
    pub fn min_headway(&self) -> f64 {
        self.headways.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn headway_snapshot(state: &crate::engine::SystemState, map: &VirtualCoordinateMap) -> HeadwaySnapshot {
    let h = headways(map, &state.target_stop, &state.time_to_activation_s);
    let (target, sigma) = mean_and_sigma(&h);
    HeadwaySnapshot { time_s: state.clock_s, headways: h, target, sigma }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SystemState;
    use crate::scenario::builtin_fixture;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn fixture() -> Scenario {
        builtin_fixture("he2019").unwrap()
    }

    fn fixture_map() -> VirtualCoordinateMap {
        let s = fixture();
        let (dw, _) = expected_dwell_fixed_point(&s).unwrap();
        build_virtual_map(&s, &dw).unwrap()
    }

    #[test]
    fn fixed_point_closed_form() {
        let s = fixture();
        let (dw, esh) = expected_dwell_fixed_point(&s).unwrap();
        let expected_delays: f64 = s.intersections.iter().map(expected_signal_delay).sum();
        assert_abs_diff_eq!(esh, (1795.0 + expected_delays) / 8.05, epsilon = 1e-9);
        assert_abs_diff_eq!(esh, 237.3, epsilon = 0.05);
        assert_abs_diff_eq!(dw[19], 4.0 * esh / 60.0, epsilon = 1e-12);
    }

    #[test]
    fn fixed_point_without_boarding_time() {
        let mut doc = fixture().to_doc();
        doc.dwell.per_boarder_s = 0.0;
        let s = Scenario::from_doc(doc).unwrap();
        let (dw, esh) = expected_dwell_fixed_point(&s).unwrap();
        assert_abs_diff_eq!(esh, 1910.23 / 9.0, epsilon = 0.01);
        assert!(dw.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn saturated_demand_is_an_error() {
        let mut doc = fixture().to_doc();
        doc.dwell.per_boarder_s = 10.0;
        let s = Scenario::from_doc(doc).unwrap();
        assert!(matches!(expected_dwell_fixed_point(&s), Err(HeadwayError::Saturated { .. })));
    }

    #[test]
    fn cycle_without_dwells() {
        let s = fixture();
        let map = build_virtual_map(&s, &vec![0.0; 30]).unwrap();
        assert_abs_diff_eq!(map.cycle_s(), 1795.0 + 115.2317, epsilon = 1e-3);
    }

    #[test]
    fn cycle_is_fleet_times_esh() {
        let s = fixture();
        let (dw, esh) = expected_dwell_fixed_point(&s).unwrap();
        let map = build_virtual_map(&s, &dw).unwrap();
        assert_abs_diff_eq!(map.cycle_s(), 9.0 * esh, epsilon = 1e-6);
    }

    #[test]
    fn coordinates_increase_along_the_loop() {
        let map = fixture_map();
        assert_eq!(map.stop_departure(1), 0.0);
        for p in 1..map.n_points() {
            assert!(map.point_arrival(p) > map.point_departure(p - 1));
            assert!(map.point_departure(p) >= map.point_arrival(p));
        }
        assert!(map.stop_arrival(1) < 0.0);
    }

    #[test]
    fn dwell_table_length_checked() {
        assert!(build_virtual_map(&fixture(), &[0.0; 3]).is_err());
    }

    #[test]
    fn progress_arithmetic() {
        let map = fixture_map();
        assert_eq!(progress_of(&map, 7, 0.0), map.stop_departure(7));
        assert_abs_diff_eq!(progress_of(&map, 7, 10.0) - progress_of(&map, 7, 40.0), 30.0);
        let c = map.cycle_s();
        let p = progress_of(&map, 3, 12.0);
        let q = progress_of(&map, 3, 12.0 + c);
        assert_abs_diff_eq!(p.rem_euclid(c), q.rem_euclid(c), epsilon = 1e-9);
    }

    /// A map with C = 600 and stop departures at 0, 100, ..., 500.
    fn toy_map() -> VirtualCoordinateMap {
        VirtualCoordinateMap {
            arrival: (0..6).map(|k| k as f64 * 100.0).collect(),
            departure: (0..6).map(|k| k as f64 * 100.0).collect(),
            stop_points: (0..6).collect(),
            cycle_s: 600.0,
        }
    }

    #[test]
    fn even_spacing_has_zero_sigma() {
        let map = toy_map();
        let h = headways(&map, &[1, 3, 5], &[0.0, 0.0, 0.0]);
        assert_eq!(h, [200.0, 200.0, 200.0]);
        assert_eq!(mean_and_sigma(&h), (200.0, 0.0));
    }

    #[test]
    fn uneven_spacing_sigma() {
        let map = toy_map();
        // positions 0, 100, 300 → gaps 100, 200, 300
        let h = headways(&map, &[1, 2, 4], &[0.0, 0.0, 0.0]);
        assert_eq!(h, [100.0, 200.0, 300.0]);
        let (m, s) = mean_and_sigma(&h);
        assert_eq!(m, 200.0);
        assert_abs_diff_eq!(s, (20_000.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(s, 81.65, epsilon = 0.01);
    }

    fn state_from(targets: Vec<usize>, t_d: Vec<f64>) -> SystemState {
        let n = targets.len();
        SystemState {
            clock_s: 0.0,
            active_bus: 0,
            target_stop: targets,
            time_to_activation_s: t_d,
            latest_arrival_s: vec![0.0; 30],
            pending_arrival_s: vec![None; n],
        }
    }

    proptest! {
        #[test]
        fn headways_telescope_to_cycle(
            buses in prop::collection::vec((1usize..=30, 0.0f64..600.0), 1..12)
        ) {
            let map = fixture_map();
            let (targets, t_d): (Vec<_>, Vec<_>) = buses.into_iter().unzip();
            let snap = headway_snapshot(&state_from(targets, t_d), &map);
            let sum: f64 = snap.headways.iter().sum();
            prop_assert!((sum - map.cycle_s()).abs() < 1e-6);
            prop_assert!((snap.target - map.cycle_s() / snap.headways.len() as f64).abs() < 1e-9);
            prop_assert!(snap.headways.iter().all(|&h| h >= 0.0));
        }

        #[test]
        fn holding_shifts_exactly_two_headways(
            targets in prop::sample::subsequence((1usize..=30).collect::<Vec<_>>(), 6).prop_shuffle(),
            extra in prop::collection::vec(0.0f64..20.0, 6),
            bus in 0usize..6, hold in 0.5f64..15.0,
        ) {
            let map = fixture_map();
            let n = 6;
            let before = headways(&map, &targets, &extra);
            // a hold must not move the bus past its follower
            let order: Vec<f64> = targets.iter().zip(&extra).map(|(&e, &t)| progress_of(&map, e, t).rem_euclid(map.cycle_s())).collect();
            let follower = (0..n).filter(|&b| b != bus).min_by(|&x, &y| {
                let gx = (order[bus] - order[x]).rem_euclid(map.cycle_s());
                let gy = (order[bus] - order[y]).rem_euclid(map.cycle_s());
                gx.total_cmp(&gy)
            }).unwrap();
            prop_assume!(before[follower] > hold + 1e-6);
            let mut held = extra.clone();
            held[bus] += hold;
            let after = headways(&map, &targets, &held);
            for b in 0..n {
                let expect = if b == bus { before[b] + hold } else if b == follower { before[b] - hold } else { before[b] };
                prop_assert!((after[b] - expect).abs() < 1e-6, "bus {} {} vs {}", b, after[b], expect);
            }
        }
    }

    #[test]
    fn sigma_zero_iff_equal() {
        assert_eq!(mean_and_sigma(&[3.0, 3.0, 3.0]).1, 0.0);
        assert!(mean_and_sigma(&[3.0, 3.0, 3.1]).1 > 0.0);
    }
}
