//! Brute-force reference for the look-ahead search: every action tuple is
//! enumerated and scored with its own roll-forward and headway code.

use holdsim::control::decide_nsla;
use holdsim::engine::SystemState;
use holdsim::headway::{build_virtual_map, expected_dwell_fixed_point, ExpectedModel, VirtualCoordinateMap};
use holdsim::scenario::Scenario;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone)]
struct Node {
    target: Vec<usize>,
    t_d: Vec<f64>,
    t_la: Vec<f64>,
}

struct Oracle<'a> {
    scenario: &'a Scenario,
    map: &'a VirtualCoordinateMap,
    gamma: f64,
    target_headway: f64,
}

impl Oracle<'_> {
    fn headways(&self, n: &Node) -> Vec<f64> {
        let c = self.map.cycle_s();
        let pos: Vec<f64> =
            n.target.iter().zip(&n.t_d).map(|(&e, &t)| (self.map.stop_departure(e) - t).rem_euclid(c)).collect();
        let mut order: Vec<usize> = (0..pos.len()).collect();
        order.sort_by(|&a, &b| pos[a].total_cmp(&pos[b]).then(a.cmp(&b)));
        let mut h = vec![0.0; pos.len()];
        for k in 0..order.len() {
            let b = order[k];
            let leader = order[(k + 1) % order.len()];
            let mut gap = pos[leader] - pos[b];
            if k + 1 == order.len() {
                gap += c;
            }
            h[b] = gap;
        }
        h
    }

    fn cost(&self, n: &Node) -> f64 {
        self.headways(n).iter().map(|h| (h - self.target_headway).powi(2)).sum()
    }

    fn next_bus(n: &Node) -> usize {
        (0..n.t_d.len()).fold(0, |best, b| if n.t_d[b] < n.t_d[best] { b } else { best })
    }

    fn step(&self, n: &Node, bus: usize, a: f64) -> Node {
        let e = n.target[bus];
        let next = self.scenario.next_stop(e);
        let travel = self.map.forward_gap(self.map.stop_departure(e), self.map.stop_arrival(next));
        let arrival = n.t_d[bus] + a + travel;
        let boarders = self.scenario.stop(next).arrival_rate / 60.0 * (arrival - n.t_la[next - 1]).max(0.0);
        let mut out = n.clone();
        out.target[bus] = next;
        out.t_d[bus] = arrival + self.scenario.dwell.per_boarder_s * boarders;
        out.t_la[next - 1] = arrival;
        out
    }

    fn actions(&self, stop: usize) -> Vec<f64> {
        self.scenario.stop_actions(stop).to_vec()
    }

    /// Every action tuple of length `levels` with its per-level costs.
    fn tuples(&self, n: &Node, first_bus: Option<usize>, levels: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        if levels == 0 {
            return vec![(vec![], vec![])];
        }
        let bus = first_bus.unwrap_or_else(|| Self::next_bus(n));
        let mut out = Vec::new();
        for a in self.actions(n.target[bus]) {
            let child = self.step(n, bus, a);
            let c = self.cost(&child);
            for (mut acts, mut costs) in self.tuples(&child, None, levels - 1) {
                acts.insert(0, a);
                costs.insert(0, c);
                out.push((acts, costs));
            }
        }
        out
    }

    fn discounted(&self, costs: &[f64]) -> f64 {
        costs.iter().rev().fold(0.0, |acc, &c| c + self.gamma * acc)
    }
}

pub struct Case {
    scenario: Scenario,
    state: SystemState,
    stages: usize,
    gamma: f64,
}

pub fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let n_stops = rng.random_range(3..=6);
    let n_buses = rng.random_range(1..=4.min(n_stops));
    let mut stops: Vec<usize> = (1..=n_stops).collect();
    stops.shuffle(rng);
    let initial: Vec<usize> = stops[..n_buses].to_vec();

    let active = rng.random_range(0..n_buses);
    let targets: Vec<usize> = (0..n_buses).map(|_| rng.random_range(1..=n_stops)).collect();
    let mut sets = Vec::new();
    for stop in 1..=n_stops {
        let forced = stop == targets[active];
        if !forced && rng.random_bool(0.3) {
            sets.push(vec![0.0]);
            continue;
        }
        let size = rng.random_range(2..=4);
        let mut pool: Vec<u32> = (1..=12).collect();
        pool.shuffle(rng);
        let mut set: Vec<f64> = pool[..size - 1].iter().map(|&x| x as f64).collect();
        set.push(0.0);
        set.sort_by(f64::total_cmp);
        sets.push(set);
    }
    let scenario = super::small_line(rng.random_range(0.5..3.0), &initial, &sets);

    let clock = 1000.0;
    let t_d: Vec<f64> = (0..n_buses).map(|b| if b == active { 0.0 } else { rng.random_range(0.5..200.0) }).collect();
    let pending = (0..n_buses)
        .map(|b| (b != active && rng.random_bool(0.5)).then(|| clock + rng.random_range(0.0..t_d[b])))
        .collect();
    let state = SystemState {
        clock_s: clock,
        active_bus: active,
        target_stop: targets,
        time_to_activation_s: t_d,
        latest_arrival_s: (0..n_stops).map(|_| clock - rng.random_range(0.0..300.0)).collect(),
        pending_arrival_s: pending,
    };
    Case { scenario, state, stages: rng.random_range(1..=3), gamma: rng.random_range(0.05..=1.0) }
}

/// Compares the search with the oracle on `count` random states; returns
/// the first disagreement.
pub fn check_random_states(seed: u64, count: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let case = random_case(&mut rng);
        let (dwell, _) = expected_dwell_fixed_point(&case.scenario).unwrap();
        let map = build_virtual_map(&case.scenario, &dwell).unwrap();
        let model = ExpectedModel::new(&case.scenario, &map);
        let (a, rec) = decide_nsla(&case.state, case.stages, case.gamma, &map, &model).map_err(|e| e.to_string())?;
        let per_first = oracle_costs(&case, &map);
        let (a_oracle, v_oracle) =
            per_first.iter().copied().fold((f64::NAN, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
        if a != a_oracle {
            return Err(format!("state {i}: a* {a} vs oracle {a_oracle} ({:?} vs {per_first:?})", rec.costs));
        }
        let v = rec.value.unwrap_or(f64::NAN);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * y.abs().max(1.0);
        if !close(v, v_oracle) {
            return Err(format!("state {i}: value {v} vs oracle {v_oracle}"));
        }
        if rec.costs.len() != per_first.len()
            || rec.costs.iter().zip(&per_first).any(|(x, y)| x.0 != y.0 || !close(x.1, y.1))
        {
            return Err(format!("state {i}: costs {:?} vs oracle {per_first:?}", rec.costs));
        }
    }
    Ok(())
}

/// Best discounted total for each first-level action, in action-set order.
pub fn oracle_costs(case: &Case, map: &VirtualCoordinateMap) -> Vec<(f64, f64)> {
    let st = &case.state;
    let mut t_la: Vec<f64> = st.latest_arrival_s.iter().map(|t| t - st.clock_s).collect();
    for (b, p) in st.pending_arrival_s.iter().enumerate() {
        if let Some(p) = p {
            let i = st.target_stop[b] - 1;
            t_la[i] = t_la[i].max(p - st.clock_s);
        }
    }
    let root = Node { target: st.target_stop.clone(), t_d: st.time_to_activation_s.clone(), t_la };
    let mut oracle = Oracle { scenario: &case.scenario, map, gamma: case.gamma, target_headway: 0.0 };
    oracle.target_headway = oracle.headways(&root).iter().sum::<f64>() / st.n_buses() as f64;
    let mut per_first: Vec<(f64, f64)> = Vec::new();
    for (acts, costs) in oracle.tuples(&root, Some(st.active_bus), case.stages) {
        let v = oracle.discounted(&costs);
        match per_first.iter_mut().find(|(a1, _)| *a1 == acts[0]) {
            Some(entry) => entry.1 = entry.1.min(v),
            None => per_first.push((acts[0], v)),
        }
    }
    per_first
}
