#![allow(dead_code)]

pub mod oracle;

use std::fmt::Write as _;

use holdsim::scenario::{builtin_fixture, load_scenario, Scenario};

pub fn fixture() -> Scenario {
    builtin_fixture("he2019").unwrap()
}

/// A small loop without signals: `n_stops` stops joined by 400 m roads,
/// one bus per entry of `initial_stops`, and per-stop holding sets
/// (`[0.0]` marks a non-control stop).
pub fn small_line(rate_per_min: f64, initial_stops: &[usize], sets: &[Vec<f64>]) -> Scenario {
    let n = sets.len();
    let mut t = String::from("[line]\ncruise_speed_kmh = 36.0\nobservation_period_s = 3600.0\n\n");
    for (i, set) in sets.iter().enumerate() {
        let id = i + 1;
        let controllable = set.iter().any(|&a| a > 0.0);
        let _ = write!(
            t,
            "[[stops]]\nid = {id}\nrate_per_min = {rate_per_min:?}\nseries = 1\ncontrollable = {controllable}\naction_set = {id}\n\n"
        );
        let _ = write!(t, "[[action_sets]]\nid = {id}\nholding_times_s = {set:?}\n\n");
        let _ = write!(t, "[[road_segments]]\nid = {id}\nlength_m = 400.0\n\n");
        let _ = write!(
            t,
            "[[bus_line_segments]]\nid = {id}\nfrom_stop = {id}\nelements = [{{ kind = \"road\", id = {id} }}]\n\n"
        );
    }
    for (i, &s) in initial_stops.iter().enumerate() {
        let _ = write!(t, "[[buses]]\nid = {}\ncapacity = 60\ninitial_stop = {s}\nrtba_s = {}\n\n", i + 1, 5 * i);
    }
    let p = vec![1.0 / (n - 1) as f64; n - 1];
    let _ = write!(t, "[[series]]\nid = 1\nprobabilities = {p:?}\n");
    load_scenario(&t).unwrap_or_else(|e| panic!("{e}\n{t}"))
}
