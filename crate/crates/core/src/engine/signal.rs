use crate::scenario::{Intersection, Phase};

/// Phase in force at `t` and the time left in it. The initial phase holds
/// for `initial_phase_remaining_s` from t = 0, then phases alternate with
/// their full durations.
pub fn phase_at(x: &Intersection, t: f64) -> (Phase, f64) {
    let rem0 = x.initial_phase_remaining_s;
    if t < rem0 {
        return (x.initial_phase, rem0 - t);
    }
    let (other, other_len) = match x.initial_phase {
        Phase::Red => (Phase::Green, x.green_s),
        Phase::Green => (Phase::Red, x.red_s),
    };
    let tau = (t - rem0).rem_euclid(x.cycle_s);
    if tau < other_len {
        (other, other_len - tau)
    } else {
        (x.initial_phase, x.cycle_s - tau)
    }
}

/// Actual delay of a bus reaching the stop line at `arrival_time_s`: zero on
/// green, the rest of the red phase otherwise.
pub fn signal_delay_at(x: &Intersection, arrival_time_s: f64) -> f64 {
    match phase_at(x, arrival_time_s) {
        (Phase::Green, _) => 0.0,
        (Phase::Red, remaining) => remaining,
    }
}

/// Mean delay for a uniformly timed arrival: red² / (2·cycle).
pub fn expected_signal_delay(x: &Intersection) -> f64 {
    0.5 * x.red_s * x.red_s / x.cycle_s
}
