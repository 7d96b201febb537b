use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Passenger {
    pub id: usize,
    pub origin_stop: usize,
    pub destination_stop: usize,
    pub created_at_s: f64,
    pub boarded_at_s: Option<f64>,
    pub alighted_at_s: Option<f64>,
}

impl Passenger {
    pub fn waiting_s(&self) -> Option<f64> {
        self.boarded_at_s.map(|b| b - self.created_at_s)
    }

    pub fn riding_s(&self) -> Option<f64> {
        Some(self.alighted_at_s? - self.boarded_at_s?)
    }
}

/// Poisson arrivals at `stop_id` over `[t1, t2)`, each with a destination
/// drawn from the stop's destination series (n-th stop downstream with
/// probability p_n, wrapping around the loop). Ids start at `first_id`.
pub fn generate_passengers<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    scenario: &Scenario,
    stop_id: usize,
    window: (f64, f64),
    first_id: usize,
    arrivals: &mut R1,
    destinations: &mut R2,
) -> Vec<Passenger> {
    let (t1, t2) = window;
    assert!(t1 < t2, "empty generation window");
    let stop = scenario.stop(stop_id);
    let rate_per_s = stop.arrival_rate / 60.0;
    if rate_per_s <= 0.0 {
        return Vec::new();
    }
    let gaps = Exp::new(rate_per_s).expect("positive rate");
    let series = scenario.series(stop.destination_series_id);
    let offsets = WeightedIndex::new(&series.probabilities).expect("validated series");
    let n = scenario.n_stops();

    let mut out = Vec::new();
    let mut t = t1;
    loop {
        t += gaps.sample(arrivals);
        if t >= t2 {
            break;
        }
        let offset = offsets.sample(destinations) + 1;
        out.push(Passenger {
            id: first_id + out.len(),
            origin_stop: stop_id,
            destination_stop: (stop_id - 1 + offset) % n + 1,
            created_at_s: t,
            boarded_at_s: None,
            alighted_at_s: None,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use crate::scenario::builtin_fixture;

    #[test]
    fn zero_rate_is_empty() {
        let mut doc = builtin_fixture("he2019").unwrap().to_doc();
        doc.stops[0].rate_per_min = 0.0;
        let s = Scenario::from_doc(doc).unwrap();
        let mut a = stream(1, 0, Purpose::Arrivals, 0);
        let mut d = stream(1, 0, Purpose::Destinations, 0);
        assert!(generate_passengers(&s, 1, (0.0, 14_400.0), 0, &mut a, &mut d).is_empty());
    }

    #[test]
    fn poisson_mean_count() {
        let s = builtin_fixture("he2019").unwrap();
        // stop 3 has 2 pax/min
        let reps = 1000;
        let mut total = 0;
        for r in 0..reps {
            let mut a = stream(11, r, Purpose::Arrivals, 3);
            let mut d = stream(11, r, Purpose::Destinations, 3);
            total += generate_passengers(&s, 3, (0.0, 3600.0), 0, &mut a, &mut d).len();
        }
        let mean = total as f64 / reps as f64;
        assert!((mean - 120.0).abs() < 0.03 * 120.0, "mean {mean}");
    }

    #[test]
    fn destination_distribution_follows_series() {
        let s = builtin_fixture("he2019").unwrap();
        let mut a = stream(5, 0, Purpose::Arrivals, 1);
        let mut d = stream(5, 0, Purpose::Destinations, 1);
        // stop 1 uses series 1; 4 pax/min over a long window
        let pax = generate_passengers(&s, 1, (0.0, 3.0e6), 0, &mut a, &mut d);
        let n = pax.len() as f64;
        let seventh = pax.iter().filter(|p| p.destination_stop == 8).count() as f64 / n;
        assert!((seventh - 0.1351).abs() < 0.005, "p7 {seventh}");
        assert!(pax.iter().all(|p| p.destination_stop != 1 && p.destination_stop <= 14));
        assert!(pax.windows(2).all(|w| w[0].created_at_s < w[1].created_at_s));
        assert!(pax.iter().enumerate().all(|(i, p)| p.id == i));
    }

    #[test]
    fn destinations_wrap_around_the_loop() {
        let s = builtin_fixture("he2019").unwrap();
        let mut a = stream(6, 0, Purpose::Arrivals, 30);
        let mut d = stream(6, 0, Purpose::Destinations, 30);
        let pax = generate_passengers(&s, 30, (0.0, 36_000.0), 0, &mut a, &mut d);
        assert!(pax.iter().all(|p| (1..=13).contains(&p.destination_stop)));
    }
}
