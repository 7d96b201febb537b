use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::scenario::RoadSegment;

/// Shortest travel time a draw may produce, as a fraction of the mean.
pub const MIN_TRAVEL_FRAC: f64 = 0.1;

/// Mean traversal time of a road segment at cruise speed.
pub fn expected_travel_time(segment: &RoadSegment, cruise_speed_mps: f64) -> f64 {
    segment.length_m / cruise_speed_mps
}

/// One noisy traversal time: mean plus a centred normal draw, clamped below
/// at [`MIN_TRAVEL_FRAC`] of the mean.
pub fn sample_travel_time<R: Rng + ?Sized>(segment: &RoadSegment, cruise_speed_mps: f64, rng: &mut R) -> f64 {
    let mean = expected_travel_time(segment, cruise_speed_mps);
    if segment.noise_sd_s == 0.0 {
        return mean;
    }
    let noise = Normal::new(0.0, segment.noise_sd_s).expect("validated non-negative sd").sample(rng);
    (mean + noise).max(MIN_TRAVEL_FRAC * mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn seg(length_m: f64, noise_sd_s: f64) -> RoadSegment {
        RoadSegment { id: 1, length_m, noise_sd_s }
    }

    #[test]
    fn zero_noise_is_exact() {
        let mut rng = stream(1, 0, Purpose::TravelNoise, 0);
        for _ in 0..100 {
            assert_eq!(sample_travel_time(&seg(500.0, 0.0), 10.0, &mut rng), 50.0);
        }
    }

    #[test]
    fn moments_match_the_normal_model() {
        let mut rng = stream(2, 0, Purpose::TravelNoise, 0);
        let s = seg(600.0, 3.0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_travel_time(&s, 10.0, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 60.0).abs() < 0.1, "mean {mean}");
        assert!((var.sqrt() - 3.0).abs() < 0.05 * 3.0, "sd {}", var.sqrt());
    }

    #[test]
    fn half_kilometre_segment() {
        let mut rng = stream(3, 0, Purpose::TravelNoise, 0);
        let s = seg(500.0, 2.5);
        let n = 20_000;
        let mean = (0..n).map(|_| sample_travel_time(&s, 10.0, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 50.0).abs() < 0.1);
    }

    #[test]
    fn clamp_keeps_draws_positive() {
        let mut rng = stream(4, 0, Purpose::TravelNoise, 0);
        let s = seg(100.0, 50.0);
        for _ in 0..10_000 {
            assert!(sample_travel_time(&s, 10.0, &mut rng) >= 1.0);
        }
    }
}
