//! Summary statistics over replication streams.

use serde::Serialize;
use thiserror::Error;

use crate::engine::{Passenger, ReplicationOutput};
use crate::scenario::BunchingParams;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("stability index of an empty headway stream")]
    EmptyStream,
}

/// Sample mean and n − 1 standard deviation. The deviation is absent for
/// fewer than two values, the mean for none.
pub fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (Some(mean), Some((ss / (n - 1.0)).sqrt()))
}

/// `(c̄_H, σ_c̄)` from the per-CTP headway deviations.
pub fn stability_index(sigma_stream: &[f64]) -> Result<(f64, Option<f64>), MetricsError> {
    match mean_sd(sigma_stream) {
        (Some(m), sd) => Ok((m, sd)),
        (None, _) => Err(MetricsError::EmptyStream),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct HoldingStats {
    pub sum: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Totals over all CTPs, non-control ones contributing zeros.
pub fn holding_stats(holds: &[f64]) -> HoldingStats {
    if holds.is_empty() {
        return HoldingStats::default();
    }
    let sum: f64 = holds.iter().sum();
    HoldingStats { sum, mean: sum / holds.len() as f64, sd: mean_sd(holds).1.unwrap_or(0.0) }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PassengerStats {
    pub n: usize,
    pub w_mean: Option<f64>,
    pub w_sd: Option<f64>,
    pub r_mean: Option<f64>,
    pub r_sd: Option<f64>,
    pub tr_mean: Option<f64>,
    pub tr_sd: Option<f64>,
}

/// Waiting, riding and travel times of passengers who alighted by `horizon_s`.
pub fn passenger_stats(passengers: &[Passenger], horizon_s: f64) -> PassengerStats {
    let mut w = Vec::new();
    let mut r = Vec::new();
    let mut tr = Vec::new();
    for p in passengers {
        let (Some(b), Some(a)) = (p.boarded_at_s, p.alighted_at_s) else {
            continue;
        };
        if a > horizon_s {
            continue;
        }
        let wait = b - p.created_at_s;
        let ride = a - b;
        w.push(wait);
        r.push(ride);
        tr.push(wait + ride);
    }
    let (w_mean, w_sd) = mean_sd(&w);
    let (r_mean, r_sd) = mean_sd(&r);
    let (tr_mean, tr_sd) = mean_sd(&tr);
    PassengerStats { n: w.len(), w_mean, w_sd, r_mean, r_sd, tr_mean, tr_sd }
}

/// True iff the smallest headway stays below `threshold_frac · esh` for
/// `window_ctps` consecutive snapshots.
pub fn detect_bunching(min_headways: impl IntoIterator<Item = f64>, esh: f64, params: BunchingParams) -> bool {
    let limit = params.threshold_frac * esh;
    let mut run = 0usize;
    for h in min_headways {
        if h < limit {
            run += 1;
            if run >= params.window_ctps {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationMetrics {
    pub c_h: f64,
    pub sigma_c: Option<f64>,
    pub n_t: usize,
    pub holding: HoldingStats,
    pub bunched: bool,
    pub passengers: PassengerStats,
    pub wall_s: f64,
    /// Mean wall-clock of the decisions that ran a search.
    pub decision_s_mean: Option<f64>,
}

impl ReplicationMetrics {
    pub fn from_output(out: &ReplicationOutput, bunching: BunchingParams) -> Result<Self, MetricsError> {
        let sigmas: Vec<f64> = out.ctps.iter().map(|c| c.snapshot.sigma).collect();
        let (c_h, sigma_c) = stability_index(&sigmas)?;
        let holds: Vec<f64> = out.ctps.iter().map(|c| c.holding_s).collect();
        let searched: Vec<f64> = out
            .ctps
            .iter()
            .filter(|c| c.record.as_ref().is_some_and(|r| !r.costs.is_empty()))
            .map(|c| c.decision_wall_s)
            .collect();
        Ok(ReplicationMetrics {
            c_h,
            sigma_c,
            n_t: out.ctps.len(),
            holding: holding_stats(&holds),
            bunched: detect_bunching(out.ctps.iter().map(|c| c.snapshot.min_headway()), out.esh_s, bunching),
            passengers: passenger_stats(&out.passengers, out.observation_period_s),
            wall_s: out.wall_s,
            decision_s_mean: mean_sd(&searched).0,
        })
    }
}

/// One experiment cell: per-field means over replications.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub stages: Option<usize>,
    #[serde(rename = "c_H")]
    pub c_h: f64,
    pub sigma_c: Option<f64>,
    #[serde(rename = "n_T")]
    pub n_t: f64,
    pub a_sum: f64,
    pub a_mean: f64,
    pub a_sd: f64,
    pub bunch_fraction: f64,
    #[serde(rename = "n_P")]
    pub n_p: f64,
    #[serde(rename = "W_mean")]
    pub w_mean: Option<f64>,
    #[serde(rename = "W_sd")]
    pub w_sd: Option<f64>,
    #[serde(rename = "R_mean")]
    pub r_mean: Option<f64>,
    #[serde(rename = "R_sd")]
    pub r_sd: Option<f64>,
    #[serde(rename = "Tr_mean")]
    pub tr_mean: Option<f64>,
    #[serde(rename = "Tr_sd")]
    pub tr_sd: Option<f64>,
    pub sim_s_per_rep: Option<f64>,
    pub decision_s_mean: Option<f64>,
}

pub const SUMMARY_HEADER: &str = "strategy,stages,c_H,sigma_c,n_T,a_sum,a_mean,a_sd,bunch_fraction,n_P,W_mean,W_sd,R_mean,R_sd,Tr_mean,Tr_sd,sim_s_per_rep,decision_s_mean";

fn mean_of(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn mean_present(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    mean_sd(&v).0
}

/// Averages replications. Wall-clock columns are filled only when
/// `with_timing` is set, so that summaries are reproducible byte for byte.
pub fn aggregate(label: &str, stages: Option<usize>, reps: &[ReplicationMetrics], with_timing: bool) -> SummaryRow {
    let it = || reps.iter();
    SummaryRow {
        strategy: label.to_string(),
        stages,
        c_h: mean_of(it().map(|r| r.c_h)),
        sigma_c: mean_present(it().map(|r| r.sigma_c)),
        n_t: mean_of(it().map(|r| r.n_t as f64)),
        a_sum: mean_of(it().map(|r| r.holding.sum)),
        a_mean: mean_of(it().map(|r| r.holding.mean)),
        a_sd: mean_of(it().map(|r| r.holding.sd)),
        bunch_fraction: mean_of(it().map(|r| if r.bunched { 1.0 } else { 0.0 })),
        n_p: mean_of(it().map(|r| r.passengers.n as f64)),
        w_mean: mean_present(it().map(|r| r.passengers.w_mean)),
        w_sd: mean_present(it().map(|r| r.passengers.w_sd)),
        r_mean: mean_present(it().map(|r| r.passengers.r_mean)),
        r_sd: mean_present(it().map(|r| r.passengers.r_sd)),
        tr_mean: mean_present(it().map(|r| r.passengers.tr_mean)),
        tr_sd: mean_present(it().map(|r| r.passengers.tr_sd)),
        sim_s_per_rep: with_timing.then(|| mean_of(it().map(|r| r.wall_s))),
        decision_s_mean: if with_timing { mean_present(it().map(|r| r.decision_s_mean)) } else { None },
    }
}
