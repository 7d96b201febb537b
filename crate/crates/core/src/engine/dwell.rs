use crate::scenario::DwellParams;

/// Door time for a stop visit: boarding and alighting run in parallel, so
/// the slower stream sets the dwell.
pub fn dwell_time(boarders: usize, alighters: usize, params: &DwellParams) -> f64 {
    (params.per_boarder_s * boarders as f64).max(params.per_alighter_s * alighters as f64)
}
