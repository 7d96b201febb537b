//! Discrete-event simulation of the bus line.

pub mod demand;
pub mod dwell;
pub mod signal;
pub mod travel;

mod log;
mod world;

use serde::Serialize;

pub use demand::{generate_passengers, Passenger};
pub use dwell::dwell_time;
pub use log::{EventKind, EventLog, Location, LogRecord};
pub use signal::{expected_signal_delay, signal_delay_at};
pub use travel::sample_travel_time;
pub use world::{run_replication, Census, CtpRecord, EngineError, ReplicationOutput, World};

/// Snapshot of the line at a critical time point (CTP): the moment a bus
/// has finished boarding and alighting and is about to be released.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemState {
    pub clock_s: f64,
    /// Index (bus id − 1) of the bus whose CTP produced this snapshot.
    pub active_bus: usize,
    /// Stop each bus is dwelling at or heading to; a released bus targets
    /// the stop after the one it is leaving.
    pub target_stop: Vec<usize>,
    /// Seconds until each bus next departs from its target stop.
    pub time_to_activation_s: Vec<f64>,
    /// Absolute time of the latest bus arrival at each stop (index = stop
    /// id − 1). Stops not yet visited hold a sentinel in the past.
    pub latest_arrival_s: Vec<f64>,
    /// Predicted absolute arrival at the target stop, for buses that have
    /// not reached it yet.
    pub pending_arrival_s: Vec<Option<f64>>,
}

impl SystemState {
    pub fn n_buses(&self) -> usize {
        self.target_stop.len()
    }
}
