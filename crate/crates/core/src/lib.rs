//! Simulation and holding control of a circular high-frequency bus line.
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`] describes the line and loads it from TOML or a fixture;
//! * [`engine`] runs the discrete-event simulation and emits the state at
//!   every critical time point (a bus about to leave a stop);
//! * [`headway`] measures headways on the expected-time coordinate;
//! * [`control`] holds the strategies, including the multi-stage look-ahead;
//! * [`metrics`] turns replication streams into summary statistics;
//! * [`experiment`] runs seeded batches and the canned sweeps.

pub mod control;
pub mod engine;
pub mod experiment;
pub mod headway;
pub mod metrics;
pub mod rng;
pub mod scenario;

pub use control::{Strategy, StrategySpec};
pub use engine::{run_replication, SystemState};
pub use scenario::{builtin_fixture, load_scenario, Scenario};
