//! Holding strategies invoked at every critical time point.

mod nsla;

use serde::Serialize;

use crate::engine::SystemState;
use crate::headway::{ExpectedModel, HeadwaySnapshot, VirtualCoordinateMap};
use crate::scenario::{Scenario, StrategyKind};

pub use nsla::{decide_nsla, roll_forward_one_level, ControlError, LookaheadState};

/// Everything a strategy may look at when choosing a holding time.
pub struct DecisionContext<'a> {
    pub scenario: &'a Scenario,
    pub state: &'a SystemState,
    /// Headways before any hold is applied.
    pub snapshot: &'a HeadwaySnapshot,
    pub map: &'a VirtualCoordinateMap,
    pub model: &'a ExpectedModel,
    /// Expected system headway H̃.
    pub esh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionRecord {
    pub time_s: f64,
    pub bus_id: usize,
    pub stop_id: usize,
    pub holding_s: f64,
    /// `(holding time, discounted cost)` for every first-level candidate.
    pub costs: Vec<(f64, f64)>,
    /// Bus ids activated along the optimal path, level 1 first.
    pub activated: Vec<usize>,
    /// Optimal discounted cost; absent when no search ran.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub holding_s: f64,
    pub record: Option<DecisionRecord>,
}

impl Decision {
    pub fn hold(holding_s: f64) -> Decision {
        Decision { holding_s, record: None }
    }
}

pub trait Strategy: Send {
    fn name(&self) -> String;

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Decision;

    /// Whether returned holding times must come from the stop's action set.
    fn uses_action_sets(&self) -> bool {
        true
    }
}

/// Always releases the bus at once.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoControl;

pub fn decide_no_control(_state: &SystemState) -> f64 {
    0.0
}

impl Strategy for NoControl {
    fn name(&self) -> String {
        "none".into()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Decision {
        Decision::hold(decide_no_control(ctx.state))
    }
}

/// Terminal station holding: at a terminal stop, a bus whose forward
/// headway is below H̃ is held for the shortfall; otherwise it leaves.
pub fn decide_tshs(stop_id: usize, forward_headway_s: f64, esh: f64, terminal_stops: &[usize]) -> f64 {
    if !terminal_stops.contains(&stop_id) || forward_headway_s >= esh {
        0.0
    } else {
        esh - forward_headway_s
    }
}

#[derive(Debug, Clone)]
pub struct Tshs {
    pub terminal_stops: Vec<usize>,
}

impl Strategy for Tshs {
    fn name(&self) -> String {
        "tshs".into()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Decision {
        let b = ctx.state.active_bus;
        let stop = ctx.state.target_stop[b];
        Decision::hold(decide_tshs(stop, ctx.snapshot.headways[b], ctx.esh, &self.terminal_stops))
    }

    fn uses_action_sets(&self) -> bool {
        false
    }
}

/// Multi-stage look-ahead holding.
#[derive(Debug, Clone)]
pub struct Nsla {
    pub stages: usize,
    pub gamma: f64,
}

impl Strategy for Nsla {
    fn name(&self) -> String {
        format!("{}sla", self.stages)
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Decision {
        let (a, record) = decide_nsla(ctx.state, self.stages, self.gamma, ctx.map, ctx.model)
            .expect("engine states satisfy the look-ahead preconditions");
        Decision { holding_s: a, record: Some(record) }
    }
}

/// Parameters naming one strategy configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub stages: usize,
    pub gamma: f64,
    pub terminal_stops: Vec<usize>,
}

impl StrategySpec {
    pub fn from_scenario(scenario: &Scenario) -> StrategySpec {
        StrategySpec {
            kind: scenario.control.strategy,
            stages: scenario.control.stages,
            gamma: scenario.control.gamma,
            terminal_stops: scenario.control.terminal_stops.clone(),
        }
    }

    pub fn build(&self) -> Box<dyn Strategy> {
        match self.kind {
            StrategyKind::None => Box::new(NoControl),
            StrategyKind::Tshs => Box::new(Tshs { terminal_stops: self.terminal_stops.clone() }),
            StrategyKind::Nsla => Box::new(Nsla { stages: self.stages, gamma: self.gamma }),
        }
    }

    /// Row label: `NoControl`, `TSHS` or `<N>SLA`.
    pub fn label(&self) -> String {
        match self.kind {
            StrategyKind::None => "NoControl".into(),
            StrategyKind::Tshs => "TSHS".into(),
            StrategyKind::Nsla => format!("{}SLA", self.stages),
        }
    }
}
