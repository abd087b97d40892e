//! Declarative driving scenarios: initial placements plus a timed script for
//! the non-ego agents.

mod calibrate;
mod catalog;
mod format;

pub use calibrate::{brake_onset_is_safe, max_safe_onset_ticks, solve_cutin_parameters, CutinParams};
pub use catalog::{instantiate_tc, CutinTimeline, TcOverrides, CUTIN_TIMELINE, EGO_START_S};
pub use format::{load_scenario, serialize_scenario, LoadedScenario};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function::FunctionId;
use crate::sim::{RoadSpec, SimError, VehicleState, WorldState, DT};

pub const DEFAULT_HORIZON: f64 = 30.0;
const FIRE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("scenario has no vehicles")]
    NoVehicles,
    #[error("horizon must be positive, got {0}")]
    Horizon(f64),
    #[error("no cut-in gap in (0, 200] m reaches a time-to-brake of {ttb} s at {ego_speed} m/s")]
    Infeasible { ego_speed: f64, ttb: f64 },
    #[error("invalid cut-in request: {0}")]
    InvalidCutin(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptAction {
    /// `+1` left, `-1` right.
    LaneChange(i32),
    SetAccel(f64),
    /// Keep the current speed.
    Hold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub t_fire: f64,
    pub agent: String,
    pub action: ScriptAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub road: RoadSpec,
    /// Ego first.
    pub placements: Vec<VehicleState>,
    /// Sorted by `t_fire`.
    pub script: Vec<ScriptEvent>,
    pub horizon: f64,
    pub functions: Vec<FunctionId>,
}

impl Scenario {
    /// Validates and normalizes a scenario: events are stably sorted by time
    /// and every referenced agent must exist.
    pub fn new(
        id: impl Into<String>,
        road: RoadSpec,
        placements: Vec<VehicleState>,
        mut script: Vec<ScriptEvent>,
        horizon: f64,
        functions: Vec<FunctionId>,
    ) -> Result<Self, ScenarioError> {
        if placements.is_empty() {
            return Err(ScenarioError::NoVehicles);
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ScenarioError::Horizon(horizon));
        }
        // Duplicate ids are caught here too.
        WorldState::new(placements.clone(), road.clone(), DT)?;
        for ev in &script {
            if !placements.iter().any(|p| p.id == ev.agent) {
                return Err(ScenarioError::UnknownAgent(ev.agent.clone()));
            }
        }
        script.sort_by(|a, b| a.t_fire.total_cmp(&b.t_fire));
        Ok(Self {
            id: id.into(),
            road,
            placements,
            script,
            horizon,
            functions,
        })
    }

    pub fn ego_id(&self) -> &str {
        &self.placements[0].id
    }

    pub fn initial_world(&self) -> WorldState {
        WorldState::new(self.placements.clone(), self.road.clone(), DT).expect("validated at construction")
    }

    /// Number of ticks a full-length episode runs.
    pub fn tick_count(&self, dt: f64) -> usize {
        ((self.horizon / dt) + FIRE_EPS).floor() as usize
    }
}

/// Fires script events in order as simulation time advances. Each event
/// fires exactly once.
#[derive(Debug, Clone, Default)]
pub struct ScriptCursor {
    next: usize,
}

impl ScriptCursor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Events with `t_fire <= t` that have not fired yet.
    pub fn advance<'a>(&mut self, scenario: &'a Scenario, t: f64) -> &'a [ScriptEvent] {
        let start = self.next;
        while self.next < scenario.script.len() && scenario.script[self.next].t_fire <= t + FIRE_EPS {
            self.next += 1;
        }
        &scenario.script[start..self.next]
    }
}

/// Applies a fired event to the world.
pub fn apply_event(world: &mut WorldState, event: &ScriptEvent) {
    let Some(v) = world.vehicle_mut(&event.agent) else {
        return;
    };
    match event.action {
        ScriptAction::LaneChange(dir) => v.request_lane_change(dir),
        ScriptAction::SetAccel(a) => v.script_accel = a,
        ScriptAction::Hold => v.script_accel = 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario_with_cutin_at(t: f64) -> Scenario {
        Scenario::new(
            "x",
            RoadSpec::highway(),
            vec![
                VehicleState::new("ego", 0.0, -3, 20.0),
                VehicleState::new("cutter", 10.0, -2, 20.0),
            ],
            vec![ScriptEvent {
                t_fire: t,
                agent: "cutter".into(),
                action: ScriptAction::LaneChange(-1),
            }],
            30.0,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn nothing_fires_before_first_event() {
        let sc = scenario_with_cutin_at(3.0);
        let mut cursor = ScriptCursor::new();
        assert!(cursor.advance(&sc, 2.95).is_empty());
    }

    #[test]
    fn fires_once_at_its_time() {
        let sc = scenario_with_cutin_at(3.0);
        let mut cursor = ScriptCursor::new();
        let fired = cursor.advance(&sc, 3.0);
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].action, ScriptAction::LaneChange(-1));
        assert!(cursor.advance(&sc, 3.05).is_empty());
    }

    #[test]
    fn unknown_agent_rejected() {
        let err = Scenario::new(
            "x",
            RoadSpec::highway(),
            vec![VehicleState::new("ego", 0.0, -3, 20.0)],
            vec![ScriptEvent {
                t_fire: 1.0,
                agent: "ghost".into(),
                action: ScriptAction::Hold,
            }],
            30.0,
            vec![],
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "unknown agent `ghost`");
    }

    #[test]
    fn events_sorted_on_construction() {
        let ev = |t| ScriptEvent {
            t_fire: t,
            agent: "ego".into(),
            action: ScriptAction::Hold,
        };
        let sc = Scenario::new(
            "x",
            RoadSpec::highway(),
            vec![VehicleState::new("ego", 0.0, -3, 20.0)],
            vec![ev(5.0), ev(1.0), ev(3.0)],
            30.0,
            vec![],
        )
        .unwrap();
        let times: Vec<f64> = sc.script.iter().map(|e| e.t_fire).collect();
        assert_eq!(times, vec![1.0, 3.0, 5.0]);
    }

    #[test]
    fn horizon_must_be_positive() {
        let r = Scenario::new(
            "x",
            RoadSpec::highway(),
            vec![VehicleState::new("ego", 0.0, -3, 20.0)],
            vec![],
            0.0,
            vec![],
        );
        assert_eq!(r.unwrap_err(), ScenarioError::Horizon(0.0));
    }
}
