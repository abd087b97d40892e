//! Built-in test cases.
//!
//! TC1-TC5 share one cut-in timeline: the cutter starts in lane -2 slightly
//! ahead of the ego and `LEAD_OVERSPEED` faster, pulls ahead, matches the
//! ego's speed, changes into the ego's lane and brakes hard the moment the
//! lane change completes. Its start position is solved so that the
//! bumper-to-bumper gap at that moment equals the calibrated cut-in gap.

use crate::function::{FunctionId, TcId};
use crate::protocol::ControlRequest;
use crate::sim::{step_world, RoadSpec, VehicleState, DT, VEHICLE_LENGTH};

use super::calibrate::solve_cutin_parameters;
use super::{apply_event, Scenario, ScenarioError, ScriptAction, ScriptCursor, ScriptEvent, DEFAULT_HORIZON};

pub const EGO_START_S: f64 = 100.0;
const EGO_LANE: i32 = -3;
const TTB: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutinTimeline {
    /// Cutter starts matching the ego's speed.
    pub match_speed_at: f64,
    /// Cutter holds the ego's speed.
    pub hold_at: f64,
    pub lane_change_at: f64,
    /// Lane change complete; the cutter brakes.
    pub cut_in_at: f64,
}

pub const CUTIN_TIMELINE: CutinTimeline = CutinTimeline {
    match_speed_at: 2.0,
    hold_at: 3.0,
    lane_change_at: 4.0,
    cut_in_at: 6.0,
};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TcOverrides {
    pub ego_speed: Option<f64>,
    pub ttb: Option<f64>,
    pub horizon: Option<f64>,
}

fn kph(v: f64) -> f64 {
    v / 3.6
}

fn event(t_fire: f64, agent: &str, action: ScriptAction) -> ScriptEvent {
    ScriptEvent {
        t_fire,
        agent: agent.to_owned(),
        action,
    }
}

/// Ego plus cutter with a calibrated cut-in. Returns placements, script and
/// the ego's position at the cut-in instant.
fn cut_in(ego_speed: f64, ttb: f64) -> Result<(Vec<VehicleState>, Vec<ScriptEvent>), ScenarioError> {
    let params = solve_cutin_parameters(ego_speed, ttb)?;
    let tl = CUTIN_TIMELINE;
    let match_decel = -params.lead_overspeed / (tl.hold_at - tl.match_speed_at);
    let script = vec![
        event(tl.match_speed_at, "cutter", ScriptAction::SetAccel(match_decel)),
        event(tl.hold_at, "cutter", ScriptAction::Hold),
        event(tl.lane_change_at, "cutter", ScriptAction::LaneChange(-1)),
        event(tl.cut_in_at, "cutter", ScriptAction::SetAccel(params.lead_decel)),
    ];
    let ego = VehicleState::new("ego", EGO_START_S, EGO_LANE, ego_speed);
    let cutter = VehicleState::new("cutter", EGO_START_S, EGO_LANE + 1, ego_speed + params.lead_overspeed);

    // Dry-run the script up to the cut-in and shift the cutter so the gap
    // comes out exactly.
    let probe = Scenario::new(
        "probe",
        RoadSpec::highway(),
        vec![ego.clone(), cutter.clone()],
        script.clone(),
        DEFAULT_HORIZON,
        vec![],
    )?;
    let mut world = probe.initial_world();
    let mut cursor = ScriptCursor::new();
    let cut_tick = (tl.cut_in_at / DT).round() as u64;
    while world.tick < cut_tick {
        for ev in cursor.advance(&probe, world.t()) {
            apply_event(&mut world, ev);
        }
        world = step_world(&world, &ControlRequest::default(), DT);
    }
    let gap_now = world.vehicles[1].s - world.vehicles[0].s - VEHICLE_LENGTH;
    let mut cutter = cutter;
    cutter.s += params.gap_at_cutin - gap_now;
    Ok((vec![ego, cutter], script))
}

/// Builds one of the built-in test cases.
pub fn instantiate_tc(tc: TcId, overrides: &TcOverrides) -> Result<Scenario, ScenarioError> {
    use FunctionId::*;
    let ttb = overrides.ttb.unwrap_or(TTB);
    let road = RoadSpec::highway();
    let (placements, script, horizon, functions) = match tc {
        TcId::Tc1 | TcId::Tc2 | TcId::Tc3 => {
            let default_speed = match tc {
                TcId::Tc1 => kph(120.0),
                TcId::Tc2 => kph(80.0),
                _ => kph(40.0),
            };
            let (p, s) = cut_in(overrides.ego_speed.unwrap_or(default_speed), ttb)?;
            (p, s, DEFAULT_HORIZON, vec![F3, F4])
        }
        TcId::Tc4 | TcId::Tc5 => {
            let v = overrides.ego_speed.unwrap_or(kph(120.0));
            let (mut p, s) = cut_in(v, ttb)?;
            let blocker = if tc == TcId::Tc4 {
                // Stationary, just ahead of where the ego is at the cut-in;
                // clear of the cutter, which has left lane -2 by then.
                let ego_at_cut_in = EGO_START_S + v * CUTIN_TIMELINE.cut_in_at;
                VehicleState::new("blocker", ego_at_cut_in + 8.0, EGO_LANE + 1, 0.0)
            } else {
                // Alongside the ego at the ego's speed.
                VehicleState::new("blocker", EGO_START_S - 4.0, EGO_LANE + 1, v)
            };
            p.push(blocker);
            (p, s, DEFAULT_HORIZON, vec![F4])
        }
        TcId::Tc6 => {
            let v = overrides.ego_speed.unwrap_or(kph(80.0));
            (
                vec![VehicleState::new("ego", EGO_START_S, EGO_LANE, v)],
                vec![],
                DEFAULT_HORIZON,
                vec![F3, F4],
            )
        }
        TcId::Tc7 => {
            let v = overrides.ego_speed.unwrap_or(kph(80.0));
            let mut oncoming = VehicleState::new("oncoming", EGO_START_S + 500.0, -1, kph(80.0));
            oncoming.oncoming = true;
            (
                vec![VehicleState::new("ego", EGO_START_S, EGO_LANE, v), oncoming],
                vec![],
                DEFAULT_HORIZON,
                vec![F3, F4],
            )
        }
        TcId::S1 => {
            let mut ego = VehicleState::new("ego", EGO_START_S, EGO_LANE, overrides.ego_speed.unwrap_or(5.0));
            ego.script_accel = 2.0;
            (vec![ego], vec![], 10.0, vec![F1])
        }
        TcId::S2 => {
            let v = overrides.ego_speed.unwrap_or(kph(80.0));
            (
                vec![
                    VehicleState::new("ego", EGO_START_S, -2, v),
                    VehicleState::new("slow_a", EGO_START_S + 60.0, -2, 12.0),
                    VehicleState::new("slow_b", EGO_START_S + 150.0, -3, 12.0),
                ],
                vec![],
                20.0,
                vec![F2],
            )
        }
    };
    Scenario::new(
        tc.name(),
        road,
        placements,
        script,
        overrides.horizon.unwrap_or(horizon),
        functions,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::detect_collision;

    #[test]
    fn tc2_ego_speed() {
        let sc = instantiate_tc(TcId::Tc2, &TcOverrides::default()).unwrap();
        assert!((sc.placements[0].speed - 22.22).abs() < 0.01);
    }

    #[test]
    fn tc6_is_ego_only() {
        let sc = instantiate_tc(TcId::Tc6, &TcOverrides::default()).unwrap();
        assert_eq!(sc.placements.len(), 1);
    }

    #[test]
    fn s1_crosses_threshold_at_tick_50() {
        let sc = instantiate_tc(TcId::S1, &TcOverrides::default()).unwrap();
        let mut w = sc.initial_world();
        for _ in 0..50 {
            w = step_world(&w, &ControlRequest::default(), DT);
        }
        assert!((w.ego().speed - 10.0).abs() < 1e-9);
        w = step_world(&w, &ControlRequest::default(), DT);
        assert!(w.ego().speed > 10.0);
    }

    #[test]
    fn cut_in_gap_matches_calibration() {
        for tc in [TcId::Tc1, TcId::Tc2, TcId::Tc3, TcId::Tc4, TcId::Tc5] {
            let sc = instantiate_tc(tc, &TcOverrides::default()).unwrap();
            let mut w = sc.initial_world();
            let mut cursor = ScriptCursor::new();
            while w.tick < 120 {
                for ev in cursor.advance(&sc, w.t()) {
                    apply_event(&mut w, ev);
                }
                assert!(
                    detect_collision(&w).is_empty(),
                    "{tc} collided before cut-in at tick {}",
                    w.tick
                );
                w = step_world(&w, &ControlRequest::default(), DT);
            }
            let cutter = w.vehicle("cutter").unwrap();
            assert_eq!(cutter.lane_id, -3);
            assert!(cutter.lane_change.is_none());
            assert!((cutter.speed - sc.placements[0].speed).abs() < 1e-9);
            let gap = cutter.s - w.ego().s - VEHICLE_LENGTH;
            assert!((gap - 2.175).abs() < 1e-6, "{tc}: {gap}");
        }
    }

    #[test]
    fn blockers_near_ego_at_cut_in() {
        for tc in [TcId::Tc4, TcId::Tc5] {
            let sc = instantiate_tc(tc, &TcOverrides::default()).unwrap();
            let mut w = sc.initial_world();
            let mut cursor = ScriptCursor::new();
            while w.tick < 120 {
                for ev in cursor.advance(&sc, w.t()) {
                    apply_event(&mut w, ev);
                }
                w = step_world(&w, &ControlRequest::default(), DT);
            }
            let blocker = w.vehicle("blocker").unwrap();
            assert_eq!(blocker.lane_id, -2);
            assert!((blocker.s - w.ego().s).abs() <= 10.0, "{tc}");
        }
        let tc4 = instantiate_tc(TcId::Tc4, &TcOverrides::default()).unwrap();
        assert_eq!(tc4.placements[2].speed, 0.0);
    }
}
