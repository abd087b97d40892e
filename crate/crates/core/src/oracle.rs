//! Automatic verdicts over traces: requirements R1-R4 and the per-function
//! goals.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{Terminal, Trace};
use crate::function::{FunctionId, TcId};
use crate::protocol::ChannelMask;
use crate::sandbox::StageResult;
use crate::sim::{RoadSpec, VehicleState};

/// Absorbs rounding in accumulated maneuver progress.
const PROGRESS_EPS: f64 = 1e-9;

/// Tunable goal thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GoalThresholds {
    /// F1 brakes above this speed (m/s).
    pub brake_speed: f64,
    /// Ticks allowed between the stimulus and the reaction.
    pub reaction_ticks: u64,
    /// Smallest bumper gap to the lead at the end of an ACC episode (m).
    pub min_terminal_gap: f64,
    /// On empty roads ACC may not ask for less than this share of the
    /// initial speed.
    pub commission_speed_ratio: f64,
    /// A maneuver toward a non-drivable lane counts as leaving the road
    /// beyond this progress.
    pub offroad_progress: f64,
}

impl Default for GoalThresholds {
    fn default() -> Self {
        Self {
            brake_speed: 10.0,
            reaction_ticks: 2,
            min_terminal_gap: 2.0,
            commission_speed_ratio: 0.95,
            offroad_progress: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Requirement {
    R1,
    R2,
    R3,
    R4,
}

impl Requirement {
    pub const ALL: [Requirement; 4] = [Requirement::R1, Requirement::R2, Requirement::R3, Requirement::R4];
}

impl fmt::Display for Requirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub passed: bool,
    pub evidence_tick: Option<u64>,
    pub detail: String,
}

impl CheckResult {
    pub fn pass() -> Self {
        Self {
            passed: true,
            evidence_tick: None,
            detail: String::new(),
        }
    }

    pub fn fail(tick: Option<u64>, detail: impl Into<String>) -> Self {
        Self {
            passed: false,
            evidence_tick: tick,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub tc_id: TcId,
    /// `None` marks a requirement that does not apply.
    pub requirements: BTreeMap<Requirement, Option<CheckResult>>,
    pub goal: CheckResult,
    pub overall: bool,
}

impl Verdict {
    pub fn failed_checks(&self) -> usize {
        self.requirements.values().flatten().filter(|r| !r.passed).count() + usize::from(!self.goal.passed)
    }

    pub fn requirement(&self, r: Requirement) -> Option<&CheckResult> {
        self.requirements.get(&r).and_then(|c| c.as_ref())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("{tc} is not a test case of {function}")]
    Pairing { function: FunctionId, tc: TcId },
}

/// Evaluation stage of a candidate, worst first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStage {
    NonCompilable,
    NonExecutable,
    ExecutedFailed,
    Passed,
}

impl VerdictStage {
    pub const ALL: [VerdictStage; 4] = [
        VerdictStage::Passed,
        VerdictStage::ExecutedFailed,
        VerdictStage::NonExecutable,
        VerdictStage::NonCompilable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VerdictStage::NonCompilable => "non_compilable",
            VerdictStage::NonExecutable => "non_executable",
            VerdictStage::ExecutedFailed => "executed_failed",
            VerdictStage::Passed => "passed",
        }
    }
}

impl fmt::Display for VerdictStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Time to collision with `lead`, or `None` when the gap is not closing.
/// Footprints already touching give zero.
pub fn compute_ttc(ego: &VehicleState, lead: &VehicleState) -> Option<f64> {
    let closing = ego.velocity() - lead.velocity();
    if closing.is_nan() || closing <= 0.0 {
        return None;
    }
    let gap = (lead.s - ego.s) - (ego.length + lead.length) / 2.0;
    Some(gap.max(0.0) / closing)
}

/// Nearest vehicle ahead of the ego whose footprint is laterally within
/// the ego's current lane.
pub fn lead_vehicle<'a>(vehicles: &'a [VehicleState], road: &RoadSpec) -> Option<&'a VehicleState> {
    let ego = vehicles.first()?;
    let lane = road.nearest_lane(ego.lateral_position(road));
    vehicles[1..]
        .iter()
        .filter(|v| v.s > ego.s && road.nearest_lane(v.lateral_position(road)) == lane)
        .min_by(|a, b| a.s.total_cmp(&b.s))
}

fn last_tick(trace: &Trace) -> Option<u64> {
    trace.snapshots.last().map(|s| s.tick)
}

pub fn check_r1(trace: &Trace) -> CheckResult {
    match &trace.terminal {
        Terminal::ProtocolError { detail, .. } => {
            CheckResult::fail(last_tick(trace), format!("protocol error: {detail}"))
        }
        Terminal::HandshakeFailed { detail, .. } => CheckResult::fail(None, format!("handshake failed: {detail}")),
        _ => CheckResult::pass(),
    }
}

pub fn check_r2(trace: &Trace, mask: &ChannelMask) -> CheckResult {
    for snap in &trace.snapshots {
        let extra = mask.violations(&snap.touched);
        if !extra.is_empty() {
            let names: Vec<&str> = extra.iter().map(|c| c.name()).collect();
            return CheckResult::fail(Some(snap.tick), format!("drove {} outside its mask", names.join(", ")));
        }
    }
    CheckResult::pass()
}

pub fn check_r3(trace: &Trace, road: &RoadSpec, thresholds: &GoalThresholds) -> CheckResult {
    for snap in &trace.snapshots {
        let ego = snap.ego();
        if !road.is_drivable(ego.lane_id) {
            return CheckResult::fail(Some(snap.tick), format!("ego in non-drivable lane {}", ego.lane_id));
        }
        if let Some(lc) = &ego.lane_change {
            if !road.is_drivable(lc.target_lane) && lc.progress > thresholds.offroad_progress + PROGRESS_EPS {
                return CheckResult::fail(
                    Some(snap.tick),
                    format!("ego past midpoint toward non-drivable lane {}", lc.target_lane),
                );
            }
        }
    }
    CheckResult::pass()
}

/// `None` when collision avoidance is not demanded from `function`.
pub fn check_r4(trace: &Trace, function: FunctionId) -> Option<CheckResult> {
    if !function.requires_collision_avoidance() {
        return None;
    }
    Some(match &trace.terminal {
        Terminal::Collision { pairs }
            if pairs
                .iter()
                .any(|(a, b)| *a == trace.header.ego_id || *b == trace.header.ego_id) =>
        {
            let other = pairs
                .iter()
                .find_map(|(a, b)| {
                    if *a == trace.header.ego_id {
                        Some(b)
                    } else if *b == trace.header.ego_id {
                        Some(a)
                    } else {
                        None
                    }
                })
                .expect("checked above");
            CheckResult::fail(last_tick(trace), format!("ego collided with {other}"))
        }
        _ => CheckResult::pass(),
    })
}

/// Every non-zero lane request as (tick, direction).
pub fn lane_requests(trace: &Trace) -> Vec<(u64, i32)> {
    trace
        .snapshots
        .iter()
        .filter_map(|s| {
            s.request
                .as_ref()
                .filter(|r| r.switch_lane != 0)
                .map(|r| (s.tick, r.switch_lane))
        })
        .collect()
}

fn final_lane(trace: &Trace) -> Option<i32> {
    let ego = trace.snapshots.last()?.ego();
    Some(ego.lane_change.as_ref().map_or(ego.lane_id, |lc| lc.final_lane()))
}

pub fn check_goal(
    trace: &Trace,
    function: FunctionId,
    tc: TcId,
    th: &GoalThresholds,
) -> Result<CheckResult, OracleError> {
    if !function.test_cases().contains(&tc) {
        return Err(OracleError::Pairing { function, tc });
    }
    if trace.terminal.is_abnormal() {
        return Ok(CheckResult::fail(
            last_tick(trace),
            format!("episode ended early: {}", trace.terminal),
        ));
    }
    let collided = matches!(trace.terminal, Terminal::Collision { .. });
    Ok(match function {
        FunctionId::F1 => goal_f1(trace, th),
        FunctionId::F2 => goal_f2(trace, collided),
        FunctionId::F3 if tc.has_cut_in() => {
            if collided {
                return Ok(CheckResult::fail(last_tick(trace), "collided with the vehicle ahead"));
            }
            let last = trace.snapshots.last().expect("completed episode has snapshots");
            match lead_vehicle(&last.vehicles, &trace.header.road) {
                Some(lead) => {
                    let gap = lead.s - last.ego().s - (lead.length + last.ego().length) / 2.0;
                    if gap < th.min_terminal_gap {
                        CheckResult::fail(
                            Some(last.tick),
                            format!("final gap {gap:.3} m below {} m", th.min_terminal_gap),
                        )
                    } else {
                        CheckResult::pass()
                    }
                }
                None => CheckResult::pass(),
            }
        }
        FunctionId::F3 => {
            let v0 = trace.snapshots.first().map_or(0.0, |s| s.ego().speed);
            let floor = th.commission_speed_ratio * v0;
            trace
                .snapshots
                .iter()
                .find_map(|s| {
                    let ts = s.request.as_ref()?.target_speed?;
                    (ts < floor)
                        .then(|| CheckResult::fail(Some(s.tick), format!("target speed {ts:.3} m/s on a clear road")))
                })
                .unwrap_or_else(CheckResult::pass)
        }
        FunctionId::F4 => {
            let requests = lane_requests(trace);
            let expected = match tc {
                TcId::Tc1 | TcId::Tc2 | TcId::Tc3 => Some(1),
                TcId::Tc4 | TcId::Tc5 => Some(-1),
                _ => None,
            };
            match expected {
                None => match requests.first() {
                    Some(&(tick, dir)) => CheckResult::fail(Some(tick), format!("lane change {dir:+} on a clear road")),
                    None => CheckResult::pass(),
                },
                Some(dir) => {
                    let start = trace.snapshots.first().map_or(0, |s| s.ego().lane_id);
                    if requests.is_empty() {
                        CheckResult::fail(last_tick(trace), "no evasive lane change")
                    } else if requests.len() > 1 {
                        CheckResult::fail(
                            Some(requests[1].0),
                            format!("{} lane requests for one stimulus", requests.len()),
                        )
                    } else if requests[0].1 != dir {
                        CheckResult::fail(
                            Some(requests[0].0),
                            format!("evaded {:+}, expected {dir:+}", requests[0].1),
                        )
                    } else if collided {
                        CheckResult::fail(last_tick(trace), "collided despite evading")
                    } else if final_lane(trace) != Some(start + dir) {
                        CheckResult::fail(last_tick(trace), "evasive lane change did not complete")
                    } else {
                        CheckResult::pass()
                    }
                }
            }
        }
    })
}

fn goal_f1(trace: &Trace, th: &GoalThresholds) -> CheckResult {
    let mut onset = None;
    let mut braked_in_time = false;
    for s in &trace.snapshots {
        let Some(req) = &s.request else { continue };
        let v = s.ego().speed;
        if req.brake && v <= th.brake_speed {
            return CheckResult::fail(Some(s.tick), format!("braked at {v:.3} m/s"));
        }
        if onset.is_none() && v > th.brake_speed {
            onset = Some(s.tick);
        }
        if let Some(k) = onset {
            if req.brake && s.tick <= k + th.reaction_ticks {
                braked_in_time = true;
            }
        }
    }
    match onset {
        None => CheckResult::fail(last_tick(trace), "speed never exceeded the threshold"),
        Some(_) if braked_in_time => CheckResult::pass(),
        Some(k) => CheckResult::fail(Some(k), "no braking within the reaction window"),
    }
}

fn goal_f2(trace: &Trace, collided: bool) -> CheckResult {
    let road = &trace.header.road;
    let mut valid = 0;
    for s in &trace.snapshots {
        let Some(req) = &s.request else { continue };
        if req.switch_lane == 0 {
            continue;
        }
        let ego = s.ego();
        let shared = s.vehicles[1..].iter().any(|v| v.lane_id == ego.lane_id);
        let problem = if req.switch_lane > 0 {
            Some("lane change to the left".to_owned())
        } else if ego.lane_change.is_some() {
            Some("lane request while already changing lanes".to_owned())
        } else if !shared {
            Some("lane change with no vehicle in the lane".to_owned())
        } else if !road.is_drivable(ego.lane_id - 1) {
            Some(format!("lane change beyond lane {}", road.rightmost()))
        } else {
            None
        };
        if let Some(p) = problem {
            return CheckResult::fail(Some(s.tick), p);
        }
        valid += 1;
    }
    if collided {
        CheckResult::fail(last_tick(trace), "collision")
    } else if valid == 0 {
        CheckResult::fail(last_tick(trace), "never moved right")
    } else {
        CheckResult::pass()
    }
}

/// All applicable checks for one episode.
pub fn evaluate_trace(
    trace: &Trace,
    function: FunctionId,
    tc: TcId,
    th: &GoalThresholds,
) -> Result<Verdict, OracleError> {
    let goal = check_goal(trace, function, tc, th)?;
    let mut requirements = BTreeMap::new();
    requirements.insert(Requirement::R1, Some(check_r1(trace)));
    requirements.insert(Requirement::R2, Some(check_r2(trace, &function.mask())));
    requirements.insert(Requirement::R3, Some(check_r3(trace, &trace.header.road, th)));
    requirements.insert(Requirement::R4, check_r4(trace, function));
    let overall = goal.passed && requirements.values().flatten().all(|r| r.passed);
    Ok(Verdict {
        tc_id: tc,
        requirements,
        goal,
        overall,
    })
}

/// Episodes that never got going: failed before their second tick because
/// of the controller.
fn never_ran(trace: &Trace) -> bool {
    trace.terminal.is_abnormal() && trace.snapshots.len() < 2
}

pub fn verdict_stage(compile: &StageResult, episodes: &[(TcId, &Trace, &Verdict)]) -> VerdictStage {
    if compile.is_failure() {
        VerdictStage::NonCompilable
    } else if episodes.is_empty() || episodes.iter().all(|(_, t, _)| never_ran(t)) {
        VerdictStage::NonExecutable
    } else if episodes.iter().all(|(_, _, v)| v.overall) {
        VerdictStage::Passed
    } else {
        VerdictStage::ExecutedFailed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{passive_controller, run_closed_loop, RawController, ScriptedController};
    use crate::protocol::{ControlRequest, Observation};
    use crate::sandbox::Stage;
    use crate::scenario::{instantiate_tc, TcOverrides};

    fn run(tc: TcId, policy: impl FnMut(&Observation) -> ControlRequest) -> Trace {
        let sc = instantiate_tc(tc, &TcOverrides::default()).unwrap();
        run_closed_loop(&sc, &mut ScriptedController::new(policy))
    }

    fn compiled() -> StageResult {
        StageResult {
            stage: Stage::Compiled,
            diagnostics: String::new(),
        }
    }

    #[test]
    fn ttc_examples() {
        let ego = VehicleState::new("e", 0.0, -3, 20.0);
        let lead = VehicleState::new("l", 25.0, -3, 10.0);
        assert_eq!(compute_ttc(&ego, &lead), Some(2.0));
        let same = VehicleState::new("l", 25.0, -3, 20.0);
        assert_eq!(compute_ttc(&ego, &same), None);
        let faster = VehicleState::new("l", 25.0, -3, 30.0);
        assert_eq!(compute_ttc(&ego, &faster), None);
    }

    #[test]
    fn f1_brake_when_fast() {
        let th = GoalThresholds::default();
        let good = run(TcId::S1, |o| ControlRequest {
            brake: o.ego.speed > 10.0,
            ..Default::default()
        });
        let v = evaluate_trace(&good, FunctionId::F1, TcId::S1, &th).unwrap();
        assert!(v.overall, "{v:?}");
        assert!(v.requirement(Requirement::R4).is_none());

        let early = run(TcId::S1, |o| ControlRequest {
            brake: o.ego.speed > 9.0,
            ..Default::default()
        });
        assert!(!check_goal(&early, FunctionId::F1, TcId::S1, &th).unwrap().passed);

        let reverse = run(TcId::S1, |o| ControlRequest {
            target_speed: (o.ego.speed > 10.0).then_some(-o.ego.speed),
            ..Default::default()
        });
        let v = evaluate_trace(&reverse, FunctionId::F1, TcId::S1, &th).unwrap();
        assert!(!v.requirement(Requirement::R2).unwrap().passed);
    }

    #[test]
    fn passive_collides_in_cut_in_and_fails_r4() {
        let th = GoalThresholds::default();
        for tc in [TcId::Tc1, TcId::Tc2, TcId::Tc3] {
            let trace = run(tc, |_| ControlRequest::default());
            let v = evaluate_trace(&trace, FunctionId::F3, tc, &th).unwrap();
            assert!(!v.requirement(Requirement::R4).unwrap().passed);
            assert!(!v.overall);
        }
    }

    #[test]
    fn commission_on_empty_road() {
        let th = GoalThresholds::default();
        let trace = run(TcId::Tc6, |o| ControlRequest {
            switch_lane: i32::from(o.t == 1.0),
            ..Default::default()
        });
        let goal = check_goal(&trace, FunctionId::F4, TcId::Tc6, &th).unwrap();
        assert!(!goal.passed);
        assert_eq!(goal.evidence_tick, Some(20));
        let quiet = run(TcId::Tc6, |_| ControlRequest::default());
        assert!(check_goal(&quiet, FunctionId::F4, TcId::Tc6, &th).unwrap().passed);
        assert!(check_goal(&quiet, FunctionId::F3, TcId::Tc6, &th).unwrap().passed);
    }

    #[test]
    fn unknown_pairing() {
        let trace = run(TcId::Tc6, |_| ControlRequest::default());
        assert_eq!(
            check_goal(&trace, FunctionId::F1, TcId::Tc6, &GoalThresholds::default()),
            Err(OracleError::Pairing {
                function: FunctionId::F1,
                tc: TcId::Tc6
            })
        );
    }

    #[test]
    fn r1_on_protocol_error() {
        let sc = instantiate_tc(TcId::Tc6, &TcOverrides::default()).unwrap();
        let mut n = 0;
        let trace = run_closed_loop(
            &sc,
            &mut RawController::new(move |_: &str| {
                n += 1;
                Ok(if n == 8 {
                    "{\"switch_lane\":2}".into()
                } else {
                    "{}".into()
                })
            }),
        );
        let r1 = check_r1(&trace);
        assert!(!r1.passed);
        assert_eq!(r1.evidence_tick, Some(7));
        let hs = Trace::handshake_failed(&sc, "timeout", "");
        assert!(!check_r1(&hs).passed);
    }

    #[test]
    fn r3_off_road() {
        let th = GoalThresholds::default();
        // Two right requests from -3 head for -5.
        let trace = run(TcId::S2, |o| ControlRequest {
            switch_lane: if o.t < 0.075 { -1 } else { 0 },
            ..Default::default()
        });
        // From -2 two steps end in -4, still on the road.
        assert!(check_r3(&trace, &trace.header.road, &th).passed);
        let trace = run(TcId::Tc6, |o| ControlRequest {
            switch_lane: if o.t < 0.075 { -1 } else { 0 },
            ..Default::default()
        });
        let r3 = check_r3(&trace, &trace.header.road, &th);
        assert!(!r3.passed);
        // Second leg starts at tick 40 and passes its midpoint after 21 more.
        assert_eq!(r3.evidence_tick, Some(61));
    }

    #[test]
    fn stages() {
        let th = GoalThresholds::default();
        let sc = instantiate_tc(TcId::Tc6, &TcOverrides::default()).unwrap();
        let good = run_closed_loop(&sc, &mut passive_controller());
        let vg = evaluate_trace(&good, FunctionId::F3, TcId::Tc6, &th).unwrap();
        let crash = run_closed_loop(
            &sc,
            &mut RawController::new(|_: &str| {
                Err(crate::episode::LinkError::Crash {
                    exit: Some(1),
                    stderr_tail: String::new(),
                })
            }),
        );
        let vc = evaluate_trace(&crash, FunctionId::F3, TcId::Tc6, &th).unwrap();
        let failed = StageResult {
            stage: Stage::CompileFailed,
            diagnostics: "x".into(),
        };
        assert_eq!(
            verdict_stage(&failed, &[(TcId::Tc6, &good, &vg)]),
            VerdictStage::NonCompilable
        );
        assert_eq!(
            verdict_stage(&compiled(), &[(TcId::Tc6, &good, &vg)]),
            VerdictStage::Passed
        );
        assert_eq!(
            verdict_stage(&compiled(), &[(TcId::Tc6, &crash, &vc)]),
            VerdictStage::NonExecutable
        );
        assert_eq!(
            verdict_stage(&compiled(), &[(TcId::Tc6, &good, &vg), (TcId::Tc7, &crash, &vc)]),
            VerdictStage::ExecutedFailed
        );
    }
}
