//! Rule-ordered root-cause classification of failed candidates.

use std::collections::HashMap;
use std::fmt;
use std::sync::{LazyLock, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::episode::{Terminal, Trace};
use crate::function::{FunctionId, TcId};
use crate::oracle::{GoalThresholds, Requirement, Verdict};
use crate::protocol::ControlRequest;
use crate::sandbox::StageResult;
use crate::scenario::{apply_event, instantiate_tc, ScriptCursor, TcOverrides};
use crate::sim::{detect_collision, step_world, DT};

/// Every key a candidate may read from or write to the protocol.
pub const PROTOCOL_KEYS: &[&str] = &[
    "type",
    "t",
    "ego",
    "s",
    "lane_id",
    "lat_offset",
    "speed",
    "others",
    "id",
    "road",
    "drivable_lanes",
    "lane_width",
    "brake",
    "target_speed",
    "switch_lane",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailureMode {
    NoCodeEmitted,
    SyntaxError,
    BadInterfaceAccess,
    ExtraneousCode,
    DivisionByZero,
    WrongTargetSelection,
    AlternativeStrategy,
    ExcessLaneChange,
    BadThreshold,
    NoAction,
}

impl FailureMode {
    pub const ALL: [FailureMode; 10] = [
        FailureMode::NoCodeEmitted,
        FailureMode::SyntaxError,
        FailureMode::BadInterfaceAccess,
        FailureMode::ExtraneousCode,
        FailureMode::DivisionByZero,
        FailureMode::WrongTargetSelection,
        FailureMode::AlternativeStrategy,
        FailureMode::ExcessLaneChange,
        FailureMode::BadThreshold,
        FailureMode::NoAction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FailureMode::NoCodeEmitted => "NO_CODE_EMITTED",
            FailureMode::SyntaxError => "SYNTAX_ERROR",
            FailureMode::BadInterfaceAccess => "BAD_INTERFACE_ACCESS",
            FailureMode::ExtraneousCode => "EXTRANEOUS_CODE",
            FailureMode::DivisionByZero => "DIVISION_BY_ZERO",
            FailureMode::WrongTargetSelection => "WRONG_TARGET_SELECTION",
            FailureMode::AlternativeStrategy => "ALTERNATIVE_STRATEGY",
            FailureMode::ExcessLaneChange => "EXCESS_LANE_CHANGE",
            FailureMode::BadThreshold => "BAD_THRESHOLD",
            FailureMode::NoAction => "NO_ACTION",
        }
    }
}

impl fmt::Display for FailureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureEvidence {
    pub mode: FailureMode,
    pub tc_id: Option<TcId>,
    pub tick: Option<u64>,
    pub detail: String,
}

pub struct ClassifierInput<'a> {
    pub function: FunctionId,
    pub extraction_failed: bool,
    pub compile: Option<&'a StageResult>,
    pub source: &'a str,
    pub episodes: &'a [(TcId, &'a Trace, &'a Verdict)],
    pub overrides: &'a TcOverrides,
    pub thresholds: &'a GoalThresholds,
}

static HARDCODED_CLASS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*class\s+(Vehicle|Car|EgoVehicle|Scenario|Simulation|Simulator|Road|Lane|Agent|World|TestCase)\b")
        .unwrap()
});
static SCENARIO_CONSTANT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(\b(33\.33|22\.22|11\.11)\b|(?i)esmini|openscenario|\.xosc)").unwrap());
static SUBSCRIPT_KEY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"\[\s*["']([^"'\]]+)["']\s*\](\s*=[^=])?"#).unwrap());
static GET_KEY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"\.get\(\s*["']([^"']+)["']"#).unwrap());
static DIV_ZERO: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(ZeroDivisionError|division by zero|divide by zero)").unwrap());
static FIELD_ACCESS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(KeyError|AttributeError|has no attribute|not subscriptable|string indices must be)").unwrap()
});

fn code_lines(source: &str) -> impl Iterator<Item = (usize, &str)> {
    source
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim_start().starts_with('#'))
        .map(|(i, l)| (i + 1, l))
}

fn static_extraneous(source: &str) -> Option<String> {
    code_lines(source)
        .find(|(_, l)| HARDCODED_CLASS.is_match(l) || SCENARIO_CONSTANT.is_match(l))
        .map(|(n, l)| format!("line {n}: {}", l.trim()))
}

fn static_bad_interface(source: &str) -> Option<String> {
    for (n, line) in code_lines(source) {
        for cap in SUBSCRIPT_KEY.captures_iter(line) {
            // Writing into one's own dict is not reading the interface.
            if cap.get(2).is_some() {
                continue;
            }
            if !PROTOCOL_KEYS.contains(&&cap[1]) {
                return Some(format!("line {n}: unknown field `{}`", &cap[1]));
            }
        }
        for cap in GET_KEY.captures_iter(line) {
            if !PROTOCOL_KEYS.contains(&&cap[1]) {
                return Some(format!("line {n}: unknown field `{}`", &cap[1]));
            }
        }
    }
    None
}

fn stderr_match(episodes: &[(TcId, &Trace, &Verdict)], re: &Regex) -> Option<(TcId, Option<u64>, String)> {
    episodes.iter().find_map(|(tc, trace, _)| {
        let text = trace.terminal.stderr_tail();
        let line = text.lines().find(|l| re.is_match(l))?;
        Some((*tc, trace.snapshots.last().map(|s| s.tick), line.trim().to_owned()))
    })
}

/// Brute-force latest tick at which the reference action still avoids a
/// collision in a cut-in test case. `None` when there is nothing to avoid or
/// no onset helps.
///
/// The reference action is a zero target speed held from the onset for F3
/// and a single lane change (left in TC1-3, right in TC4-5) for F4.
pub fn latest_safe_onset(function: FunctionId, tc: TcId, overrides: &TcOverrides) -> Option<u64> {
    static CACHE: LazyLock<Mutex<HashMap<String, Option<u64>>>> = LazyLock::new(Default::default);
    let key = format!("{function}/{tc}/{overrides:?}");
    if let Some(hit) = CACHE.lock().expect("onset cache").get(&key) {
        return *hit;
    }
    let result = sweep_onset(function, tc, overrides);
    CACHE.lock().expect("onset cache").insert(key, result);
    result
}

fn sweep_onset(function: FunctionId, tc: TcId, overrides: &TcOverrides) -> Option<u64> {
    if !tc.has_cut_in() || !matches!(function, FunctionId::F3 | FunctionId::F4) {
        return None;
    }
    let scenario = instantiate_tc(tc, overrides).ok()?;
    let dir = if matches!(tc, TcId::Tc4 | TcId::Tc5) { -1 } else { 1 };
    let collides = |onset: Option<u64>| -> Option<u64> {
        let mut world = scenario.initial_world();
        let mut cursor = ScriptCursor::new();
        for _ in 0..scenario.tick_count(DT) {
            for ev in cursor.advance(&scenario, world.t()) {
                apply_event(&mut world, ev);
            }
            if !detect_collision(&world).is_empty() {
                return Some(world.tick);
            }
            let mut req = ControlRequest::default();
            match (function, onset) {
                (FunctionId::F3, Some(k)) if world.tick >= k => req.target_speed = Some(0.0),
                (FunctionId::F4, Some(k)) if world.tick == k => req.switch_lane = dir,
                _ => {}
            }
            world = step_world(&world, &req, DT);
        }
        None
    };
    let impact = collides(None)?;
    (0..impact).rev().find(|&k| collides(Some(k)).is_none())
}

/// First tick at which the candidate actually asks for something, ignoring
/// keys sent with neutral values.
fn first_action(trace: &Trace, function: FunctionId) -> Option<u64> {
    trace
        .snapshots
        .iter()
        .find(|s| {
            s.request.as_ref().is_some_and(|r| match function {
                FunctionId::F1 => r.brake,
                FunctionId::F3 => r.target_speed.is_some_and(|ts| ts < s.ego().speed - 1e-9),
                FunctionId::F2 | FunctionId::F4 => r.switch_lane != 0,
            })
        })
        .map(|s| s.tick)
}

/// Applies the rules in order and returns every mode that matched, each
/// once, primary first. Empty when nothing matched.
pub fn classify_failure(input: &ClassifierInput<'_>) -> Vec<FailureEvidence> {
    let mut found: Vec<FailureEvidence> = Vec::new();
    let mut add = |mode, tc_id, tick, detail: String| {
        if !found.iter().any(|f: &FailureEvidence| f.mode == mode) {
            found.push(FailureEvidence {
                mode,
                tc_id,
                tick,
                detail,
            });
        }
    };

    if input.extraction_failed {
        add(
            FailureMode::NoCodeEmitted,
            None,
            None,
            "response contains no code".into(),
        );
        return found;
    }
    if let Some(c) = input.compile.filter(|c| c.is_failure()) {
        let first = c
            .diagnostics
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .unwrap_or("")
            .trim();
        add(FailureMode::SyntaxError, None, None, first.to_owned());
    }
    if let Some(d) = static_extraneous(input.source) {
        add(FailureMode::ExtraneousCode, None, None, d);
    }
    if let Some(d) = static_bad_interface(input.source) {
        add(FailureMode::BadInterfaceAccess, None, None, d);
    }
    let eps = input.episodes;
    if let Some((tc, tick, line)) = stderr_match(eps, &DIV_ZERO) {
        add(FailureMode::DivisionByZero, Some(tc), tick, line);
    }
    if let Some((tc, tick, line)) = stderr_match(eps, &FIELD_ACCESS) {
        add(FailureMode::BadInterfaceAccess, Some(tc), tick, line);
    }

    let action: Vec<&(TcId, &Trace, &Verdict)> = eps
        .iter()
        .filter(|(tc, _, _)| input.function.action_cases().contains(tc))
        .collect();
    if !action.is_empty()
        && action.iter().all(|(_, t, _)| {
            matches!(t.terminal, Terminal::Completed | Terminal::Collision { .. })
                && t.snapshots
                    .iter()
                    .all(|s| s.request.as_ref().is_none_or(|r| r.touched().is_empty()))
        })
    {
        add(
            FailureMode::NoAction,
            None,
            None,
            format!("no control output in {} test case(s) needing action", action.len()),
        );
    }

    for (tc, trace, verdict) in eps {
        let Some(r2) = verdict.requirement(Requirement::R2).filter(|r| !r.passed) else {
            continue;
        };
        let Some(snap) = trace.snapshots.iter().find(|s| Some(s.tick) == r2.evidence_tick) else {
            continue;
        };
        let Some(req) = &snap.request else { continue };
        let mask = input.function.mask();
        let braking = req.brake && !mask.permits(crate::protocol::Channel::Brake);
        let slowing = !mask.permits(crate::protocol::Channel::TargetSpeed)
            && req.target_speed.is_some_and(|ts| ts < snap.ego().speed);
        if braking || slowing {
            add(
                FailureMode::AlternativeStrategy,
                Some(*tc),
                Some(snap.tick),
                r2.detail.clone(),
            );
            break;
        }
    }

    'excess: for (tc, trace, verdict) in eps {
        for s in &trace.snapshots {
            let (Some(req), Some(lc)) = (&s.request, &s.ego().lane_change) else {
                continue;
            };
            if req.switch_lane != 0 && (lc.final_lane() + req.switch_lane - s.ego().lane_id).abs() > 1 {
                add(
                    FailureMode::ExcessLaneChange,
                    Some(*tc),
                    Some(s.tick),
                    format!("lane request {:+} while already changing lanes", req.switch_lane),
                );
                break 'excess;
            }
        }
        if let Some(r3) = verdict.requirement(Requirement::R3).filter(|r| !r.passed) {
            add(
                FailureMode::ExcessLaneChange,
                Some(*tc),
                r3.evidence_tick,
                r3.detail.clone(),
            );
            break;
        }
    }

    let verdict_of = |id: TcId| eps.iter().find(|(tc, _, _)| *tc == id).map(|(_, _, v)| *v);
    if let (Some(v6), Some(v7)) = (verdict_of(TcId::Tc6), verdict_of(TcId::Tc7)) {
        if v6.overall && !v7.overall {
            add(
                FailureMode::WrongTargetSelection,
                Some(TcId::Tc7),
                v7.goal.evidence_tick,
                "reacted to the oncoming vehicle on the neighbouring road".into(),
            );
        }
    }

    for (tc, trace, verdict) in action {
        if verdict.overall {
            continue;
        }
        match input.function {
            FunctionId::F1 => {
                let th = input.thresholds;
                let onset = trace
                    .snapshots
                    .iter()
                    .find(|s| s.request.is_some() && s.ego().speed > th.brake_speed)
                    .map(|s| s.tick);
                let first = first_action(trace, FunctionId::F1);
                if let (Some(k), Some(f)) = (onset, first) {
                    if f > k + th.reaction_ticks {
                        add(
                            FailureMode::BadThreshold,
                            Some(*tc),
                            Some(f),
                            format!("first brake at tick {f}, threshold crossed at {k}"),
                        );
                        break;
                    }
                }
            }
            FunctionId::F3 | FunctionId::F4 => {
                let Some(first) = first_action(trace, input.function) else {
                    continue;
                };
                if let Some(latest) = latest_safe_onset(input.function, *tc, input.overrides) {
                    if first > latest {
                        add(
                            FailureMode::BadThreshold,
                            Some(*tc),
                            Some(first),
                            format!("first action at tick {first}, latest safe onset {latest}"),
                        );
                        break;
                    }
                }
            }
            FunctionId::F2 => {}
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_scans() {
        assert!(static_bad_interface("v = obs[\"ego\"][\"velocity\"]")
            .unwrap()
            .contains("velocity"));
        assert!(static_bad_interface("v = obs['ego']['speed']\nstate['memo'] = 1\n").is_none());
        assert!(static_bad_interface("x = o.get('position')").is_some());
        assert!(static_extraneous("class Vehicle:\n    pass").is_some());
        assert!(static_extraneous("speed = 33.33").is_some());
        assert!(static_extraneous("# class Vehicle\nx = 1").is_none());
        assert!(static_extraneous("gap = 2.0 * v").is_none());
    }

    #[test]
    fn latest_onset_for_cut_ins() {
        let o = TcOverrides::default();
        // Braking with a zero target speed saturates at full braking, so the
        // onset matches the calibrated 8 ticks after the cut-in completes.
        assert_eq!(latest_safe_onset(FunctionId::F3, TcId::Tc1, &o), Some(128));
        let lat = latest_safe_onset(FunctionId::F4, TcId::Tc1, &o).unwrap();
        assert!(lat < 128, "{lat}");
        assert_eq!(latest_safe_onset(FunctionId::F4, TcId::Tc6, &o), None);
        assert_eq!(latest_safe_onset(FunctionId::F1, TcId::Tc1, &o), None);
    }
}
