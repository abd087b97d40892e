//! Plain-text scenario files.
//!
//! ```text
//! # comment
//! [scenario]
//! id = TC6
//! horizon = 30
//! functions = F3, F4
//!
//! [road]
//! drivable_lanes = -4..-2
//! lane_width = 3.5
//! length = 2000
//!
//! [vehicle ego]
//! s = 100
//! lane = -3
//! speed = 22.22
//!
//! [event]
//! t = 4
//! agent = cutter
//! action = lane_change right
//! ```
//!
//! The first `[vehicle]` section is the ego. See `docs/scenario-format.md`.

use std::fmt::Write as _;

use crate::function::FunctionId;
use crate::sim::{RoadSpec, VehicleState, DEFAULT_LANE_WIDTH, DEFAULT_ROAD_LENGTH, VEHICLE_LENGTH, VEHICLE_WIDTH};

use super::{Scenario, ScenarioError, ScriptAction, ScriptEvent, DEFAULT_HORIZON};

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub warnings: Vec<String>,
}

#[derive(Debug)]
enum Section {
    Scenario,
    Road,
    Vehicle(usize),
    Event(usize),
}

struct Value<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

impl Value<'_> {
    fn err(&self, message: impl Into<String>) -> ScenarioError {
        ScenarioError::Parse {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }

    fn f64(&self) -> Result<f64, ScenarioError> {
        self.text
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| self.err(format!("expected a number, got `{}`", self.text)))
    }

    fn i32(&self) -> Result<i32, ScenarioError> {
        self.text
            .parse::<i32>()
            .map_err(|_| self.err(format!("expected an integer, got `{}`", self.text)))
    }

    fn bool(&self) -> Result<bool, ScenarioError> {
        match self.text {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(self.err(format!("expected true or false, got `{other}`"))),
        }
    }
}

#[derive(Default)]
struct EventDraft {
    t: Option<f64>,
    agent: Option<(String, usize)>,
    action: Option<ScriptAction>,
    header_line: usize,
}

struct RoadDraft {
    lanes: Vec<i32>,
    lane_width: f64,
    length: f64,
}

fn parse_lanes(v: &Value) -> Result<Vec<i32>, ScenarioError> {
    if let Some((a, b)) = v.text.split_once("..") {
        let lo = a.trim().parse::<i32>().map_err(|_| v.err("bad lane range start"))?;
        let hi = b.trim().parse::<i32>().map_err(|_| v.err("bad lane range end"))?;
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        return Ok((lo..=hi).collect());
    }
    v.text
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<i32>()
                .map_err(|_| v.err(format!("bad lane id `{}`", p.trim())))
        })
        .collect()
}

fn parse_action(v: &Value) -> Result<ScriptAction, ScenarioError> {
    let mut parts = v.text.split_whitespace();
    let verb = parts.next().unwrap_or("");
    let arg = parts.next();
    if parts.next().is_some() {
        return Err(v.err("too many words in action"));
    }
    match (verb, arg) {
        ("lane_change", Some("left")) => Ok(ScriptAction::LaneChange(1)),
        ("lane_change", Some("right")) => Ok(ScriptAction::LaneChange(-1)),
        ("lane_change", _) => Err(v.err("lane_change needs `left` or `right`")),
        ("set_accel", Some(a)) => a
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(ScriptAction::SetAccel)
            .ok_or_else(|| v.err(format!("bad acceleration `{a}`"))),
        ("set_accel", None) => Err(v.err("set_accel needs a value")),
        ("hold", None) => Ok(ScriptAction::Hold),
        _ => Err(v.err(format!("unknown action `{}`", v.text))),
    }
}

/// Parses a scenario file. Unknown keys and malformed values are errors; a
/// vehicle starting outside the drivable lanes is only a warning.
pub fn load_scenario(text: &str) -> Result<LoadedScenario, ScenarioError> {
    let mut section: Option<Section> = None;
    let mut id: Option<String> = None;
    let mut horizon = DEFAULT_HORIZON;
    let mut functions: Vec<FunctionId> = Vec::new();
    let mut road = RoadDraft {
        lanes: vec![-4, -3, -2],
        lane_width: DEFAULT_LANE_WIDTH,
        length: DEFAULT_ROAD_LENGTH,
    };
    let mut vehicles: Vec<(VehicleState, usize)> = Vec::new();
    let mut events: Vec<EventDraft> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let indent = raw.len() - raw.trim_start().len();
        if let Some(header) = trimmed.strip_prefix('[') {
            let inner = header.strip_suffix(']').ok_or_else(|| ScenarioError::Parse {
                line: line_no,
                column: raw.len() + 1,
                message: "missing `]`".into(),
            })?;
            let mut words = inner.split_whitespace();
            let kind = words.next().unwrap_or("");
            let name = words.next();
            if words.next().is_some() {
                return Err(ScenarioError::Parse {
                    line: line_no,
                    column: indent + 1,
                    message: "section header has too many words".into(),
                });
            }
            section = Some(match (kind, name) {
                ("scenario", None) => Section::Scenario,
                ("road", None) => Section::Road,
                ("vehicle", Some(name)) => {
                    if vehicles.iter().any(|(v, _)| v.id == name) {
                        return Err(ScenarioError::Parse {
                            line: line_no,
                            column: indent + 1,
                            message: format!("duplicate vehicle `{name}`"),
                        });
                    }
                    vehicles.push((VehicleState::new(name, 0.0, 0, 0.0), line_no));
                    Section::Vehicle(vehicles.len() - 1)
                }
                ("event", _) => {
                    events.push(EventDraft {
                        header_line: line_no,
                        ..Default::default()
                    });
                    Section::Event(events.len() - 1)
                }
                _ => {
                    return Err(ScenarioError::Parse {
                        line: line_no,
                        column: indent + 1,
                        message: format!("unknown section `[{inner}]`"),
                    })
                }
            });
            continue;
        }

        let (key, value) = trimmed.split_once('=').ok_or_else(|| ScenarioError::Parse {
            line: line_no,
            column: indent + 1,
            message: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        let value_text = value.trim();
        let value_col = raw.find('=').map(|p| p + 1).unwrap_or(0) + (value.len() - value.trim_start().len()) + 1;
        let v = Value {
            text: value_text,
            line: line_no,
            column: value_col,
        };
        let unknown_key = || ScenarioError::Parse {
            line: line_no,
            column: indent + 1,
            message: format!("unknown key `{key}`"),
        };

        match section {
            None => {
                return Err(ScenarioError::Parse {
                    line: line_no,
                    column: indent + 1,
                    message: "key outside of any section".into(),
                })
            }
            Some(Section::Scenario) => match key {
                "id" => id = Some(value_text.to_owned()),
                "horizon" => horizon = v.f64()?,
                "functions" => {
                    functions = value_text
                        .split([',', ' '])
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse::<FunctionId>().map_err(|e| v.err(e.to_string())))
                        .collect::<Result<_, _>>()?;
                }
                _ => return Err(unknown_key()),
            },
            Some(Section::Road) => match key {
                "drivable_lanes" => road.lanes = parse_lanes(&v)?,
                "lane_width" => road.lane_width = v.f64()?,
                "length" => road.length = v.f64()?,
                _ => return Err(unknown_key()),
            },
            Some(Section::Vehicle(i)) => {
                let veh = &mut vehicles[i].0;
                match key {
                    "s" => veh.s = v.f64()?,
                    "lane" => veh.lane_id = v.i32()?,
                    "lat_offset" => veh.lat_offset = v.f64()?,
                    "speed" => {
                        let speed = v.f64()?;
                        if speed < 0.0 {
                            return Err(v.err("speed must be non-negative"));
                        }
                        veh.speed = speed;
                    }
                    "accel" => veh.script_accel = v.f64()?,
                    "oncoming" => veh.oncoming = v.bool()?,
                    "length" => veh.length = v.f64()?,
                    "width" => veh.width = v.f64()?,
                    _ => return Err(unknown_key()),
                }
            }
            Some(Section::Event(i)) => {
                let ev = &mut events[i];
                match key {
                    "t" => ev.t = Some(v.f64()?),
                    "agent" => ev.agent = Some((value_text.to_owned(), line_no)),
                    "action" => ev.action = Some(parse_action(&v)?),
                    _ => return Err(unknown_key()),
                }
            }
        }
    }

    let road = RoadSpec::from_lanes(road.lanes, road.lane_width, road.length)?;
    if vehicles.is_empty() {
        return Err(ScenarioError::NoVehicles);
    }
    let mut warnings = Vec::new();
    for (veh, line) in &vehicles {
        if !road.is_drivable(veh.lane_id) {
            warnings.push(format!(
                "line {line}: vehicle `{}` starts in non-drivable lane {}",
                veh.id, veh.lane_id
            ));
        }
    }

    let mut script = Vec::with_capacity(events.len());
    for ev in events {
        let missing = |what: &str| ScenarioError::Parse {
            line: ev.header_line,
            column: 1,
            message: format!("event is missing `{what}`"),
        };
        let t_fire = ev.t.ok_or_else(|| missing("t"))?;
        let (agent, _) = ev.agent.ok_or_else(|| missing("agent"))?;
        let action = ev.action.ok_or_else(|| missing("action"))?;
        if !vehicles.iter().any(|(v, _)| v.id == agent) {
            return Err(ScenarioError::UnknownAgent(agent));
        }
        script.push(ScriptEvent { t_fire, agent, action });
    }

    let id = id.unwrap_or_else(|| "unnamed".to_owned());
    let placements = vehicles.into_iter().map(|(v, _)| v).collect();
    let scenario = Scenario::new(id, road, placements, script, horizon, functions)?;
    Ok(LoadedScenario { scenario, warnings })
}

/// Canonical text form. `load_scenario` of the output reproduces the
/// scenario exactly.
pub fn serialize_scenario(sc: &Scenario) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[scenario]");
    let _ = writeln!(out, "id = {}", sc.id);
    let _ = writeln!(out, "horizon = {}", sc.horizon);
    let fns: Vec<&str> = sc.functions.iter().map(|f| f.name()).collect();
    let _ = writeln!(out, "functions = {}", fns.join(", "));
    let _ = writeln!(out);
    let _ = writeln!(out, "[road]");
    let lanes: Vec<String> = sc.road.drivable_lanes.iter().map(|l| l.to_string()).collect();
    let _ = writeln!(out, "drivable_lanes = {}", lanes.join(", "));
    let _ = writeln!(out, "lane_width = {}", sc.road.lane_width);
    let _ = writeln!(out, "length = {}", sc.road.length);
    for v in &sc.placements {
        let _ = writeln!(out);
        let _ = writeln!(out, "[vehicle {}]", v.id);
        let _ = writeln!(out, "s = {}", v.s);
        let _ = writeln!(out, "lane = {}", v.lane_id);
        if v.lat_offset != 0.0 {
            let _ = writeln!(out, "lat_offset = {}", v.lat_offset);
        }
        let _ = writeln!(out, "speed = {}", v.speed);
        if v.script_accel != 0.0 {
            let _ = writeln!(out, "accel = {}", v.script_accel);
        }
        if v.oncoming {
            let _ = writeln!(out, "oncoming = true");
        }
        if v.length != VEHICLE_LENGTH {
            let _ = writeln!(out, "length = {}", v.length);
        }
        if v.width != VEHICLE_WIDTH {
            let _ = writeln!(out, "width = {}", v.width);
        }
    }
    for ev in &sc.script {
        let _ = writeln!(out);
        let _ = writeln!(out, "[event]");
        let _ = writeln!(out, "t = {}", ev.t_fire);
        let _ = writeln!(out, "agent = {}", ev.agent);
        let action = match ev.action {
            ScriptAction::LaneChange(d) if d > 0 => "lane_change left".to_owned(),
            ScriptAction::LaneChange(_) => "lane_change right".to_owned(),
            ScriptAction::SetAccel(a) => format!("set_accel {a}"),
            ScriptAction::Hold => "hold".to_owned(),
        };
        let _ = writeln!(out, "action = {action}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[vehicle ego]\ns = 0\nlane = -3\nspeed = 10\n";

    #[test]
    fn minimal_file() {
        let loaded = load_scenario(MINIMAL).unwrap();
        let sc = loaded.scenario;
        assert_eq!(sc.placements.len(), 1);
        assert!(sc.script.is_empty());
        assert_eq!(sc.horizon, DEFAULT_HORIZON);
        assert_eq!(sc.road.lane_width, 3.5);
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn ghost_agent() {
        let text = format!("{MINIMAL}\n[event]\nt = 1\nagent = ghost\naction = hold\n");
        assert_eq!(
            load_scenario(&text).unwrap_err(),
            ScenarioError::UnknownAgent("ghost".into())
        );
    }

    #[test]
    fn parse_error_location() {
        let text = "[vehicle ego]\ns = 0\nlane = minus three\n";
        match load_scenario(text).unwrap_err() {
            ScenarioError::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, 8);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            load_scenario("[vehicle ego\n").unwrap_err(),
            ScenarioError::Parse { line: 1, .. }
        ));
        assert!(matches!(
            load_scenario("s = 1\n").unwrap_err(),
            ScenarioError::Parse { line: 1, column: 1, .. }
        ));
    }

    #[test]
    fn non_drivable_start_warns() {
        let text = format!("{MINIMAL}\n[vehicle onc]\ns = 500\nlane = -1\nspeed = 20\noncoming = true\n");
        let loaded = load_scenario(&text).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.scenario.placements[1].oncoming);
    }

    #[test]
    fn actions_parse() {
        let text = format!(
            "{MINIMAL}\n[event]\nt = 2\nagent = ego\naction = set_accel -6.5\n\n[event a]\nt = 1\nagent = ego\naction = lane_change left\n"
        );
        let sc = load_scenario(&text).unwrap().scenario;
        assert_eq!(sc.script[0].action, ScriptAction::LaneChange(1));
        assert_eq!(sc.script[1].action, ScriptAction::SetAccel(-6.5));
        let bad = format!("{MINIMAL}\n[event]\nt = 2\nagent = ego\naction = teleport\n");
        assert!(load_scenario(&bad).is_err());
    }

    #[test]
    fn serialize_roundtrip() {
        let text = format!(
            "[scenario]\nid = demo\nfunctions = F3 F4\n[road]\ndrivable_lanes = -2..-4\n{MINIMAL}accel = 1.25\n\n[event]\nt = 0.1\nagent = ego\naction = hold\n"
        );
        let sc = load_scenario(&text).unwrap().scenario;
        let again = load_scenario(&serialize_scenario(&sc)).unwrap().scenario;
        assert_eq!(sc, again);
        assert_eq!(serialize_scenario(&sc), serialize_scenario(&again));
    }
}
