//! Closed-loop episodes: the tick loop that couples the simulator to a
//! controller, and the trace it leaves behind.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::protocol::{
    decode_control, decode_observation, encode_control, encode_observation, Channels, ControlRequest, Observation,
};
use crate::scenario::{apply_event, Scenario, ScriptAction, ScriptCursor};
use crate::sim::{detect_collision, step_world, RoadSpec, VehicleState, DT};

/// Failure of a single observation/reply exchange.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("no reply within the tick deadline")]
    Timeout,
    #[error("controller exited ({})", exit_desc(*.exit))]
    Crash { exit: Option<i32>, stderr_tail: String },
    #[error("{0}")]
    Protocol(String),
}

fn exit_desc(code: Option<i32>) -> String {
    match code {
        Some(c) => format!("exit code {c}"),
        None => "killed by signal".to_owned(),
    }
}

/// One side of the tick protocol, already past the handshake.
pub trait ControllerLink {
    /// Sends one observation line and returns the single reply line.
    fn exchange(&mut self, observation: &str) -> Result<String, LinkError>;

    /// Recent diagnostic output of the controller, if any.
    fn stderr_tail(&self) -> String {
        String::new()
    }
}

/// In-process controller driven by a closure over decoded observations.
pub struct ScriptedController<F> {
    policy: F,
}

impl<F: FnMut(&Observation) -> ControlRequest> ScriptedController<F> {
    pub fn new(policy: F) -> Self {
        Self { policy }
    }
}

impl<F: FnMut(&Observation) -> ControlRequest> ControllerLink for ScriptedController<F> {
    fn exchange(&mut self, observation: &str) -> Result<String, LinkError> {
        let obs = decode_observation(observation).map_err(|e| LinkError::Protocol(e.0))?;
        Ok(encode_control(&(self.policy)(&obs)))
    }
}

/// Controller that never asks for anything.
pub fn passive_controller() -> ScriptedController<impl FnMut(&Observation) -> ControlRequest> {
    ScriptedController::new(|_: &Observation| ControlRequest::default())
}

/// Replies with raw lines produced by a closure; used to feed the loop
/// arbitrary bytes.
pub struct RawController<F> {
    reply: F,
}

impl<F: FnMut(&str) -> Result<String, LinkError>> RawController<F> {
    pub fn new(reply: F) -> Self {
        Self { reply }
    }
}

impl<F: FnMut(&str) -> Result<String, LinkError>> ControllerLink for RawController<F> {
    fn exchange(&mut self, observation: &str) -> Result<String, LinkError> {
        (self.reply)(observation)
    }
}

/// Plays back the requests recorded in a trace, tick by tick.
pub struct ReplayController {
    requests: Vec<ControlRequest>,
    next: usize,
}

impl ReplayController {
    pub fn from_trace(trace: &Trace) -> Self {
        Self {
            requests: trace.snapshots.iter().filter_map(|s| s.request.clone()).collect(),
            next: 0,
        }
    }
}

impl ControllerLink for ReplayController {
    fn exchange(&mut self, _observation: &str) -> Result<String, LinkError> {
        let req = self.requests.get(self.next).cloned().unwrap_or_default();
        self.next += 1;
        Ok(encode_control(&req))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    Script { agent: String, action: ScriptAction },
    Collision { a: String, b: String },
    Error { detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terminal {
    Completed,
    Collision { pairs: Vec<(String, String)> },
    RuntimeError { detail: String, stderr_tail: String },
    ProtocolTimeout { stderr_tail: String },
    ProtocolError { detail: String, stderr_tail: String },
    HandshakeFailed { detail: String, stderr_tail: String },
}

impl Terminal {
    pub fn name(&self) -> &'static str {
        match self {
            Terminal::Completed => "completed",
            Terminal::Collision { .. } => "collision",
            Terminal::RuntimeError { .. } => "runtime_error",
            Terminal::ProtocolTimeout { .. } => "protocol_timeout",
            Terminal::ProtocolError { .. } => "protocol_error",
            Terminal::HandshakeFailed { .. } => "handshake_failed",
        }
    }

    /// Ended because the controller misbehaved rather than by the scenario.
    pub fn is_abnormal(&self) -> bool {
        !matches!(self, Terminal::Completed | Terminal::Collision { .. })
    }

    pub fn stderr_tail(&self) -> &str {
        match self {
            Terminal::RuntimeError { stderr_tail, .. }
            | Terminal::ProtocolTimeout { stderr_tail }
            | Terminal::ProtocolError { stderr_tail, .. }
            | Terminal::HandshakeFailed { stderr_tail, .. } => stderr_tail,
            _ => "",
        }
    }
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminal::Collision { pairs } => {
                let list: Vec<String> = pairs.iter().map(|(a, b)| format!("{a}/{b}")).collect();
                write!(f, "collision ({})", list.join(", "))
            }
            Terminal::RuntimeError { detail, .. }
            | Terminal::ProtocolError { detail, .. }
            | Terminal::HandshakeFailed { detail, .. } => write!(f, "{}: {detail}", self.name()),
            _ => f.write_str(self.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub scenario_id: String,
    pub ego_id: String,
    pub dt: f64,
    pub horizon: f64,
    pub road: RoadSpec,
}

/// World at the start of a tick, after script events fired, plus what the
/// controller asked for in response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub t: f64,
    pub vehicles: Vec<VehicleState>,
    pub request: Option<ControlRequest>,
    pub touched: Channels,
    pub events: Vec<TraceEvent>,
}

impl Snapshot {
    pub fn ego(&self) -> &VehicleState {
        &self.vehicles[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub snapshots: Vec<Snapshot>,
    pub terminal: Terminal,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(TraceHeader),
    Tick(Snapshot),
    Terminal { terminal: Terminal },
}

#[derive(Debug, Error, PartialEq)]
#[error("trace line {line} (byte offset {offset}): {message}")]
pub struct TraceParseError {
    pub line: usize,
    pub offset: usize,
    pub message: String,
}

impl Trace {
    fn header_for(scenario: &Scenario) -> TraceHeader {
        TraceHeader {
            scenario_id: scenario.id.clone(),
            ego_id: scenario.ego_id().to_owned(),
            dt: DT,
            horizon: scenario.horizon,
            road: scenario.road.clone(),
        }
    }

    /// Trace of an episode that never got past the handshake.
    pub fn handshake_failed(scenario: &Scenario, detail: impl Into<String>, stderr_tail: impl Into<String>) -> Self {
        Self {
            header: Self::header_for(scenario),
            snapshots: Vec::new(),
            terminal: Terminal::HandshakeFailed {
                detail: detail.into(),
                stderr_tail: stderr_tail.into(),
            },
        }
    }

    /// JSON lines: header, one record per snapshot, terminal.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |r: &Record| {
            out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            out.push('\n');
        };
        push(&Record::Header(self.header.clone()));
        for s in &self.snapshots {
            push(&Record::Tick(s.clone()));
        }
        push(&Record::Terminal {
            terminal: self.terminal.clone(),
        });
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceParseError> {
        let mut header = None;
        let mut snapshots = Vec::new();
        let mut terminal = None;
        let mut offset = 0;
        let mut last_line = 0;
        for (i, line) in text.split_inclusive('\n').enumerate() {
            let err = |message: String| TraceParseError {
                line: i + 1,
                offset,
                message,
            };
            last_line = i + 1;
            let body = line.trim_end_matches(['\n', '\r']);
            if body.trim().is_empty() {
                offset += line.len();
                continue;
            }
            if terminal.is_some() {
                return Err(err("record after terminal".into()));
            }
            let record: Record = serde_json::from_str(body).map_err(|e| err(e.to_string()))?;
            match record {
                Record::Header(h) if header.is_none() => header = Some(h),
                Record::Header(_) => return Err(err("duplicate header".into())),
                _ if header.is_none() => return Err(err("first record must be the header".into())),
                Record::Tick(s) => snapshots.push(s),
                Record::Terminal { terminal: t } => terminal = Some(t),
            }
            offset += line.len();
        }
        let missing = |what: &str| TraceParseError {
            line: last_line + 1,
            offset,
            message: format!("missing {what} record"),
        };
        Ok(Self {
            header: header.ok_or_else(|| missing("header"))?,
            snapshots,
            terminal: terminal.ok_or_else(|| missing("terminal"))?,
        })
    }

    /// Hex SHA-256 of the serialized trace.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

fn snapshot(
    world: &crate::sim::WorldState,
    request: Option<ControlRequest>,
    touched: Channels,
    events: Vec<TraceEvent>,
) -> Snapshot {
    Snapshot {
        tick: world.tick,
        t: world.t(),
        vehicles: world.vehicles.clone(),
        request,
        touched,
        events,
    }
}

/// Runs one episode until the horizon or the first terminal event. Never
/// panics on controller behavior; failures end up in `Trace::terminal`.
pub fn run_closed_loop(scenario: &Scenario, link: &mut dyn ControllerLink) -> Trace {
    let mut world = scenario.initial_world();
    let mut cursor = ScriptCursor::new();
    let ego_id = scenario.ego_id();
    let mut snapshots = Vec::new();
    let mut terminal = Terminal::Completed;

    for _ in 0..scenario.tick_count(DT) {
        let mut events: Vec<TraceEvent> = cursor
            .advance(scenario, world.t())
            .iter()
            .map(|ev| {
                apply_event(&mut world, ev);
                TraceEvent::Script {
                    agent: ev.agent.clone(),
                    action: ev.action.clone(),
                }
            })
            .collect();

        let pairs = detect_collision(&world);
        if !pairs.is_empty() {
            events.extend(pairs.iter().map(|(a, b)| TraceEvent::Collision {
                a: a.clone(),
                b: b.clone(),
            }));
            snapshots.push(snapshot(&world, None, Channels::new(), events));
            terminal = Terminal::Collision { pairs };
            break;
        }

        let obs = encode_observation(&world, ego_id).expect("ego is always present");
        let outcome = link
            .exchange(&obs)
            .and_then(|reply| decode_control(reply.as_bytes()).map_err(|e| LinkError::Protocol(e.0)));
        match outcome {
            Ok((request, touched)) => {
                let next = step_world(&world, &request, DT);
                snapshots.push(snapshot(&world, Some(request), touched, events));
                world = next;
            }
            Err(err) => {
                events.push(TraceEvent::Error {
                    detail: err.to_string(),
                });
                snapshots.push(snapshot(&world, None, Channels::new(), events));
                let stderr_tail = link.stderr_tail();
                terminal = match err {
                    LinkError::Timeout => Terminal::ProtocolTimeout { stderr_tail },
                    LinkError::Crash { exit, stderr_tail } => Terminal::RuntimeError {
                        detail: format!("controller exited ({})", exit_desc(exit)),
                        stderr_tail,
                    },
                    LinkError::Protocol(detail) => Terminal::ProtocolError { detail, stderr_tail },
                };
                break;
            }
        }
    }
    Trace {
        header: Trace::header_for(scenario),
        snapshots,
        terminal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::TcId;
    use crate::scenario::{instantiate_tc, TcOverrides};

    fn tc(id: TcId) -> Scenario {
        instantiate_tc(id, &TcOverrides::default()).unwrap()
    }

    #[test]
    fn passive_on_empty_road_completes() {
        let sc = tc(TcId::Tc6);
        let trace = run_closed_loop(&sc, &mut passive_controller());
        assert_eq!(trace.terminal, Terminal::Completed);
        assert_eq!(trace.snapshots.len(), 600);
        assert!(trace.snapshots.iter().all(|s| s.touched.is_empty()));
    }

    #[test]
    fn passive_on_cut_in_collides() {
        let sc = tc(TcId::Tc1);
        let trace = run_closed_loop(&sc, &mut passive_controller());
        let Terminal::Collision { pairs } = &trace.terminal else {
            panic!("{:?}", trace.terminal)
        };
        assert_eq!(pairs, &vec![("ego".to_owned(), "cutter".to_owned())]);
        let last = trace.snapshots.last().unwrap();
        assert!(last.request.is_none());
        assert!(last.events.iter().any(|e| matches!(e, TraceEvent::Collision { .. })));
    }

    #[test]
    fn crash_at_first_tick() {
        let sc = tc(TcId::Tc6);
        let mut link = RawController::new(|_: &str| {
            Err(LinkError::Crash {
                exit: Some(1),
                stderr_tail: "ZeroDivisionError: division by zero".into(),
            })
        });
        let trace = run_closed_loop(&sc, &mut link);
        assert_eq!(trace.snapshots.len(), 1);
        let Terminal::RuntimeError { stderr_tail, .. } = &trace.terminal else {
            panic!()
        };
        assert!(stderr_tail.contains("ZeroDivisionError"));
    }

    #[test]
    fn malformed_reply_is_protocol_error() {
        let sc = tc(TcId::Tc6);
        let mut n = 0;
        let mut link = RawController::new(move |_: &str| {
            n += 1;
            Ok(if n == 8 { "garbage".into() } else { "{}".into() })
        });
        let trace = run_closed_loop(&sc, &mut link);
        assert!(matches!(trace.terminal, Terminal::ProtocolError { .. }));
        assert_eq!(trace.snapshots.last().unwrap().tick, 7);
    }

    #[test]
    fn jsonl_round_trip_and_stable_hash() {
        let sc = tc(TcId::Tc2);
        let a = run_closed_loop(&sc, &mut passive_controller());
        let b = run_closed_loop(&sc, &mut passive_controller());
        assert_eq!(a.hash(), b.hash());
        let parsed = Trace::from_jsonl(&a.to_jsonl()).unwrap();
        assert_eq!(parsed, a);
        assert_eq!(parsed.hash(), a.hash());
    }

    #[test]
    fn corrupt_trace_reports_offset() {
        let sc = tc(TcId::Tc6);
        let text = Trace::handshake_failed(&sc, "silent", "").to_jsonl();
        let first_len = text.lines().next().unwrap().len() + 1;
        let corrupt = format!("{}{{not json\n", &text[..first_len]);
        let err = Trace::from_jsonl(&corrupt).unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.offset, first_len);
        assert!(Trace::from_jsonl("").is_err());
    }

    #[test]
    fn replaying_requests_reproduces_trace() {
        let sc = tc(TcId::Tc1);
        let mut link = ScriptedController::new(|o: &Observation| ControlRequest {
            switch_lane: if (o.t - 5.0).abs() < 1e-9 { -1 } else { 0 },
            ..Default::default()
        });
        let original = run_closed_loop(&sc, &mut link);
        let replayed = run_closed_loop(&sc, &mut ReplayController::from_trace(&original));
        assert_eq!(original.hash(), replayed.hash());
    }
}
