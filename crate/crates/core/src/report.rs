//! Per-candidate JSON records, matrix tables and trace exports.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{Trace, TraceEvent};
use crate::function::TcId;
use crate::generation::CandidateMeta;
use crate::oracle::{CheckResult, Requirement, VerdictStage};
use crate::orchestrator::{CellStatus, EvaluationOutcome, FailureEvidence, FailureMode, MatrixReport};
use crate::protocol::ControlRequest;
use crate::sandbox::StageResult;
use crate::scenario::ScriptAction;

pub const RECORD_SCHEMA_VERSION: u32 = 1;
pub const RECORD_SCHEMA: &str = include_str!("../schema/evaluation_record.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcRecord {
    pub tc_id: TcId,
    #[serde(rename = "R1")]
    pub r1: Option<CheckResult>,
    #[serde(rename = "R2")]
    pub r2: Option<CheckResult>,
    #[serde(rename = "R3")]
    pub r3: Option<CheckResult>,
    #[serde(rename = "R4")]
    pub r4: Option<CheckResult>,
    pub goal: CheckResult,
    pub overall: bool,
    pub terminal: String,
    pub ticks: usize,
    pub trace_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub wall_time_ms: u64,
}

/// What gets written for every evaluated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub schema_version: u32,
    pub meta: CandidateMeta,
    pub stage: VerdictStage,
    pub compile: StageResult,
    pub per_tc: Vec<TcRecord>,
    pub failure_modes: Vec<FailureEvidence>,
    /// Failed, but no catalogued mode matched.
    pub unclassified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_error: Option<String>,
    pub source_len: usize,
    pub timings: Timings,
}

impl EvaluationRecord {
    pub fn from_outcome(o: &EvaluationOutcome) -> Self {
        let per_tc = o
            .per_tc
            .iter()
            .map(|t| {
                let req = |r| t.verdict.requirement(r).cloned();
                TcRecord {
                    tc_id: t.tc_id,
                    r1: req(Requirement::R1),
                    r2: req(Requirement::R2),
                    r3: req(Requirement::R3),
                    r4: req(Requirement::R4),
                    goal: t.verdict.goal.clone(),
                    overall: t.verdict.overall,
                    terminal: t.terminal.clone(),
                    ticks: t.ticks,
                    trace_hash: t.trace_hash.clone(),
                }
            })
            .collect();
        Self {
            schema_version: RECORD_SCHEMA_VERSION,
            meta: o.meta.clone(),
            stage: o.stage,
            compile: o.compile.clone(),
            per_tc,
            failure_modes: o.failure_modes.clone(),
            unclassified: o.stage != VerdictStage::Passed && o.generation_error.is_none() && o.failure_modes.is_empty(),
            generation_error: o.generation_error.clone(),
            source_len: o.source_len,
            timings: Timings {
                wall_time_ms: o.wall_time_ms,
            },
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("record violates the shipped schema: {}", .0.join("; "))]
    Schema(Vec<String>),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

static RECORD_VALIDATOR: LazyLock<jsonschema::Validator> = LazyLock::new(|| {
    let schema: serde_json::Value = serde_json::from_str(RECORD_SCHEMA).expect("shipped schema is JSON");
    jsonschema::validator_for(&schema).expect("shipped schema compiles")
});

pub fn validate_record(value: &serde_json::Value) -> Result<(), ReportError> {
    let errors: Vec<String> = RECORD_VALIDATOR
        .iter_errors(value)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(ReportError::Schema(errors))
    }
}

/// Validated, pretty-printed record text.
pub fn render_record(outcome: &EvaluationOutcome) -> Result<String, ReportError> {
    let value = serde_json::to_value(EvaluationRecord::from_outcome(outcome)).expect("record serializes");
    validate_record(&value)?;
    Ok(serde_json::to_string_pretty(&value).expect("value serializes") + "\n")
}

pub fn write_record(path: &Path, outcome: &EvaluationOutcome) -> Result<(), ReportError> {
    let text = render_record(outcome)?;
    std::fs::write(path, text).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

const BANDS: [VerdictStage; 4] = [
    VerdictStage::Passed,
    VerdictStage::ExecutedFailed,
    VerdictStage::NonExecutable,
    VerdictStage::NonCompilable,
];

fn fmt_pass(p: Option<&f64>) -> String {
    p.map_or_else(|| "-".to_owned(), |p| format!("{p:.3}"))
}

/// Fixed-width summary: one line per (model, function), models ordered by
/// total passed candidates, then a failure mode histogram per model.
pub fn render_matrix_table(report: &MatrixReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "run {}  repeats {}  config {}",
        report.run_id,
        report.repeats,
        &report.config_hash[..12.min(report.config_hash.len())]
    );
    let _ = writeln!(
        out,
        "{:<24} {:<4} {:>6} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7} {:>7}  status",
        "model", "fn", "pass", "exfail", "noexec", "nocomp", "generr", "pass@1", "pass@5", "pass@10"
    );
    for row in &report.rows {
        for cell in &row.cells {
            let band = |s: VerdictStage| cell.stages.get(&s).copied().unwrap_or(0);
            let status = match &cell.status {
                CellStatus::Complete => "complete".to_owned(),
                CellStatus::Incomplete { missing, reason } => {
                    format!("INCOMPLETE ({} missing: {reason})", missing.len())
                }
            };
            let _ = writeln!(
                out,
                "{:<24} {:<4} {:>6} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7} {:>7}  {status}",
                row.model,
                cell.function.name(),
                band(BANDS[0]),
                band(BANDS[1]),
                band(BANDS[2]),
                band(BANDS[3]),
                cell.generation_failures,
                fmt_pass(cell.pass_at_k.get("pass@1")),
                fmt_pass(cell.pass_at_k.get("pass@5")),
                fmt_pass(cell.pass_at_k.get("pass@10")),
            );
        }
        let _ = writeln!(out, "{:<24} total passed {} of {}", row.model, row.passed, row.attempts);
    }
    out.push_str("\nfailure modes (primary)\n");
    for row in &report.rows {
        let mut counts = [0usize; FailureMode::ALL.len()];
        for cell in &row.cells {
            for (mode, n) in &cell.failure_modes {
                let i = FailureMode::ALL
                    .iter()
                    .position(|m| m == mode)
                    .expect("catalogued mode");
                counts[i] += n;
            }
        }
        let listed: Vec<String> = FailureMode::ALL
            .iter()
            .zip(counts)
            .filter(|(_, n)| *n > 0)
            .map(|(m, n)| format!("{m}={n}"))
            .collect();
        let listed = if listed.is_empty() {
            "none".to_owned()
        } else {
            listed.join(" ")
        };
        let _ = writeln!(out, "{:<24} {listed}", row.model);
    }
    out
}

fn fmt_request(req: Option<&ControlRequest>) -> String {
    let Some(r) = req else { return "(none)".to_owned() };
    let mut parts = Vec::new();
    if r.brake {
        parts.push("brake".to_owned());
    }
    if let Some(ts) = r.target_speed {
        parts.push(format!("ts={ts:.3}"));
    }
    if r.switch_lane != 0 {
        parts.push(format!("lane{:+}", r.switch_lane));
    }
    if parts.is_empty() {
        "-".to_owned()
    } else {
        parts.join(",")
    }
}

fn fmt_event(ev: &TraceEvent) -> String {
    match ev {
        TraceEvent::Script { agent, action } => match action {
            ScriptAction::LaneChange(d) => format!("{agent} lane_change {d:+}"),
            ScriptAction::SetAccel(a) => format!("{agent} accel {a:.2}"),
            ScriptAction::Hold => format!("{agent} hold"),
        },
        TraceEvent::Collision { a, b } => format!("collision {a}/{b}"),
        TraceEvent::Error { detail } => format!("error: {detail}"),
    }
}

fn tick_events(trace: &Trace, i: usize) -> Vec<String> {
    let snap = &trace.snapshots[i];
    let mut events: Vec<String> = snap.events.iter().map(fmt_event).collect();
    if i > 0 {
        let before = trace.snapshots[i - 1].ego().lane_id;
        let now = snap.ego().lane_id;
        if before != now {
            events.push(format!("ego lane {before} -> {now}"));
        }
    }
    events
}

/// Per-tick text rendering of a trace. Deterministic.
pub fn render_timeline(trace: &Trace) -> String {
    let h = &trace.header;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "scenario {}  ego {}  dt {}  horizon {}  lanes {:?}  lane width {}",
        h.scenario_id, h.ego_id, h.dt, h.horizon, h.road.drivable_lanes, h.road.lane_width
    );
    let _ = writeln!(
        out,
        "{:>5} {:>8} {:>5} {:>8} {:>9} {:>9}  {:<20} events",
        "tick", "t", "lane", "offset", "s", "speed", "request"
    );
    for (i, snap) in trace.snapshots.iter().enumerate() {
        let ego = snap.ego();
        let _ = writeln!(
            out,
            "{:>5} {:>8.3} {:>5} {:>8.3} {:>9.3} {:>9.3}  {:<20} {}",
            snap.tick,
            snap.t,
            ego.lane_id,
            ego.lat_offset,
            ego.s,
            ego.speed,
            fmt_request(snap.request.as_ref()),
            tick_events(trace, i).join("; ")
        );
    }
    if !trace.snapshots.is_empty() {
        let _ = writeln!(out, "terminal {}", trace.terminal);
    }
    out
}

/// One CSV row per tick with the ego state, the request and the events.
pub fn render_trace_csv(trace: &Trace) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "tick",
        "t",
        "ego_s",
        "ego_lane",
        "ego_lat_offset",
        "ego_speed",
        "brake",
        "target_speed",
        "switch_lane",
        "events",
    ])
    .expect("in-memory write");
    for (i, snap) in trace.snapshots.iter().enumerate() {
        let ego = snap.ego();
        let req = snap.request.as_ref();
        w.write_record([
            snap.tick.to_string(),
            format!("{:.3}", snap.t),
            format!("{:.6}", ego.s),
            ego.lane_id.to_string(),
            format!("{:.6}", ego.lat_offset),
            format!("{:.6}", ego.speed),
            req.map_or(String::new(), |r| r.brake.to_string()),
            req.and_then(|r| r.target_speed)
                .map_or(String::new(), |v| format!("{v:.6}")),
            req.map_or(String::new(), |r| r.switch_lane.to_string()),
            tick_events(trace, i).join("; "),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{passive_controller, run_closed_loop};
    use crate::scenario::{instantiate_tc, TcOverrides};

    #[test]
    fn timeline_and_csv_cover_every_tick() {
        let sc = instantiate_tc(TcId::Tc1, &TcOverrides::default()).unwrap();
        let trace = run_closed_loop(&sc, &mut passive_controller());
        let text = render_timeline(&trace);
        assert_eq!(text.lines().count(), trace.snapshots.len() + 3);
        assert!(text.contains("collision ego/cutter"));
        assert!(text.contains("cutter lane_change -1"));
        let csv = render_trace_csv(&trace);
        let mut r = csv::Reader::from_reader(csv.as_bytes());
        assert_eq!(r.records().count(), trace.snapshots.len());
    }

    #[test]
    fn empty_trace_renders_header_only() {
        let sc = instantiate_tc(TcId::Tc6, &TcOverrides::default()).unwrap();
        let mut trace = run_closed_loop(&sc, &mut passive_controller());
        trace.snapshots.clear();
        assert_eq!(render_timeline(&trace).lines().count(), 2);
        assert_eq!(render_trace_csv(&trace).lines().count(), 1);
    }

    #[test]
    fn schema_rejects_unknown_stage() {
        let o = EvaluationOutcome::no_code(
            CandidateMeta {
                model: "m".into(),
                function: crate::function::FunctionId::F1,
                attempt: 1,
                prompt_hash: String::new(),
                response_hash: String::new(),
            },
            "no code emitted",
        );
        let mut value = serde_json::to_value(EvaluationRecord::from_outcome(&o)).unwrap();
        validate_record(&value).unwrap();
        value["stage"] = "almost".into();
        assert!(matches!(validate_record(&value), Err(ReportError::Schema(_))));
    }
}
