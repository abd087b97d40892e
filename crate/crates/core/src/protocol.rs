//! Line-delimited tick protocol spoken between the harness and a candidate
//! controller over the candidate's stdin/stdout.
//!
//! Session:
//!
//! 1. candidate prints `ready`
//! 2. harness sends one `road` line
//! 3. per tick: harness sends one `obs` line, candidate answers with exactly
//!    one control line
//! 4. harness sends `{"type":"end"}` and closes stdin
//!
//! Harness messages are JSON objects with a fixed key order and every real
//! number printed with exactly six decimals, so identical worlds give
//! identical bytes. The full contract lives in `docs/protocol.md`.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{RoadSpec, WorldState};

pub const READY_LINE: &str = "ready";
pub const END_LINE: &str = "{\"type\":\"end\"}\n";
/// Longest reply line accepted from a candidate (bytes).
pub const MAX_LINE_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
#[error("{0}")]
pub struct ProtocolError(pub String);

impl ProtocolError {
    pub fn new(detail: impl Into<String>) -> Self {
        Self(detail.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Brake,
    TargetSpeed,
    SwitchLane,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Brake => "brake",
            Channel::TargetSpeed => "target_speed",
            Channel::SwitchLane => "switch_lane",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type Channels = BTreeSet<Channel>;

/// Channels a function is allowed to drive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMask {
    allowed: Channels,
}

impl ChannelMask {
    pub fn new(allowed: impl IntoIterator<Item = Channel>) -> Option<Self> {
        let allowed: Channels = allowed.into_iter().collect();
        (!allowed.is_empty()).then_some(Self { allowed })
    }

    pub fn allowed(&self) -> &Channels {
        &self.allowed
    }

    pub fn permits(&self, channel: Channel) -> bool {
        self.allowed.contains(&channel)
    }

    /// Channels in `touched` the mask does not allow.
    pub fn violations(&self, touched: &Channels) -> Channels {
        touched.difference(&self.allowed).copied().collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlRequest {
    pub brake: bool,
    pub target_speed: Option<f64>,
    pub switch_lane: i32,
}

impl ControlRequest {
    /// Channels carrying a non-default value.
    pub fn touched(&self) -> Channels {
        let mut out = Channels::new();
        if self.brake {
            out.insert(Channel::Brake);
        }
        if self.target_speed.is_some() {
            out.insert(Channel::TargetSpeed);
        }
        if self.switch_lane != 0 {
            out.insert(Channel::SwitchLane);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoObservation {
    pub s: f64,
    pub lane_id: i32,
    pub lat_offset: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentObservation {
    pub id: String,
    pub s: f64,
    pub lane_id: i32,
    pub lat_offset: f64,
    /// Signed velocity along the road; negative for oncoming traffic.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadObservation {
    pub drivable_lanes: Vec<i32>,
    pub lane_width: f64,
}

impl From<&RoadSpec> for RoadObservation {
    fn from(road: &RoadSpec) -> Self {
        Self {
            drivable_lanes: road.drivable_lanes.clone(),
            lane_width: road.lane_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub ego: EgoObservation,
    pub others: Vec<AgentObservation>,
    pub road: RoadObservation,
}

impl Observation {
    pub fn from_world(world: &WorldState, ego_id: &str) -> Option<Self> {
        let ego = world.vehicle(ego_id)?;
        Some(Self {
            t: world.t(),
            ego: EgoObservation {
                s: ego.s,
                lane_id: ego.lane_id,
                lat_offset: ego.lat_offset,
                speed: ego.speed,
            },
            others: world
                .vehicles
                .iter()
                .filter(|v| v.id != ego_id)
                .map(|v| AgentObservation {
                    id: v.id.clone(),
                    s: v.s,
                    lane_id: v.lane_id,
                    lat_offset: v.lat_offset,
                    speed: v.velocity(),
                })
                .collect(),
            road: RoadObservation::from(&world.road),
        })
    }
}

/// Six-decimal fixed point; never prints a negative zero.
pub fn fmt_fixed(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".to_owned()
    } else {
        s
    }
}

fn push_str_json(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("string serialization is infallible"));
}

fn push_lanes(out: &mut String, lanes: &[i32]) {
    out.push('[');
    for (i, lane) in lanes.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{lane}");
    }
    out.push(']');
}

fn push_road(out: &mut String, road: &RoadObservation) {
    out.push_str("{\"drivable_lanes\":");
    push_lanes(out, &road.drivable_lanes);
    let _ = write!(out, ",\"lane_width\":{}}}", fmt_fixed(road.lane_width));
}

/// Canonical encoding of an observation, newline-terminated.
pub fn encode_observation_msg(obs: &Observation) -> String {
    let mut out = String::with_capacity(256);
    let e = &obs.ego;
    let _ = write!(
        out,
        "{{\"type\":\"obs\",\"t\":{},\"ego\":{{\"s\":{},\"lane_id\":{},\"lat_offset\":{},\"speed\":{}}},\"others\":[",
        fmt_fixed(obs.t),
        fmt_fixed(e.s),
        e.lane_id,
        fmt_fixed(e.lat_offset),
        fmt_fixed(e.speed)
    );
    for (i, a) in obs.others.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str("{\"id\":");
        push_str_json(&mut out, &a.id);
        let _ = write!(
            out,
            ",\"s\":{},\"lane_id\":{},\"lat_offset\":{},\"speed\":{}}}",
            fmt_fixed(a.s),
            a.lane_id,
            fmt_fixed(a.lat_offset),
            fmt_fixed(a.speed)
        );
    }
    out.push_str("],\"road\":");
    push_road(&mut out, &obs.road);
    out.push_str("}\n");
    out
}

/// Encodes the observation of `ego_id` in `world`. Returns `None` when the
/// ego is not in the world.
pub fn encode_observation(world: &WorldState, ego_id: &str) -> Option<String> {
    Observation::from_world(world, ego_id).map(|o| encode_observation_msg(&o))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationWire {
    #[serde(rename = "type")]
    kind: String,
    t: f64,
    ego: EgoObservation,
    others: Vec<AgentObservation>,
    road: RoadObservation,
}

pub fn decode_observation(line: &str) -> Result<Observation, ProtocolError> {
    let wire: ObservationWire =
        serde_json::from_str(line.trim_end()).map_err(|e| ProtocolError::new(format!("malformed observation: {e}")))?;
    if wire.kind != "obs" {
        return Err(ProtocolError::new(format!("expected obs message, got `{}`", wire.kind)));
    }
    Ok(Observation {
        t: wire.t,
        ego: wire.ego,
        others: wire.others,
        road: wire.road,
    })
}

/// The line the harness sends after a candidate reports ready.
pub fn encode_road(road: &RoadSpec) -> String {
    let mut out = String::from("{\"type\":\"road\",\"drivable_lanes\":");
    push_lanes(&mut out, &road.drivable_lanes);
    let _ = writeln!(out, ",\"lane_width\":{}}}", fmt_fixed(road.lane_width));
    out
}

/// Canonical control line, as a well-behaved candidate would print it.
pub fn encode_control(req: &ControlRequest) -> String {
    let ts = match req.target_speed {
        Some(v) => fmt_fixed(v),
        None => "null".to_owned(),
    };
    format!(
        "{{\"brake\":{},\"target_speed\":{},\"switch_lane\":{}}}\n",
        req.brake, ts, req.switch_lane
    )
}

/// Parses a candidate's reply.
///
/// Every key is optional and defaults to "no action"; unknown keys, wrong
/// types and out-of-range lane requests are protocol violations. The second
/// element lists every channel carrying a non-default value, regardless of
/// which channels the function is allowed to drive.
pub fn decode_control(message: &[u8]) -> Result<(ControlRequest, Channels), ProtocolError> {
    if message.len() > MAX_LINE_BYTES {
        return Err(ProtocolError::new("reply line too long"));
    }
    let text = std::str::from_utf8(message).map_err(|_| ProtocolError::new("reply is not valid UTF-8"))?;
    let text = text.trim_end_matches(['\n', '\r']);
    if text.trim().is_empty() {
        return Err(ProtocolError::new("empty reply"));
    }
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ProtocolError::new(format!("malformed reply: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ProtocolError::new("reply must be a JSON object"))?;

    let mut req = ControlRequest::default();
    for (key, v) in obj {
        match key.as_str() {
            "brake" => {
                req.brake = v
                    .as_bool()
                    .ok_or_else(|| ProtocolError::new("brake must be a boolean"))?;
            }
            "target_speed" => {
                if !v.is_null() {
                    let ts = v
                        .as_f64()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| ProtocolError::new("target_speed must be a finite number or null"))?;
                    req.target_speed = Some(ts);
                }
            }
            "switch_lane" => {
                let lane = v
                    .as_i64()
                    .ok_or_else(|| ProtocolError::new("switch_lane must be an integer"))?;
                if !(-1..=1).contains(&lane) {
                    return Err(ProtocolError::new("switch_lane out of range"));
                }
                req.switch_lane = lane as i32;
            }
            other => return Err(ProtocolError::new(format!("unknown field `{other}`"))),
        }
    }
    let touched = req.touched();
    Ok((req, touched))
}

/// Checks the first line a candidate prints.
pub fn check_ready(line: &[u8]) -> Result<(), ProtocolError> {
    match std::str::from_utf8(line) {
        Ok(s) if s.trim() == READY_LINE => Ok(()),
        Ok(s) => {
            let mut shown: String = s.trim().chars().take(80).collect();
            if shown.is_empty() {
                shown.push_str("<empty>");
            }
            Err(ProtocolError::new(format!("expected `ready`, got `{shown}`")))
        }
        Err(_) => Err(ProtocolError::new("expected `ready`, got non-UTF-8 bytes")),
    }
}
