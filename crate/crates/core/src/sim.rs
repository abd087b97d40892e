//! Fixed-timestep kinematics for vehicles on a straight multi-lane road.
//!
//! Lane ids are signed integers; a larger id is further left. The lateral
//! coordinate of a lane center is `lane_id * lane_width`, so a positive
//! `lat_offset` points left of the current lane center.
//!
//! Longitudinal motion is forward Euler (`ds = v*dt`, then `v += a*dt`,
//! clamped at zero). Lane changes interpolate the lateral offset linearly
//! over [`LANE_CHANGE_DURATION`]; a request that arrives while a maneuver
//! is running compounds onto it instead of being dropped, so two requests in
//! the same direction always move a vehicle two lanes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::ControlRequest;

/// Simulation tick length (s).
pub const DT: f64 = 0.05;
/// Magnitude of full braking (m/s²).
pub const MAX_BRAKE: f64 = 8.0;
/// Largest commanded acceleration (m/s²).
pub const MAX_ACCEL: f64 = 3.0;
/// Duration of a single-lane change (s).
pub const LANE_CHANGE_DURATION: f64 = 2.0;
/// Proportional gain of the target-speed tracker (1/s).
pub const SPEED_GAIN: f64 = 1.0;
pub const VEHICLE_LENGTH: f64 = 5.0;
pub const VEHICLE_WIDTH: f64 = 2.0;
pub const DEFAULT_LANE_WIDTH: f64 = 3.5;
pub const DEFAULT_ROAD_LENGTH: f64 = 2000.0;

const PROGRESS_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("drivable lanes must be a non-empty contiguous range, got {0:?}")]
    DrivableLanes(Vec<i32>),
    #[error("lane width must be positive, got {0}")]
    LaneWidth(f64),
    #[error("duplicate vehicle id `{0}`")]
    DuplicateId(String),
    #[error("world has no vehicles")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSpec {
    /// Ascending, contiguous.
    pub drivable_lanes: Vec<i32>,
    pub lane_width: f64,
    pub length: f64,
}

impl RoadSpec {
    pub fn new(first: i32, last: i32, lane_width: f64, length: f64) -> Result<Self, SimError> {
        let (lo, hi) = if first <= last { (first, last) } else { (last, first) };
        Self::from_lanes((lo..=hi).collect(), lane_width, length)
    }

    pub fn from_lanes(mut lanes: Vec<i32>, lane_width: f64, length: f64) -> Result<Self, SimError> {
        lanes.sort_unstable();
        lanes.dedup();
        let contiguous = lanes.windows(2).all(|w| w[1] == w[0] + 1);
        if lanes.is_empty() || !contiguous {
            return Err(SimError::DrivableLanes(lanes));
        }
        if !(lane_width > 0.0 && lane_width.is_finite()) {
            return Err(SimError::LaneWidth(lane_width));
        }
        Ok(Self {
            drivable_lanes: lanes,
            lane_width,
            length,
        })
    }

    /// Three-lane highway with lanes -4 (rightmost) to -2 (leftmost).
    pub fn highway() -> Self {
        Self::new(-4, -2, DEFAULT_LANE_WIDTH, DEFAULT_ROAD_LENGTH).expect("static road is valid")
    }

    pub fn is_drivable(&self, lane: i32) -> bool {
        self.drivable_lanes.contains(&lane)
    }

    pub fn leftmost(&self) -> i32 {
        *self.drivable_lanes.last().expect("validated non-empty")
    }

    pub fn rightmost(&self) -> i32 {
        self.drivable_lanes[0]
    }

    pub fn lane_center(&self, lane: i32) -> f64 {
        lane as f64 * self.lane_width
    }

    /// Lane whose center is closest to a lateral coordinate.
    pub fn nearest_lane(&self, y: f64) -> i32 {
        (y / self.lane_width).round() as i32
    }
}

/// In-progress lateral maneuver.
///
/// The offset interpolates from `from_offset` (relative to the vehicle's
/// current `lane_id`) to the center of `target_lane`. `queued` holds further
/// lane shifts requested while this leg was running; they are started as new
/// legs when this one completes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneChange {
    pub target_lane: i32,
    pub progress: f64,
    pub from_offset: f64,
    pub queued: i32,
}

impl LaneChange {
    fn toward(target_lane: i32) -> Self {
        Self {
            target_lane,
            progress: 0.0,
            from_offset: 0.0,
            queued: 0,
        }
    }

    /// Lane the vehicle ends up in once every queued leg has run.
    pub fn final_lane(&self) -> i32 {
        self.target_lane + self.queued
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: String,
    pub s: f64,
    pub lane_id: i32,
    pub lat_offset: f64,
    /// Magnitude; always >= 0. Oncoming vehicles move toward decreasing `s`.
    pub speed: f64,
    /// Acceleration applied during the last step.
    pub accel: f64,
    /// Scripted acceleration. Drives non-ego vehicles; for the ego it is the
    /// fallback when the controller leaves both longitudinal channels unset.
    pub script_accel: f64,
    pub oncoming: bool,
    pub lane_change: Option<LaneChange>,
    pub length: f64,
    pub width: f64,
}

impl VehicleState {
    pub fn new(id: impl Into<String>, s: f64, lane_id: i32, speed: f64) -> Self {
        Self {
            id: id.into(),
            s,
            lane_id,
            lat_offset: 0.0,
            speed,
            accel: 0.0,
            script_accel: 0.0,
            oncoming: false,
            lane_change: None,
            length: VEHICLE_LENGTH,
            width: VEHICLE_WIDTH,
        }
    }

    pub fn lateral_position(&self, road: &RoadSpec) -> f64 {
        road.lane_center(self.lane_id) + self.lat_offset
    }

    /// Signed velocity along the road axis.
    pub fn velocity(&self) -> f64 {
        if self.oncoming {
            -self.speed
        } else {
            self.speed
        }
    }

    /// Requests a one-lane shift: `+1` left, `-1` right.
    ///
    /// With no maneuver running this starts one. During a maneuver the shift
    /// compounds: the final lane moves one further in `dir`. A reversing
    /// request that would cancel the running leg instead aborts it back to
    /// the lane the vehicle started from.
    pub fn request_lane_change(&mut self, dir: i32) {
        if dir == 0 {
            return;
        }
        let dir = dir.signum();
        match self.lane_change.as_mut() {
            None => self.lane_change = Some(LaneChange::toward(self.lane_id + dir)),
            Some(lc) => {
                let new_final = lc.final_lane() + dir;
                let running_forward = lc.target_lane != self.lane_id;
                if running_forward && lc.queued == 0 && new_final == self.lane_id {
                    *lc = LaneChange {
                        target_lane: self.lane_id,
                        progress: 0.0,
                        from_offset: self.lat_offset,
                        queued: 0,
                    };
                } else {
                    lc.queued = new_final - lc.target_lane;
                }
            }
        }
    }
}

/// Forward-Euler longitudinal update. Returns the new speed and distance
/// covered during the tick.
pub fn step_longitudinal(v: f64, a_cmd: f64, dt: f64) -> (f64, f64) {
    let ds = v * dt;
    let v_next = (v + a_cmd * dt).max(0.0);
    (v_next, ds)
}

/// Advances an in-progress lane change by one tick.
pub fn step_lateral(vehicle: &VehicleState, dt: f64, road: &RoadSpec) -> VehicleState {
    let mut out = vehicle.clone();
    let Some(mut lc) = out.lane_change.take() else {
        return out;
    };
    lc.progress = (lc.progress + dt / LANE_CHANGE_DURATION).min(1.0);
    if lc.progress >= 1.0 - PROGRESS_EPS {
        out.lane_id = lc.target_lane;
        out.lat_offset = 0.0;
        if lc.queued != 0 {
            let step = lc.queued.signum();
            out.lane_change = Some(LaneChange {
                target_lane: lc.target_lane + step,
                progress: 0.0,
                from_offset: 0.0,
                queued: lc.queued - step,
            });
        }
    } else {
        let span = (lc.target_lane - out.lane_id) as f64 * road.lane_width;
        out.lat_offset = lc.from_offset + lc.progress * (span - lc.from_offset);
        out.lane_change = Some(lc);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick: u64,
    pub dt: f64,
    /// Ego first.
    pub vehicles: Vec<VehicleState>,
    pub road: RoadSpec,
}

impl WorldState {
    pub fn new(vehicles: Vec<VehicleState>, road: RoadSpec, dt: f64) -> Result<Self, SimError> {
        if vehicles.is_empty() {
            return Err(SimError::Empty);
        }
        for (i, v) in vehicles.iter().enumerate() {
            if vehicles[..i].iter().any(|o| o.id == v.id) {
                return Err(SimError::DuplicateId(v.id.clone()));
            }
        }
        Ok(Self {
            tick: 0,
            dt,
            vehicles,
            road,
        })
    }

    pub fn t(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn ego(&self) -> &VehicleState {
        &self.vehicles[0]
    }

    pub fn vehicle(&self, id: &str) -> Option<&VehicleState> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn vehicle_mut(&mut self, id: &str) -> Option<&mut VehicleState> {
        self.vehicles.iter_mut().find(|v| v.id == id)
    }
}

/// Acceleration the ego applies for a control request.
pub fn resolve_ego_accel(ego: &VehicleState, request: &ControlRequest) -> f64 {
    if request.brake {
        -MAX_BRAKE
    } else if let Some(target) = request.target_speed {
        // Negative targets are representable on the wire; physically they
        // just mean "stop".
        (SPEED_GAIN * (target.max(0.0) - ego.speed)).clamp(-MAX_BRAKE, MAX_ACCEL)
    } else {
        ego.script_accel
    }
}

/// Advances the world one tick with the ego following `ego_request` and
/// every other vehicle following its scripted acceleration.
pub fn step_world(world: &WorldState, ego_request: &ControlRequest, dt: f64) -> WorldState {
    let mut next = world.clone();
    for (i, vehicle) in next.vehicles.iter_mut().enumerate() {
        if i == 0 {
            vehicle.accel = resolve_ego_accel(vehicle, ego_request);
            if ego_request.switch_lane != 0 {
                vehicle.request_lane_change(ego_request.switch_lane);
            }
        } else {
            vehicle.accel = vehicle.script_accel;
        }
        let (v_next, ds) = step_longitudinal(vehicle.speed, vehicle.accel, dt);
        vehicle.s += if vehicle.oncoming { -ds } else { ds };
        vehicle.speed = v_next;
        *vehicle = step_lateral(vehicle, dt, &world.road);
    }
    next.tick += 1;
    next
}

/// Strict rectangle overlap of two vehicle footprints.
pub fn footprints_overlap(a: &VehicleState, b: &VehicleState, road: &RoadSpec) -> bool {
    let ds = (a.s - b.s).abs();
    let dy = (a.lateral_position(road) - b.lateral_position(road)).abs();
    ds < (a.length + b.length) / 2.0 && dy < (a.width + b.width) / 2.0
}

/// All colliding vehicle pairs, each reported once in world order.
pub fn detect_collision(world: &WorldState) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    for (i, a) in world.vehicles.iter().enumerate() {
        for b in &world.vehicles[i + 1..] {
            if footprints_overlap(a, b, &world.road) {
                pairs.push((a.id.clone(), b.id.clone()));
            }
        }
    }
    pairs
}
