//! Cut-in calibration: choose the gap at which a cutting-in vehicle settles
//! so that full braking must start within a given time-to-brake.

use serde::{Deserialize, Serialize};

use crate::sim::{footprints_overlap, step_longitudinal, RoadSpec, VehicleState, DT, MAX_BRAKE};

use super::ScenarioError;

/// Lead deceleration right after the cut-in completes (m/s²).
pub const LEAD_DECEL: f64 = -6.0;
/// How much faster than the ego the cutter drives while overtaking (m/s).
pub const LEAD_OVERSPEED: f64 = 2.0;
const MAX_GAP: f64 = 200.0;
const BISECT_ITERS: usize = 100;
const MAX_TICKS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutinParams {
    pub ego_speed: f64,
    pub lead_overspeed: f64,
    /// Bumper-to-bumper gap when the cut-in completes (m).
    pub gap_at_cutin: f64,
    pub lead_decel: f64,
}

/// Simulates ego and lead in one lane from the moment of cut-in: both at
/// `ego_speed`, lead `gap` metres ahead (bumper to bumper) and decelerating
/// at `lead_decel`; the ego holds speed and brakes fully from tick
/// `onset_tick` on. Returns true when they never collide.
pub fn brake_onset_is_safe(ego_speed: f64, gap: f64, lead_decel: f64, onset_tick: usize) -> bool {
    let road = RoadSpec::highway();
    let mut ego = VehicleState::new("ego", 0.0, -3, ego_speed);
    let mut lead = VehicleState::new("lead", 0.0, -3, ego_speed);
    lead.s = gap + (ego.length + lead.length) / 2.0;
    for tick in 0..MAX_TICKS {
        if footprints_overlap(&ego, &lead, &road) {
            return false;
        }
        if ego.speed == 0.0 && lead.speed == 0.0 {
            return true;
        }
        // Once the ego is no faster than the lead and no longer accelerating
        // relative to it, the gap can only grow.
        if tick >= onset_tick && ego.speed <= lead.speed && -MAX_BRAKE <= lead_decel {
            return true;
        }
        let a_ego = if tick >= onset_tick { -MAX_BRAKE } else { 0.0 };
        let (ve, dse) = step_longitudinal(ego.speed, a_ego, DT);
        let (vl, dsl) = step_longitudinal(lead.speed, lead_decel, DT);
        ego.s += dse;
        ego.speed = ve;
        lead.s += dsl;
        lead.speed = vl;
    }
    true
}

/// Largest brake-onset tick that still avoids a collision, or `None` if even
/// immediate braking collides.
pub fn max_safe_onset_ticks(ego_speed: f64, gap: f64, lead_decel: f64) -> Option<usize> {
    if !brake_onset_is_safe(ego_speed, gap, lead_decel, 0) {
        return None;
    }
    let mut k = 0;
    while k < MAX_TICKS && brake_onset_is_safe(ego_speed, gap, lead_decel, k + 1) {
        k += 1;
    }
    Some(k)
}

/// Smallest gap in (0, MAX_GAP] for which braking at `onset_tick` is safe.
fn min_safe_gap(ego_speed: f64, lead_decel: f64, onset_tick: usize) -> Option<f64> {
    if !brake_onset_is_safe(ego_speed, MAX_GAP, lead_decel, onset_tick) {
        return None;
    }
    let (mut lo, mut hi) = (0.0, MAX_GAP);
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        if brake_onset_is_safe(ego_speed, mid, lead_decel, onset_tick) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Finds the cut-in gap at which the latest collision-free brake onset is
/// `ttb_target` (rounded to whole ticks).
///
/// The gap is placed midway between the smallest gap that tolerates an
/// onset of `n` ticks and the smallest that tolerates `n + 1`, so onset `n`
/// is safe and `n + 1` collides with margin on both sides.
pub fn solve_cutin_parameters(ego_speed: f64, ttb_target: f64) -> Result<CutinParams, ScenarioError> {
    if !(ego_speed > 0.0 && ego_speed.is_finite()) {
        return Err(ScenarioError::InvalidCutin(format!(
            "ego speed must be positive, got {ego_speed}"
        )));
    }
    if !(ttb_target > 0.0 && ttb_target.is_finite()) {
        return Err(ScenarioError::InvalidCutin(format!(
            "time-to-brake must be positive, got {ttb_target}"
        )));
    }
    let infeasible = || ScenarioError::Infeasible {
        ego_speed,
        ttb: ttb_target,
    };
    let n = (ttb_target / DT).round() as usize;
    let lower = min_safe_gap(ego_speed, LEAD_DECEL, n).ok_or_else(infeasible)?;
    let upper = min_safe_gap(ego_speed, LEAD_DECEL, n + 1).unwrap_or(MAX_GAP);
    let gap = 0.5 * (lower + upper);
    if max_safe_onset_ticks(ego_speed, gap, LEAD_DECEL) != Some(n) {
        return Err(infeasible());
    }
    Ok(CutinParams {
        ego_speed,
        lead_overspeed: LEAD_OVERSPEED,
        gap_at_cutin: gap,
        lead_decel: LEAD_DECEL,
    })
}
