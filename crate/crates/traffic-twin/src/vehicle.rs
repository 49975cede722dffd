//! Vehicle dynamics and tracking: a kinematic bicycle stepped at a fixed dt,
//! a pure-pursuit controller chasing a lookahead point on the commanded
//! trajectory, and Gaussian pose-noise injection standing in for an onboard
//! localization stack.

use crate::error::{Error, Result};
use crate::math::{wrap_angle, Point2};
use crate::planner::Trajectory;
use crate::CarId;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Geometry and actuation limits shared by the fleet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub length: f64,
    pub width: f64,
    /// Steering angle bound, rad.
    pub steer_max: f64,
    /// Acceleration bounds, m/s^2.
    pub a_max: f64,
    pub a_min: f64,
    /// Speed-tracking gain for pure pursuit, 1/s.
    pub k_v: f64,
    /// Pure-pursuit lookahead distance, m.
    pub lookahead: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            wheelbase: 0.6,
            length: 0.9,
            width: 0.5,
            steer_max: 0.6,
            a_max: 2.0,
            a_min: -4.0,
            k_v: 1.5,
            lookahead: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub car_id: CarId,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// Forward speed, m/s, never negative.
    pub v: f64,
    pub steering: f64,
    pub wheelbase: f64,
    pub length: f64,
    pub width: f64,
}

impl VehicleState {
    pub fn at_pose(car_id: CarId, pose: crate::math::Pose, params: &VehicleParams) -> Self {
        VehicleState {
            car_id,
            x: pose.position.x,
            y: pose.position.y,
            heading: pose.heading,
            v: 0.0,
            steering: 0.0,
            wheelbase: params.wheelbase,
            length: params.length,
            width: params.width,
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn pose(&self) -> crate::math::Pose {
        crate::math::Pose::new(self.x, self.y, self.heading)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Control {
    pub accel: f64,
    pub steering: f64,
}

/// Zero-mean Gaussian pose noise applied to broadcast state snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub pos_sigma: f64,
    pub heading_sigma: f64,
    pub enabled: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            pos_sigma: 0.02,
            heading_sigma: 0.01,
            enabled: true,
        }
    }
}

/// Advance the kinematic bicycle one step.
///
/// Steering and acceleration are clamped to the actuator bounds before
/// integration; speed never drops below zero.
pub fn step(state: &VehicleState, u: &Control, dt: f64, params: &VehicleParams) -> VehicleState {
    let steering = u.steering.clamp(-params.steer_max, params.steer_max);
    let accel = u.accel.clamp(params.a_min, params.a_max);
    let mut next = *state;
    next.x += state.v * state.heading.cos() * dt;
    next.y += state.v * state.heading.sin() * dt;
    next.heading = wrap_angle(state.heading + state.v / state.wheelbase * steering.tan() * dt);
    next.v = (state.v + accel * dt).max(0.0);
    next.steering = steering;
    next
}

/// Pure-pursuit tracking of a trajectory.
///
/// The state is projected onto the trajectory frames; the target is the first
/// frame at least `lookahead` meters of arclength further along (last frame
/// if none). Steering chases the target bearing, acceleration tracks the
/// target frame's speed proportionally.
pub fn pure_pursuit(
    state: &VehicleState,
    traj: &Trajectory,
    lookahead: f64,
    params: &VehicleParams,
) -> Result<Control> {
    if traj.frames.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    if lookahead <= 0.0 {
        return Err(Error::invalid("lookahead must be positive"));
    }

    let pos = state.position();
    let nearest = traj
        .frames
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            pos.dist(Point2::new(a.x, a.y))
                .total_cmp(&pos.dist(Point2::new(b.x, b.y)))
        })
        .map(|(i, _)| i)
        .unwrap();

    let s_here = traj.frames[nearest].s;
    let target = traj.frames[nearest..]
        .iter()
        .find(|f| f.s - s_here >= lookahead)
        .unwrap_or_else(|| traj.frames.last().unwrap());

    let alpha = wrap_angle(
        (Point2::new(target.x, target.y) - pos).angle() - state.heading,
    );
    let steering = (2.0 * state.wheelbase * alpha.sin() / lookahead)
        .atan()
        .clamp(-params.steer_max, params.steer_max);
    let accel = (params.k_v * (target.v - state.v)).clamp(params.a_min, params.a_max);
    Ok(Control { accel, steering })
}

/// Apply localization noise to a state snapshot. Disabled models return the
/// input unchanged without consuming randomness.
pub fn perturb<R: Rng>(state: &VehicleState, nm: &NoiseModel, rng: &mut R) -> VehicleState {
    if !nm.enabled {
        return *state;
    }
    let mut out = *state;
    if nm.pos_sigma > 0.0 {
        let n = Normal::new(0.0, nm.pos_sigma).expect("valid sigma");
        out.x += n.sample(rng);
        out.y += n.sample(rng);
    }
    if nm.heading_sigma > 0.0 {
        let n = Normal::new(0.0, nm.heading_sigma).expect("valid sigma");
        out.heading = wrap_angle(out.heading + n.sample(rng));
    }
    out
}
