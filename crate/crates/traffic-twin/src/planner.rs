//! Per-car trajectory planning in Frenet coordinates.
//!
//! Longitudinal motion is a quintic polynomial from the current state to an
//! ACC-style target at the horizon end; lateral offset converges to the
//! centerline with its own quintic. Obstacles (and red lights, which the
//! manager injects as virtual static obstacles) truncate the target to a stop
//! short of the blockage.

use crate::error::{Error, Result};
use crate::frenet::{to_euclidean, FrenetState};
use crate::map::{NodeKind, Path, RoadGraph};
use crate::math::Point2;
use crate::CarId;
use serde::{Deserialize, Serialize};

/// Planning constants. None of these are physical necessities; they are the
/// digital-scale defaults used across the bundled scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    /// Trajectory horizon, s.
    pub horizon: f64,
    /// Trajectory frame spacing, s.
    pub dt: f64,
    /// Acceleration bound, m/s^2.
    pub a_max: f64,
    /// Braking bound (negative), m/s^2.
    pub a_min: f64,
    /// Gap kept to a stopped leader or obstacle, m (center to center).
    pub standstill_gap: f64,
    /// Speed-proportional following headway, s.
    pub time_headway: f64,
    /// Cruise speed ceiling regardless of edge limits, m/s.
    pub cruise_speed_cap: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            horizon: 4.0,
            dt: 0.1,
            a_max: 2.0,
            a_min: -4.0,
            standstill_gap: 1.0,
            time_headway: 1.0,
            cruise_speed_cap: 3.0,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1.0 {
            return Err(Error::config("planner horizon must be >= 1 s"));
        }
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(Error::config("planner dt must be in (0, 0.1] s"));
        }
        if !(self.a_min < 0.0 && 0.0 < self.a_max) {
            return Err(Error::config("planner needs a_min < 0 < a_max"));
        }
        Ok(())
    }

    /// Acceleration magnitude the sampled profiles stay within.
    fn accel_limit(&self) -> f64 {
        self.a_max.min(-self.a_min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    Static,
    ConstructionZone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub position: Point2,
    pub radius: f64,
    pub kind: ObstacleKind,
}

/// Half-width of the corridor an obstacle must intrude into to block the
/// lane (half a default vehicle width).
const LANE_BLOCK_HALFWIDTH: f64 = 0.25;

/// One sampled point of a planned trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryFrame {
    /// Seconds from trajectory start.
    pub t: f64,
    pub s: f64,
    pub d: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// Longitudinal speed, m/s, >= 0.
    pub v: f64,
    pub a: f64,
}

/// A time-indexed plan for one car, sampled at fixed `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub car_id: CarId,
    /// Simulation clock at frame 0, s.
    pub start_time: f64,
    pub dt: f64,
    pub frames: Vec<TrajectoryFrame>,
    pub horizon: f64,
}

impl Trajectory {
    pub fn end_time(&self) -> f64 {
        self.start_time + self.horizon
    }

    pub fn frame_position(&self, index: usize) -> Point2 {
        let f = &self.frames[index];
        Point2::new(f.x, f.y)
    }

    /// Interpolated (s, d, v) at absolute time `now`, clamped to the frame
    /// range.
    pub fn sample_sd(&self, now: f64) -> (f64, f64, f64) {
        let rel = (now - self.start_time) / self.dt;
        let last = self.frames.len() - 1;
        if rel <= 0.0 {
            let f = &self.frames[0];
            return (f.s, f.d, f.v);
        }
        if rel >= last as f64 {
            let f = &self.frames[last];
            return (f.s, f.d, f.v);
        }
        let k = rel.floor() as usize;
        let frac = rel - k as f64;
        let (a, b) = (&self.frames[k], &self.frames[k + 1]);
        let lerp = |p: f64, q: f64| p + (q - p) * frac;
        (lerp(a.s, b.s), lerp(a.d, b.d), lerp(a.v, b.v))
    }

    /// Interpolated (pose, speed, s) at absolute time `now`, clamped to the
    /// frame range.
    pub fn sample_at(&self, now: f64) -> (crate::math::Pose, f64, f64) {
        let rel = (now - self.start_time) / self.dt;
        let last = self.frames.len() - 1;
        if rel <= 0.0 {
            let f = &self.frames[0];
            return (crate::math::Pose::new(f.x, f.y, f.heading), f.v, f.s);
        }
        if rel >= last as f64 {
            let f = &self.frames[last];
            return (crate::math::Pose::new(f.x, f.y, f.heading), f.v, f.s);
        }
        let k = rel.floor() as usize;
        let frac = rel - k as f64;
        let (a, b) = (&self.frames[k], &self.frames[k + 1]);
        let lerp = |p: f64, q: f64| p + (q - p) * frac;
        let heading = crate::math::wrap_angle(
            a.heading + crate::math::wrap_angle(b.heading - a.heading) * frac,
        );
        (
            crate::math::Pose::new(lerp(a.x, b.x), lerp(a.y, b.y), heading),
            lerp(a.v, b.v),
            lerp(a.s, b.s),
        )
    }
}

/// A quintic polynomial by its six coefficients, lowest order first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuinticPoly {
    pub c: [f64; 6],
}

impl QuinticPoly {
    pub fn position(&self, t: f64) -> f64 {
        let c = &self.c;
        ((((c[5] * t + c[4]) * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0]
    }

    pub fn velocity(&self, t: f64) -> f64 {
        let c = &self.c;
        (((5.0 * c[5] * t + 4.0 * c[4]) * t + 3.0 * c[3]) * t + 2.0 * c[2]) * t + c[1]
    }

    pub fn acceleration(&self, t: f64) -> f64 {
        let c = &self.c;
        ((20.0 * c[5] * t + 12.0 * c[4]) * t + 6.0 * c[3]) * t + 2.0 * c[2]
    }
}

/// Solve for the quintic matching position, velocity, and acceleration at
/// both ends of the interval [0, T].
pub fn quintic_solve(
    s0: f64,
    v0: f64,
    a0: f64,
    s1: f64,
    v1: f64,
    a1: f64,
    t_end: f64,
) -> Result<QuinticPoly> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::invalid(format!("quintic duration must be > 0, got {t_end}")));
    }
    let c0 = s0;
    let c1 = v0;
    let c2 = a0 / 2.0;

    let t = t_end;
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;

    // Remaining three coefficients from the end conditions.
    let m = [
        [t3, t4, t5],
        [3.0 * t2, 4.0 * t3, 5.0 * t4],
        [6.0 * t, 12.0 * t2, 20.0 * t3],
    ];
    let b = [
        s1 - c0 - c1 * t - c2 * t2,
        v1 - c1 - 2.0 * c2 * t,
        a1 - 2.0 * c2,
    ];

    let det = det3(&m);
    let mut cols = [0.0; 3];
    for (i, col) in cols.iter_mut().enumerate() {
        let mut mi = m;
        for r in 0..3 {
            mi[r][i] = b[r];
        }
        *col = det3(&mi) / det;
    }

    Ok(QuinticPoly {
        c: [c0, c1, c2, cols[0], cols[1], cols[2]],
    })
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Longitudinal target (s1, v1, a1) at the horizon end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccTarget {
    pub s1: f64,
    pub v1: f64,
    pub a1: f64,
}

/// Cruise toward the speed limit, or fall in behind a leader with a
/// standstill-plus-headway gap. The leader is predicted at constant speed.
pub fn acc_target(
    ego: &FrenetState,
    leader: Option<&FrenetState>,
    params: &PlannerParams,
    speed_limit: f64,
) -> AccTarget {
    match leader {
        None => {
            let v1 = speed_limit.min(params.cruise_speed_cap);
            let mean = 0.5 * (ego.s_dot.max(0.0) + v1);
            AccTarget {
                s1: ego.s + mean * params.horizon,
                v1,
                a1: 0.0,
            }
        }
        Some(leader) => {
            let v1 = leader.s_dot.max(0.0).min(speed_limit);
            let leader_end = leader.s + leader.s_dot.max(0.0) * params.horizon;
            let s1 = leader_end - (params.standstill_gap + params.time_headway * v1);
            AccTarget {
                s1: s1.max(ego.s),
                v1,
                a1: 0.0,
            }
        }
    }
}

/// Plan a trajectory for one car. See [`plan_scaled`] for the knobs used by
/// conflict replanning; this is the `lambda = 1` case.
#[allow(clippy::too_many_arguments)]
pub fn plan(
    path: &Path,
    fs: &FrenetState,
    params: &PlannerParams,
    leader: Option<&FrenetState>,
    obstacles: &[Obstacle],
    speed_limit: f64,
    car_id: CarId,
    start_time: f64,
) -> Result<Trajectory> {
    plan_scaled(
        path, fs, params, leader, obstacles, speed_limit, 1.0, None, car_id, start_time,
    )
}

/// Plan with the terminal speed scaled by `lambda` in [0, 1] and an optional
/// extra stop bound (path arclength the trajectory must stay short of, gap
/// already applied). `lambda = 0` always yields a stop trajectory, so a
/// result is guaranteed.
#[allow(clippy::too_many_arguments)]
pub fn plan_scaled(
    path: &Path,
    fs: &FrenetState,
    params: &PlannerParams,
    leader: Option<&FrenetState>,
    obstacles: &[Obstacle],
    speed_limit: f64,
    lambda: f64,
    stop_bound: Option<f64>,
    car_id: CarId,
    start_time: f64,
) -> Result<Trajectory> {
    params.validate()?;
    if !fs.is_finite() || fs.s < 0.0 || fs.s > path.total_length + 1e-9 {
        return Err(Error::invalid("frenet state outside path"));
    }

    let mut target = acc_target(fs, leader, params, speed_limit);

    // Static blockages ahead truncate the target to a stop short of them.
    let mut bound = path.total_length;
    if let Some(b) = stop_bound {
        bound = bound.min(b);
    }
    if let Some(s_block) = nearest_blocking_s(path, fs.s, obstacles) {
        bound = bound.min(s_block - params.standstill_gap);
    }
    if target.s1 >= bound {
        target.s1 = bound.max(fs.s);
        target.v1 = 0.0;
    }

    // When the plan degrades to a stop behind a leader, stop short of the
    // leader's *current* position; waiting on its predicted progress could
    // transiently close the gap.
    let leader_cap = leader.map_or(f64::INFINITY, |l| l.s - params.standstill_gap);

    let v0 = fs.s_dot.max(0.0);
    if target.v1 <= 1e-9 || target.s1 <= fs.s + 1e-9 {
        let stop_s = target.s1.min(leader_cap).max(fs.s);
        return sample_stop(path, fs, params, stop_s, speed_limit, car_id, start_time);
    }

    let mut lam = lambda.clamp(0.0, 1.0);
    loop {
        if lam <= 1e-9 {
            let stop_s = (fs.s + comfortable_stop_distance(v0, params))
                .min(target.s1)
                .min(leader_cap)
                .max(fs.s);
            return sample_stop(path, fs, params, stop_s, speed_limit, car_id, start_time);
        }
        let v1 = lam * target.v1;
        let s1 = target
            .s1
            .min(fs.s + 0.5 * (v0 + v1) * params.horizon)
            .max(fs.s);
        let poly = quintic_solve(fs.s, v0, fs.s_ddot, s1, v1, 0.0, params.horizon)?;
        let traj = sample(
            path, fs, params, poly, params.horizon, s1, v1, speed_limit, car_id, start_time,
        )?;
        if leader.map_or(true, |l| leader_envelope_ok(&traj, l, params)) {
            return Ok(traj);
        }
        lam -= 0.1;
    }
}

/// Plan a smooth stop ending at `stop_s` (best effort if already closer than
/// the braking distance allows).
pub fn plan_stop(
    path: &Path,
    fs: &FrenetState,
    params: &PlannerParams,
    stop_s: f64,
    speed_limit: f64,
    car_id: CarId,
    start_time: f64,
) -> Result<Trajectory> {
    params.validate()?;
    sample_stop(path, fs, params, stop_s.max(fs.s), speed_limit, car_id, start_time)
}

fn comfortable_stop_distance(v0: f64, params: &PlannerParams) -> f64 {
    v0 * v0 / params.accel_limit()
}

/// True when every frame keeps the constant-velocity leader prediction at
/// least `standstill_gap` ahead.
fn leader_envelope_ok(traj: &Trajectory, leader: &FrenetState, params: &PlannerParams) -> bool {
    let lv = leader.s_dot.max(0.0);
    traj.frames
        .iter()
        .all(|f| f.s <= leader.s + lv * f.t - params.standstill_gap + 1e-9)
}

/// Path arclength of the nearest obstacle ahead that intrudes into the lane.
fn nearest_blocking_s(path: &Path, ego_s: f64, obstacles: &[Obstacle]) -> Option<f64> {
    let mut nearest: Option<f64> = None;
    for obstacle in obstacles {
        if let Some((s, d)) = crate::frenet::project_point(path, obstacle.position) {
            if s > ego_s && d.abs() <= obstacle.radius + LANE_BLOCK_HALFWIDTH {
                nearest = Some(nearest.map_or(s, |n: f64| n.min(s)));
            }
        }
    }
    nearest
}

const LATERAL_SETTLE_TIME: f64 = 2.0;

#[allow(clippy::too_many_arguments)]
fn sample(
    path: &Path,
    fs: &FrenetState,
    params: &PlannerParams,
    poly: QuinticPoly,
    t_end: f64,
    terminal_s: f64,
    terminal_v: f64,
    speed_limit: f64,
    car_id: CarId,
    start_time: f64,
) -> Result<Trajectory> {
    let t_lat = params.horizon.min(LATERAL_SETTLE_TIME);
    let lateral = quintic_solve(fs.d, fs.d_dot, 0.0, 0.0, 0.0, 0.0, t_lat)?;

    let n = (params.horizon / params.dt).round() as usize;
    let mut frames = Vec::with_capacity(n + 1);
    let mut prev_s = fs.s;
    for k in 0..=n {
        let t = k as f64 * params.dt;
        let (mut s, v, a) = if t <= t_end {
            (poly.position(t), poly.velocity(t), poly.acceleration(t))
        } else {
            (terminal_s + terminal_v * (t - t_end), terminal_v, 0.0)
        };
        let v = v.clamp(0.0, speed_limit);
        s = s.max(prev_s).min(path.total_length);
        prev_s = s;
        let d = if t < t_lat { lateral.position(t) } else { 0.0 };
        let pose = to_euclidean(path, s, d)?;
        frames.push(TrajectoryFrame {
            t,
            s,
            d,
            x: pose.position.x,
            y: pose.position.y,
            heading: pose.heading,
            v,
            a,
        });
    }
    Ok(Trajectory {
        car_id,
        start_time,
        dt: params.dt,
        frames,
        horizon: params.horizon,
    })
}

fn sample_stop(
    path: &Path,
    fs: &FrenetState,
    params: &PlannerParams,
    stop_s: f64,
    speed_limit: f64,
    car_id: CarId,
    start_time: f64,
) -> Result<Trajectory> {
    let v0 = fs.s_dot.max(0.0);
    let distance = (stop_s - fs.s).max(0.0);
    if distance < 1e-9 {
        // Nowhere left to go: hold position.
        let poly = QuinticPoly { c: [fs.s, 0.0, 0.0, 0.0, 0.0, 0.0] };
        return sample(
            path, fs, params, poly, params.horizon, fs.s, 0.0, speed_limit, car_id, start_time,
        );
    }
    // Minimum-jerk stop completing within the horizon. The natural duration
    // covers the distance at mean speed v0/2 (monotone, no overshoot); when
    // there is more room than that, the quintic carries the slack as a
    // forward "bump", capped so its peak acceleration stays within a_max.
    let t_stop = (2.0 * distance / v0.max(0.1))
        .max(2.0 * params.dt)
        .min(params.horizon);
    let bump_cap = params.a_max * t_stop * t_stop / 5.8;
    let covered = distance.min(0.5 * v0 * t_stop + bump_cap);
    let poly = quintic_solve(fs.s, v0, fs.s_ddot, fs.s + covered, 0.0, 0.0, t_stop)?;
    sample(
        path, fs, params, poly, t_stop, fs.s + covered, 0.0, speed_limit, car_id, start_time,
    )
}

/// Region classification at arclength `s` along the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentClass {
    Normal,
    ApproachingMerge,
    ApproachingDiverge,
    InIntersection,
}

/// Default downstream lookahead for junction classification, m.
pub const JUNCTION_LOOKAHEAD: f64 = 8.0;

/// Classify the stretch of path at `s`: inside the intersection, or within
/// `lookahead` of a junction node downstream. Intersection takes precedence
/// over merge, merge over diverge.
pub fn classify_segment(path: &Path, s: f64, graph: &RoadGraph, lookahead: f64) -> SegmentClass {
    if path.is_empty() {
        return SegmentClass::Normal;
    }
    let idx = path.segment_index_at(s);
    if let Ok(edge) = graph.edge(&path.segments[idx].edge_id) {
        let from_kind = graph.node(&edge.from).map(|n| n.kind);
        let to_kind = graph.node(&edge.to).map(|n| n.kind);
        if matches!(from_kind, Ok(NodeKind::IntersectionEntry))
            && matches!(to_kind, Ok(NodeKind::IntersectionExit))
        {
            return SegmentClass::InIntersection;
        }
    }
    let (mut entry, mut merge, mut diverge) = (false, false, false);
    for seg in &path.segments {
        if seg.s_end < s || seg.s_end - s > lookahead {
            continue;
        }
        let Ok(edge) = graph.edge(&seg.edge_id) else { continue };
        let Ok(node) = graph.node(&edge.to) else { continue };
        match node.kind {
            NodeKind::IntersectionEntry => entry = true,
            NodeKind::Merge => merge = true,
            NodeKind::Diverge => diverge = true,
            _ => {}
        }
    }
    if entry {
        SegmentClass::InIntersection
    } else if merge {
        SegmentClass::ApproachingMerge
    } else if diverge {
        SegmentClass::ApproachingDiverge
    } else {
        SegmentClass::Normal
    }
}
