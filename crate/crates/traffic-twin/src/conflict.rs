//! Spatio-temporal conflict handling between planned trajectories.
//!
//! Two policies live here. The optimized one detects the first co-timestamp
//! at which two plans violate minimum separation and replans the
//! lower-priority car with a terminal-speed line search, so traffic keeps
//! flowing. The baseline is a first-come-first-served gate: the first car to
//! hit a checkpoint claims the whole conflict zone and everyone else holds at
//! the boundary until it clears.

use crate::error::{Error, Result};
use crate::frenet::FrenetState;
use crate::map::{NodeId, NodeKind, Path, RoadGraph};
use crate::math::{angle_diff, Point2};
use crate::planner::{plan_scaled, Obstacle, PlannerParams, Trajectory};
use crate::CarId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConflictKind {
    RearEnd,
    Crossing,
    Merging,
}

/// First separation violation between a pair of planned trajectories.
/// `frame_index` indexes `car_a`'s frames (all trajectories in a planning
/// round share the same start time).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conflict {
    pub car_a: CarId,
    pub car_b: CarId,
    pub frame_index: usize,
    pub distance: f64,
    pub kind: ConflictKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityRule {
    /// Earlier predicted arrival at the conflict zone wins; ties to lower id.
    EarlierArrival,
    LowerId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparationParams {
    /// Minimum center-to-center separation, m.
    pub d_safe: f64,
    pub priority_rule: PriorityRule,
    /// Extra headroom used when *planning*, on top of `d_safe`, absorbing
    /// tracking error, pose noise, and command latency at execution time.
    pub plan_margin: f64,
}

impl Default for SeparationParams {
    fn default() -> Self {
        SeparationParams {
            d_safe: 1.2,
            priority_rule: PriorityRule::EarlierArrival,
            plan_margin: 0.6,
        }
    }
}

impl SeparationParams {
    pub fn validate(&self, vehicle_length: f64) -> Result<()> {
        if self.d_safe <= vehicle_length {
            return Err(Error::config(format!(
                "d_safe {} must exceed vehicle length {vehicle_length}",
                self.d_safe
            )));
        }
        if self.plan_margin < 0.0 {
            return Err(Error::config("plan_margin must be >= 0"));
        }
        Ok(())
    }

    /// Separation threshold used while planning.
    pub fn planning_threshold(&self) -> f64 {
        self.d_safe + self.plan_margin
    }
}

/// Route knowledge used to classify conflict kinds. Without it, kinds fall
/// back to a heading heuristic (aligned headings read as rear-end).
pub struct RouteContext<'a> {
    pub graph: &'a RoadGraph,
    pub paths: &'a BTreeMap<CarId, Arc<Path>>,
    pub merge_lookahead: f64,
}

/// Everything needed to replan one car against a frozen world snapshot.
#[derive(Debug, Clone)]
pub struct PlanInput {
    pub path: Arc<Path>,
    pub fs: FrenetState,
    pub leader: Option<FrenetState>,
    pub obstacles: Vec<Obstacle>,
    pub speed_limit: f64,
    pub start_time: f64,
}

/// Compare `traj` against every other trajectory at equal absolute
/// timestamps and report the first violating index per pair, ordered by
/// (car_a, car_b).
pub fn detect(
    traj: &Trajectory,
    all: &[Trajectory],
    p: &SeparationParams,
    ctx: Option<&RouteContext>,
) -> Result<Vec<Conflict>> {
    detect_threshold(traj, all, p.d_safe, ctx)
}

fn detect_threshold(
    traj: &Trajectory,
    all: &[Trajectory],
    threshold: f64,
    ctx: Option<&RouteContext>,
) -> Result<Vec<Conflict>> {
    let mut out = Vec::new();
    for other in all {
        if other.car_id == traj.car_id {
            continue;
        }
        if let Some(c) = first_violation(traj, other, threshold, ctx)? {
            out.push(c);
        }
    }
    out.sort_by_key(|c| (c.car_a, c.car_b));
    Ok(out)
}

/// First co-timestamp violation between two trajectories, if any.
fn first_violation(
    a: &Trajectory,
    b: &Trajectory,
    threshold: f64,
    ctx: Option<&RouteContext>,
) -> Result<Option<Conflict>> {
    if (a.dt - b.dt).abs() > 1e-12 {
        return Err(Error::MismatchedDt(a.dt, b.dt));
    }
    // Align frames to the shared simulation clock.
    let shift = (b.start_time - a.start_time) / a.dt;
    if (shift - shift.round()).abs() > 1e-6 {
        return Err(Error::invalid(
            "trajectories not aligned to a common frame clock",
        ));
    }
    let shift = shift.round() as i64;

    let (car_a, car_b, swap) = if a.car_id < b.car_id {
        (a.car_id, b.car_id, false)
    } else {
        (b.car_id, a.car_id, true)
    };

    for ia in 0..a.frames.len() {
        let ib = ia as i64 - shift;
        if ib < 0 {
            continue;
        }
        let ib = ib as usize;
        if ib >= b.frames.len() {
            break;
        }
        let pa = a.frame_position(ia);
        let pb = b.frame_position(ib);
        let distance = pa.dist(pb);
        if distance < threshold {
            let frame_index = if swap { ib } else { ia };
            let kind = classify_kind(a, ia, b, ib, ctx);
            return Ok(Some(Conflict {
                car_a,
                car_b,
                frame_index,
                distance,
                kind,
            }));
        }
    }
    Ok(None)
}

fn classify_kind(
    a: &Trajectory,
    ia: usize,
    b: &Trajectory,
    ib: usize,
    ctx: Option<&RouteContext>,
) -> ConflictKind {
    let fa = &a.frames[ia];
    let fb = &b.frames[ib];
    if let Some(ctx) = ctx {
        let edge_a = ctx
            .paths
            .get(&a.car_id)
            .and_then(|p| p.edge_id_at(fa.s).cloned());
        let edge_b = ctx
            .paths
            .get(&b.car_id)
            .and_then(|p| p.edge_id_at(fb.s).cloned());
        if let (Some(ea), Some(eb)) = (&edge_a, &edge_b) {
            if ea == eb && angle_diff(fa.heading, fb.heading) < std::f64::consts::FRAC_PI_2 {
                return ConflictKind::RearEnd;
            }
        }
        let (Some(pa), Some(pb)) = (ctx.paths.get(&a.car_id), ctx.paths.get(&b.car_id)) else {
            return heading_kind(fa.heading, fb.heading);
        };
        let na = downstream_nodes(pa, fa.s, ctx.merge_lookahead, ctx.graph);
        let nb = downstream_nodes(pb, fb.s, ctx.merge_lookahead, ctx.graph);
        if na.iter().any(|n| nb.contains(n)) {
            return ConflictKind::Merging;
        }
        ConflictKind::Crossing
    } else {
        heading_kind(fa.heading, fb.heading)
    }
}

fn heading_kind(ha: f64, hb: f64) -> ConflictKind {
    if angle_diff(ha, hb) < std::f64::consts::FRAC_PI_4 {
        ConflictKind::RearEnd
    } else {
        ConflictKind::Crossing
    }
}

fn downstream_nodes(path: &Path, s: f64, lookahead: f64, graph: &RoadGraph) -> Vec<NodeId> {
    let mut out = Vec::new();
    for seg in &path.segments {
        if seg.s_end >= s && seg.s_end - s <= lookahead {
            if let Ok(edge) = graph.edge(&seg.edge_id) {
                out.push(edge.to.clone());
            }
        }
    }
    out
}

/// Minimum pairwise distance between two aligned trajectories over their
/// co-timestamps (infinite when the windows do not overlap).
pub fn min_separation(a: &Trajectory, b: &Trajectory) -> f64 {
    let shift = ((b.start_time - a.start_time) / a.dt).round() as i64;
    let mut min = f64::INFINITY;
    for ia in 0..a.frames.len() {
        let ib = ia as i64 - shift;
        if ib < 0 {
            continue;
        }
        if ib as usize >= b.frames.len() {
            break;
        }
        min = min.min(a.frame_position(ia).dist(b.frame_position(ib as usize)));
    }
    min
}

/// Distance at the first co-timestamp (the pair's current separation).
fn initial_separation(a: &Trajectory, b: &Trajectory) -> f64 {
    let shift = ((b.start_time - a.start_time) / a.dt).round() as i64;
    for ia in 0..a.frames.len() {
        let ib = ia as i64 - shift;
        if ib < 0 {
            continue;
        }
        if ib as usize >= b.frames.len() {
            break;
        }
        return a.frame_position(ia).dist(b.frame_position(ib as usize));
    }
    f64::INFINITY
}

/// Separation a pair is held to during resolution: the planning threshold,
/// except that a pair already closer than it (a settled queue, say) is only
/// required not to get closer. Plans can never be asked to undo the present.
fn pair_requirement(a: &Trajectory, b: &Trajectory, threshold: f64) -> f64 {
    threshold.min(initial_separation(a, b))
}

const MAX_RESOLUTION_ROUNDS: usize = 10;
const LAMBDA_STEPS: usize = 10;

/// Replan `yielder` so it keeps `planning_threshold()` separation from every
/// other trajectory: a line search over terminal-speed scale factors, largest
/// feasible first, falling back to a stop short of the conflict zone.
pub fn replan(
    yielder: CarId,
    conflict: &Conflict,
    inputs: &BTreeMap<CarId, PlanInput>,
    trajectories: &[Trajectory],
    p: &SeparationParams,
    params: &PlannerParams,
    ctx: Option<&RouteContext>,
) -> Result<Trajectory> {
    let input = inputs
        .get(&yielder)
        .ok_or_else(|| Error::invalid(format!("no plan input for {yielder}")))?;
    let own = trajectories
        .iter()
        .find(|t| t.car_id == yielder)
        .ok_or_else(|| Error::invalid(format!("no trajectory for {yielder}")))?;

    let stop_bound = yield_stop_bound(yielder, conflict, input, own, p, params, ctx);

    let threshold = p.planning_threshold();
    for step in 0..LAMBDA_STEPS {
        let lambda = 1.0 - step as f64 / LAMBDA_STEPS as f64;
        let candidate = plan_scaled(
            &input.path,
            &input.fs,
            params,
            input.leader.as_ref(),
            &input.obstacles,
            input.speed_limit,
            lambda,
            None,
            yielder,
            input.start_time,
        )?;
        let clear = trajectories.iter().filter(|t| t.car_id != yielder).all(|t| {
            min_separation(&candidate, t) >= pair_requirement(&candidate, t, threshold) - 1e-9
        });
        if clear {
            return Ok(candidate);
        }
    }
    // Guaranteed fallback: stop before the conflict zone.
    plan_scaled(
        &input.path,
        &input.fs,
        params,
        input.leader.as_ref(),
        &input.obstacles,
        input.speed_limit,
        0.0,
        Some(stop_bound),
        yielder,
        input.start_time,
    )
}

/// Iterate detect/replan in priority order until the buffer is conflict-free
/// at the planning threshold or the round limit hits, then force stops on any
/// still-conflicting lower-priority cars.
pub fn resolve_all(
    trajectories: &mut [Trajectory],
    inputs: &BTreeMap<CarId, PlanInput>,
    p: &SeparationParams,
    params: &PlannerParams,
    ctx: Option<&RouteContext>,
) -> Result<()> {
    let threshold = p.planning_threshold();
    for _round in 0..MAX_RESOLUTION_ROUNDS {
        let conflicts = all_conflicts(trajectories, threshold, ctx)?;
        if conflicts.is_empty() {
            return Ok(());
        }
        for c in conflicts {
            let (ia, ib) = match (index_of(trajectories, c.car_a), index_of(trajectories, c.car_b))
            {
                (Some(a), Some(b)) => (a, b),
                _ => continue,
            };
            // The buffer may have changed since this conflict was recorded.
            let required = pair_requirement(&trajectories[ia], &trajectories[ib], threshold);
            if min_separation(&trajectories[ia], &trajectories[ib]) >= required - 1e-9 {
                continue;
            }
            let mut yielder = lower_priority(&c, &trajectories[ia], &trajectories[ib], p);
            if !inputs.contains_key(&yielder) {
                // Not replannable this cycle (no fresh state); try the other.
                let other = if yielder == c.car_a { c.car_b } else { c.car_a };
                if !inputs.contains_key(&other) {
                    continue;
                }
                yielder = other;
            }
            let new = replan(yielder, &c, inputs, trajectories, p, params, ctx)?;
            let slot = index_of(trajectories, yielder).unwrap();
            trajectories[slot] = new;
        }
    }

    // Round limit exhausted: lower-priority cars of the remaining conflicts
    // get unconditional stop trajectories.
    let remaining = all_conflicts(trajectories, threshold, ctx)?;
    for c in remaining {
        let (Some(ia), Some(ib)) = (index_of(trajectories, c.car_a), index_of(trajectories, c.car_b))
        else {
            continue;
        };
        let yielder = lower_priority(&c, &trajectories[ia], &trajectories[ib], p);
        if let Some(input) = inputs.get(&yielder) {
            let own = &trajectories[index_of(trajectories, yielder).unwrap()];
            let stop_bound = yield_stop_bound(yielder, &c, input, own, p, params, ctx);
            let stopped = plan_scaled(
                &input.path,
                &input.fs,
                params,
                input.leader.as_ref(),
                &input.obstacles,
                input.speed_limit,
                0.0,
                Some(stop_bound),
                yielder,
                input.start_time,
            )?;
            let slot = index_of(trajectories, yielder).unwrap();
            trajectories[slot] = stopped;
        }
    }
    Ok(())
}

/// Where a yielder must stop: clear of the conflict point, and — when the
/// conflict sits inside an intersection the yielder has not entered yet —
/// short of the entry node, so the box never fills with stopped cars.
fn yield_stop_bound(
    _yielder: CarId,
    conflict: &Conflict,
    input: &PlanInput,
    own: &Trajectory,
    p: &SeparationParams,
    params: &PlannerParams,
    ctx: Option<&RouteContext>,
) -> f64 {
    let conflict_s = own
        .frames
        .get(conflict.frame_index.min(own.frames.len() - 1))
        .map(|f| f.s)
        .unwrap_or(input.fs.s);
    let clearance = p.d_safe.max(params.standstill_gap) + 0.1;
    let mut bound = conflict_s - clearance;
    if let Some(ctx) = ctx {
        for seg in &input.path.segments {
            let Ok(edge) = ctx.graph.edge(&seg.edge_id) else { continue };
            let Ok(node) = ctx.graph.node(&edge.to) else { continue };
            if node.kind == NodeKind::IntersectionEntry
                && seg.s_end > input.fs.s + 0.01
                && seg.s_end <= conflict_s
            {
                bound = bound.min(seg.s_end - params.standstill_gap);
                break;
            }
        }
    }
    bound
}

fn all_conflicts(
    trajectories: &[Trajectory],
    threshold: f64,
    ctx: Option<&RouteContext>,
) -> Result<Vec<Conflict>> {
    let mut out = Vec::new();
    for (i, a) in trajectories.iter().enumerate() {
        for b in &trajectories[i + 1..] {
            let required = pair_requirement(a, b, threshold);
            if let Some(c) = first_violation(a, b, required - 1e-9, ctx)? {
                out.push(c);
            }
        }
    }
    out.sort_by_key(|c| (c.car_a, c.car_b));
    Ok(out)
}

fn index_of(trajectories: &[Trajectory], car: CarId) -> Option<usize> {
    trajectories.iter().position(|t| t.car_id == car)
}

/// The car that must yield under the configured priority rule.
fn lower_priority(c: &Conflict, ta: &Trajectory, tb: &Trajectory, p: &SeparationParams) -> CarId {
    match p.priority_rule {
        PriorityRule::LowerId => c.car_b,
        PriorityRule::EarlierArrival => {
            let (a, b) = if ta.car_id == c.car_a { (ta, tb) } else { (tb, ta) };

            // Following the same lane: the car behind yields.
            if c.kind == ConflictKind::RearEnd {
                let idx_a = c.frame_index.min(a.frames.len() - 1);
                let fa = &a.frames[idx_a];
                let dir = Point2::from_angle(fa.heading);
                let shift = ((b.start_time - a.start_time) / a.dt).round() as i64;
                let idx_b = ((idx_a as i64 - shift).max(0) as usize).min(b.frames.len() - 1);
                let rel = b.frame_position(idx_b) - a.frame_position(idx_a);
                return if rel.dot(dir) > 0.0 { c.car_a } else { c.car_b };
            }

            // Whoever first comes within the violating distance of the other
            // car's swept path has arrived at the conflict zone. A car
            // already parked in the zone has arrived at index 0.
            let radius = c.distance.max(p.d_safe);
            let arrival = |x: &Trajectory, other: &Trajectory| {
                x.frames
                    .iter()
                    .position(|f| polyline_distance(other, Point2::new(f.x, f.y)) <= radius)
                    .unwrap_or(usize::MAX)
            };
            let (aa, ab) = (arrival(a, b), arrival(b, a));
            if aa < ab || (aa == ab && c.car_a < c.car_b) {
                c.car_b
            } else {
                c.car_a
            }
        }
    }
}

/// Distance from a point to the polyline through a trajectory's frames.
fn polyline_distance(t: &Trajectory, p: Point2) -> f64 {
    let mut best = f64::INFINITY;
    for pair in t.frames.windows(2) {
        let a = Point2::new(pair[0].x, pair[0].y);
        let b = Point2::new(pair[1].x, pair[1].y);
        let ab = b - a;
        let len2 = ab.dot(ab);
        let foot = if len2 == 0.0 {
            a
        } else {
            a + ab * ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
        };
        best = best.min(p.dist(foot));
    }
    if t.frames.len() == 1 {
        best = p.dist(Point2::new(t.frames[0].x, t.frames[0].y));
    }
    best
}

/// Per-car command from the first-come-first-served gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateCommand {
    Go,
    /// Hold at the zone boundary: stop `boundary_offset` short of the
    /// checkpoint node at path arclength `checkpoint_s`.
    StopAt { checkpoint_s: f64, boundary_offset: f64 },
}

/// A gated conflict area: entry checkpoints plus the region a claimant must
/// leave before the next car may go.
#[derive(Debug, Clone)]
pub struct FifoZone {
    pub center: Point2,
    pub conflict_radius: f64,
    pub checkpoints: Vec<(NodeId, Point2)>,
}

/// What the gate needs to know about one car this tick.
#[derive(Debug, Clone)]
pub struct GateCarInfo {
    pub position: Point2,
    pub path_s: f64,
    /// Gate checkpoint nodes on this car's path ahead: (node, path arclength).
    pub upcoming: Vec<(NodeId, f64)>,
}

/// First-come-first-served checkpoint gate over intersection entries and
/// merge nodes. Claims persist across ticks; arrival order is strict, with
/// simultaneous arrivals resolved toward the lower car id.
#[derive(Debug)]
pub struct FifoGate {
    pub zone_radius: f64,
    zones: Vec<FifoZone>,
    /// Arrival queue per zone; the front holds the claim.
    queues: Vec<VecDeque<CarId>>,
}

/// Entry nodes within this distance of each other share one conflict zone.
const INTERSECTION_CLUSTER_DIST: f64 = 15.0;

impl FifoGate {
    pub fn new(graph: &RoadGraph, zone_radius: f64) -> Self {
        let mut zones: Vec<FifoZone> = Vec::new();

        // Cluster intersection entries into shared zones.
        let entries: Vec<_> = graph
            .nodes()
            .iter()
            .filter(|n| n.kind == NodeKind::IntersectionEntry)
            .collect();
        let mut assigned = vec![false; entries.len()];
        for i in 0..entries.len() {
            if assigned[i] {
                continue;
            }
            let mut members = vec![i];
            assigned[i] = true;
            let mut grew = true;
            while grew {
                grew = false;
                for j in 0..entries.len() {
                    if assigned[j] {
                        continue;
                    }
                    if members.iter().any(|&m| {
                        entries[m].position.dist(entries[j].position) <= INTERSECTION_CLUSTER_DIST
                    }) {
                        members.push(j);
                        assigned[j] = true;
                        grew = true;
                    }
                }
            }
            let center = members
                .iter()
                .fold(Point2::default(), |acc, &m| acc + entries[m].position)
                * (1.0 / members.len() as f64);
            let spread = members
                .iter()
                .map(|&m| entries[m].position.dist(center))
                .fold(0.0, f64::max);
            zones.push(FifoZone {
                center,
                conflict_radius: spread + zone_radius,
                checkpoints: members
                    .iter()
                    .map(|&m| (entries[m].id.clone(), entries[m].position))
                    .collect(),
            });
        }

        // Each merge node is its own zone.
        for n in graph.nodes() {
            if n.kind == NodeKind::Merge {
                zones.push(FifoZone {
                    center: n.position,
                    conflict_radius: zone_radius,
                    checkpoints: vec![(n.id.clone(), n.position)],
                });
            }
        }

        let queues = vec![VecDeque::new(); zones.len()];
        FifoGate {
            zone_radius,
            zones,
            queues,
        }
    }

    pub fn zones(&self) -> &[FifoZone] {
        &self.zones
    }

    /// Current claimant of each zone, for inspection.
    pub fn claims(&self) -> Vec<Option<CarId>> {
        self.queues.iter().map(|q| q.front().copied()).collect()
    }

    /// Advance claims from current car positions and hand out stop/go
    /// commands. Iteration is in ascending car id, which makes simultaneous
    /// arrivals deterministic.
    pub fn update(&mut self, cars: &BTreeMap<CarId, GateCarInfo>) -> BTreeMap<CarId, GateCommand> {
        // Release: drop queue members that left the conflict area and are no
        // longer at a checkpoint (the front releases its claim by leaving).
        for (zi, zone) in self.zones.iter().enumerate() {
            let radius = self.zone_radius;
            self.queues[zi].retain(|car| {
                let Some(info) = cars.get(car) else { return false };
                let at_checkpoint = zone
                    .checkpoints
                    .iter()
                    .any(|(_, p)| info.position.dist(*p) <= radius);
                let inside = info.position.dist(zone.center) <= zone.conflict_radius;
                at_checkpoint || inside
            });
        }

        // Arrivals: a car entering a checkpoint disc joins the zone queue.
        for (car, info) in cars {
            for (zi, zone) in self.zones.iter().enumerate() {
                let arrived = zone
                    .checkpoints
                    .iter()
                    .any(|(_, p)| info.position.dist(*p) <= self.zone_radius);
                if arrived && !self.queues[zi].contains(car) {
                    self.queues[zi].push_back(*car);
                }
            }
        }

        // Commands: stop short of any upcoming checkpoint whose zone is
        // claimed by someone else.
        let mut out = BTreeMap::new();
        for (car, info) in cars {
            let mut cmd = GateCommand::Go;
            let mut nearest = f64::INFINITY;
            for (node, node_s) in &info.upcoming {
                if *node_s <= info.path_s {
                    continue;
                }
                let Some(zi) = self.zone_of(node) else { continue };
                match self.queues[zi].front() {
                    Some(claimant) if claimant != car => {
                        if *node_s < nearest {
                            nearest = *node_s;
                            cmd = GateCommand::StopAt {
                                checkpoint_s: *node_s,
                                boundary_offset: self.zone_radius,
                            };
                        }
                    }
                    _ => {}
                }
            }
            out.insert(*car, cmd);
        }
        out
    }

    pub fn zone_of(&self, node: &NodeId) -> Option<usize> {
        self.zones
            .iter()
            .position(|z| z.checkpoints.iter().any(|(id, _)| id == node))
    }
}
