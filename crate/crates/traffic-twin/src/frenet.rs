//! Transforms between world poses and path-relative (s, d) coordinates.
//!
//! `s` is arclength along the path, `d` the signed lateral offset with left
//! of the travel direction positive. The waypoint chain is used to *locate*
//! the right stretch of path (seeded by the previous tick's `s` when known,
//! falling back to a global scan); the returned coordinates are then refined
//! against the exact edge geometry, so round trips are exact on straights and
//! arcs alike.

use crate::error::{Error, Result};
use crate::map::{EdgeGeometry, Path, PathSegment};
use crate::math::{wrap_angle, Point2, Pose};

/// Poses farther than this from the path are rejected as off-path.
pub const DEFAULT_CORRIDOR: f64 = 2.0;

/// How many waypoints on each side of the previous fix the seeded segment
/// search inspects before falling back to a global scan.
const SEARCH_WINDOW: usize = 5;

/// A vehicle's state expressed relative to a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetState {
    /// Arclength along the path, m.
    pub s: f64,
    /// Signed lateral offset, m, left of travel positive.
    pub d: f64,
    /// Longitudinal speed, m/s.
    pub s_dot: f64,
    /// Lateral speed, m/s.
    pub d_dot: f64,
    /// Longitudinal acceleration, m/s^2.
    pub s_ddot: f64,
}

impl FrenetState {
    pub fn is_finite(&self) -> bool {
        [self.s, self.d, self.s_dot, self.d_dot, self.s_ddot]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Project a pose onto the path with the default corridor and no seed.
pub fn to_frenet(path: &Path, pose: Pose, speed: f64) -> Result<FrenetState> {
    to_frenet_near(path, pose, speed, None, DEFAULT_CORRIDOR)
}

/// Project a pose onto the path.
///
/// `s_hint` narrows the nearest-segment search to a window around the
/// previous tick's arclength, which keeps per-tick localization O(1) and
/// resolves ambiguity on self-approaching loops by temporal continuity. A
/// miss (window distance beyond the corridor) falls back to a global scan;
/// if even that exceeds `corridor` the pose is off-path.
pub fn to_frenet_near(
    path: &Path,
    pose: Pose,
    speed: f64,
    s_hint: Option<f64>,
    corridor: f64,
) -> Result<FrenetState> {
    if path.waypoints.len() < 2 {
        return Err(Error::invalid("path has fewer than two waypoints"));
    }

    let p = pose.position;
    let projection = match s_hint {
        Some(hint) => {
            let window = window_range(path, hint);
            let local = project_on_chain(path, p, window.clone());
            match local {
                Some(proj) if proj.distance <= corridor => Some(proj),
                _ => project_on_chain(path, p, 0..path.waypoints.len() - 1),
            }
        }
        None => project_on_chain(path, p, 0..path.waypoints.len() - 1),
    };
    let chain = projection.ok_or_else(|| Error::invalid("path has no segments"))?;

    // Refine against the exact geometry of the segment the chain located
    // (plus its neighbors, in case the chain fix straddles a joint).
    let seg_idx = path.segment_index_at(chain.s);
    let mut best: Option<(f64, f64, f64, usize)> = None; // (dist, s, d, seg)
    for idx in seg_idx.saturating_sub(1)..(seg_idx + 2).min(path.segments.len()) {
        let (s, d, dist) = project_on_segment(&path.segments[idx], p);
        if best.map_or(true, |(b, ..)| dist < b - 1e-12) {
            best = Some((dist, s, d, idx));
        }
    }
    let (dist, s, d, idx) = best.unwrap();

    if dist > corridor {
        return Err(Error::OffPath {
            distance: dist,
            corridor,
        });
    }

    let tangent = heading_at(&path.segments[idx], s);
    let dtheta = wrap_angle(pose.heading - tangent);
    Ok(FrenetState {
        s,
        d,
        s_dot: speed * dtheta.cos(),
        d_dot: speed * dtheta.sin(),
        s_ddot: 0.0,
    })
}

/// (s, d) of an arbitrary point, with no corridor limit. `None` on paths too
/// short to project against.
pub fn project_point(path: &Path, point: Point2) -> Option<(f64, f64)> {
    if path.waypoints.len() < 2 {
        return None;
    }
    let chain = project_on_chain(path, point, 0..path.waypoints.len() - 1)?;
    let seg_idx = path.segment_index_at(chain.s);
    let mut best: Option<(f64, f64, f64)> = None;
    for idx in seg_idx.saturating_sub(1)..(seg_idx + 2).min(path.segments.len()) {
        let (s, d, dist) = project_on_segment(&path.segments[idx], point);
        if best.map_or(true, |(b, ..)| dist < b - 1e-12) {
            best = Some((dist, s, d));
        }
    }
    best.map(|(_, s, d)| (s, d))
}

/// Evaluate the world pose at path coordinates (s, d).
pub fn to_euclidean(path: &Path, s: f64, d: f64) -> Result<Pose> {
    if path.is_empty() {
        return Err(Error::invalid("empty path"));
    }
    if !(-1e-9..=path.total_length + 1e-9).contains(&s) {
        return Err(Error::invalid(format!(
            "s = {s} outside path range [0, {}]",
            path.total_length
        )));
    }
    let seg = &path.segments[path.segment_index_at(s)];
    let local = (s - seg.s_start).clamp(0.0, seg.edge_length);
    let center = point_at(seg, local);
    let heading = heading_at(seg, s);
    let normal = Point2::from_angle(heading).left_normal();
    Ok(Pose {
        position: center + normal * d,
        heading,
    })
}

#[derive(Clone, Copy)]
struct ChainProjection {
    s: f64,
    distance: f64,
}

fn window_range(path: &Path, hint: f64) -> std::ops::Range<usize> {
    let n = path.waypoints.len() - 1;
    let center = match path
        .waypoints
        .binary_search_by(|w| w.s_offset.partial_cmp(&hint).unwrap())
    {
        Ok(i) | Err(i) => i.min(n - 1),
    };
    center.saturating_sub(SEARCH_WINDOW)..(center + SEARCH_WINDOW + 1).min(n)
}

/// Nearest point on the piecewise-linear waypoint chain over the given
/// segment index range. Ties take the earlier segment.
fn project_on_chain(
    path: &Path,
    p: Point2,
    range: std::ops::Range<usize>,
) -> Option<ChainProjection> {
    let mut best: Option<ChainProjection> = None;
    for i in range {
        let a = &path.waypoints[i];
        let b = &path.waypoints[i + 1];
        let ab = b.position - a.position;
        let len2 = ab.dot(ab);
        if len2 == 0.0 {
            continue;
        }
        let t = ((p - a.position).dot(ab) / len2).clamp(0.0, 1.0);
        let foot = a.position + ab * t;
        let distance = p.dist(foot);
        let s = a.s_offset + (b.s_offset - a.s_offset) * t;
        if best.map_or(true, |bst| distance < bst.distance - 1e-15) {
            best = Some(ChainProjection { s, distance });
        }
    }
    best
}

/// Exact projection of `p` onto one edge's geometry; returns path (s, d,
/// distance-to-foot). The foot clamps to the edge span; the returned distance
/// is the true Euclidean distance to the (possibly clamped) foot, which is
/// what neighboring segments compete on near joints.
fn project_on_segment(seg: &PathSegment, p: Point2) -> (f64, f64, f64) {
    match seg.geometry {
        EdgeGeometry::Straight => {
            let dir = (seg.edge_to - seg.edge_from) * (1.0 / seg.edge_length);
            let rel = p - seg.edge_from;
            let local = rel.dot(dir).clamp(0.0, seg.edge_length);
            let foot = seg.edge_from + dir * local;
            let d = dir.cross(p - foot);
            (seg.s_start + local, d, p.dist(foot))
        }
        EdgeGeometry::CircularArc {
            center,
            radius,
            clockwise,
        } => {
            let rel = p - center;
            let rho = rel.norm();
            let phi0 = (seg.edge_from - center).angle();
            let sweep = seg.edge_length / radius;
            // Angular offset from the edge start, measured in travel sense.
            let raw = if clockwise {
                (phi0 - rel.angle()).rem_euclid(std::f64::consts::TAU)
            } else {
                (rel.angle() - phi0).rem_euclid(std::f64::consts::TAU)
            };
            // Angles past the sweep wrap either to the far end or before the
            // start; snap to the closer endpoint.
            let ang = if raw <= sweep {
                raw
            } else if raw - sweep < (std::f64::consts::TAU - raw) {
                sweep
            } else {
                0.0
            };
            let local = ang * radius;
            if rho < 1e-12 || ang != raw {
                // Degenerate or clamped: d is the lateral component in the
                // endpoint frame, but candidates compete on true distance.
                let foot = point_at(seg, local);
                let heading = heading_at(seg, seg.s_start + local);
                let normal = Point2::from_angle(heading).left_normal();
                let d = (p - foot).dot(normal);
                return (seg.s_start + local, d, p.dist(foot));
            }
            // Left-positive: counterclockwise arcs have the center on the left.
            let d = if clockwise { rho - radius } else { radius - rho };
            (seg.s_start + local, d, d.abs())
        }
    }
}

fn point_at(seg: &PathSegment, local_s: f64) -> Point2 {
    crate::map::geometry_point(
        &seg.geometry,
        seg.edge_from,
        seg.edge_to,
        seg.edge_length,
        local_s,
    )
}

fn heading_at(seg: &PathSegment, path_s: f64) -> f64 {
    crate::map::geometry_heading_at(
        &seg.geometry,
        seg.edge_from,
        seg.edge_to,
        seg.edge_length,
        (path_s - seg.s_start).clamp(0.0, seg.edge_length),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{
        a_star, build_default_map, EdgeGeometry, EdgeId, EdgeSpec, Node, NodeId, NodeKind, Path,
        RoadGraph,
    };

    fn straight_path(len: f64) -> Path {
        let nodes = vec![
            Node { id: NodeId::new("a"), position: Point2::new(0.0, 0.0), kind: NodeKind::LanePoint },
            Node { id: NodeId::new("b"), position: Point2::new(len, 0.0), kind: NodeKind::LanePoint },
        ];
        let specs = vec![EdgeSpec {
            id: EdgeId::new("ab"),
            from: NodeId::new("a"),
            to: NodeId::new("b"),
            geometry: EdgeGeometry::Straight,
            speed_limit: 3.0,
        }];
        let g = RoadGraph::assemble(nodes, specs, 0.5).unwrap();
        Path::from_edges(&g, &[EdgeId::new("ab")]).unwrap()
    }

    #[test]
    fn identity_at_path_start() {
        let p = straight_path(10.0);
        let fs = to_frenet(&p, Pose::new(0.0, 0.0, 0.0), 0.0).unwrap();
        assert!(fs.s.abs() < 1e-12 && fs.d.abs() < 1e-12 && fs.d_dot.abs() < 1e-12);
    }

    #[test]
    fn axis_aligned_offsets() {
        let p = straight_path(10.0);
        let fs = to_frenet(&p, Pose::new(3.0, 1.0, 0.0), 2.0).unwrap();
        assert!((fs.s - 3.0).abs() < 1e-12);
        assert!((fs.d - 1.0).abs() < 1e-12);
        assert!((fs.s_dot - 2.0).abs() < 1e-12);
        assert!(fs.d_dot.abs() < 1e-12);
    }

    #[test]
    fn to_euclidean_inverse_on_straight() {
        let p = straight_path(10.0);
        let pose = to_euclidean(&p, 5.0, -0.5).unwrap();
        assert!((pose.position.x - 5.0).abs() < 1e-12);
        assert!((pose.position.y + 0.5).abs() < 1e-12);
        assert!(pose.heading.abs() < 1e-12);
        let start = to_euclidean(&p, 0.0, 0.0).unwrap();
        assert!(start.position.norm() < 1e-12);
    }

    #[test]
    fn out_of_range_s_rejected() {
        let p = straight_path(10.0);
        assert!(to_euclidean(&p, -0.5, 0.0).is_err());
        assert!(to_euclidean(&p, 10.5, 0.0).is_err());
    }

    #[test]
    fn off_corridor_pose_rejected() {
        let p = straight_path(10.0);
        let err = to_frenet(&p, Pose::new(5.0, 3.0, 0.0), 1.0).unwrap_err();
        match err {
            Error::OffPath { distance, corridor } => {
                assert!((distance - 3.0).abs() < 1e-9);
                assert_eq!(corridor, DEFAULT_CORRIDOR);
            }
            other => panic!("expected OffPath, got {other}"),
        }
    }

    #[test]
    fn round_trip_on_default_map_route() {
        let g = build_default_map(0.5).unwrap();
        let path = a_star(&g, &NodeId::new("p_bs"), &NodeId::new("p_te")).unwrap();
        let mut rng = crate::rng::noise_rng(11);
        use rand::Rng;
        for _ in 0..1000 {
            let s = rng.gen_range(0.0..path.total_length);
            let d = rng.gen_range(-0.5..0.5);
            let pose = to_euclidean(&path, s, d).unwrap();
            let fs = to_frenet_near(&path, pose, 1.0, Some(s), DEFAULT_CORRIDOR).unwrap();
            assert!((fs.s - s).abs() < 1e-6, "s {s} -> {}", fs.s);
            assert!((fs.d - d).abs() < 1e-6, "d {d} -> {}", fs.d);
        }
    }

    #[test]
    fn windowed_search_follows_hint_on_overlapping_loop() {
        // A full circle visits every position twice per lap; the hint picks
        // the right one.
        let g = build_default_map(0.5).unwrap();
        // Perimeter loop: bottom -> right -> top -> left -> bottom again.
        let path = a_star(&g, &NodeId::new("p_bs"), &NodeId::new("p_le")).unwrap();
        let pose = to_euclidean(&path, 1.0, 0.0).unwrap();
        let fs = to_frenet_near(&path, pose, 1.0, Some(1.2), DEFAULT_CORRIDOR).unwrap();
        assert!((fs.s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn heading_offset_splits_velocity() {
        let p = straight_path(10.0);
        let fs = to_frenet(&p, Pose::new(2.0, 0.0, 0.3), 2.0).unwrap();
        assert!((fs.s_dot - 2.0 * 0.3f64.cos()).abs() < 1e-12);
        assert!((fs.d_dot - 2.0 * 0.3f64.sin()).abs() < 1e-12);
    }
}
