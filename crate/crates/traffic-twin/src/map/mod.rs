//! Directed road network: nodes, geometric edges with fixed-spacing waypoints,
//! and paths assembled from edge chains.

mod builder;
mod file;
mod route;

pub use builder::{build_default_map, build_merge_ring, DEFAULT_SPACING};
pub use file::{load_map, load_map_raw, save_map};
pub use route::{a_star, nearest_edge, nearest_node, random_goal, reachable_set};

use crate::error::{Error, Result};
use crate::math::{wrap_angle, Point2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;

/// Positional agreement required between waypoints and the geometry they
/// discretize (node endpoints, arc radii, tangent headings).
pub const GEOMETRY_TOL: f64 = 1e-9;
/// Allowed deviation of interior waypoint spacing from the configured value.
pub const SPACING_TOL: f64 = 1e-6;

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                $name(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }
    };
}

id_type!(NodeId);
id_type!(EdgeId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    LanePoint,
    IntersectionEntry,
    IntersectionExit,
    Merge,
    Diverge,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub position: Point2,
    pub kind: NodeKind,
}

/// Edge centerline geometry. Arcs are circular; `clockwise` gives the
/// traversal sense from the `from` node to the `to` node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EdgeGeometry {
    Straight,
    CircularArc {
        center: Point2,
        radius: f64,
        clockwise: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub position: Point2,
    /// Tangent heading at `position`, radians in (-pi, pi].
    pub heading: f64,
    /// Arclength from the edge (or path) start, meters.
    pub s_offset: f64,
    /// Signed curvature, 1/m; positive turns left, 0 on straights.
    pub curvature: f64,
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub geometry: EdgeGeometry,
    pub speed_limit: f64,
    pub length: f64,
    pub waypoints: Vec<Waypoint>,
}

/// Bare edge description used by builders and the map file loader before
/// waypoints are discretized.
#[derive(Debug, Clone)]
pub struct EdgeSpec {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub geometry: EdgeGeometry,
    pub speed_limit: f64,
}

/// Immutable directed road graph. Construct once, share freely.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    node_index: BTreeMap<NodeId, usize>,
    edge_index: BTreeMap<EdgeId, usize>,
    /// Outgoing edge indices per node index, sorted by edge id.
    out_edges: Vec<Vec<usize>>,
    spacing: f64,
}

impl RoadGraph {
    /// Discretize waypoints for every edge and assemble the graph.
    ///
    /// Rejects nonpositive spacing, spacing longer than the shortest edge,
    /// duplicate ids, dangling endpoints, and arc endpoints off their circle.
    pub fn assemble(nodes: Vec<Node>, edge_specs: Vec<EdgeSpec>, spacing: f64) -> Result<Self> {
        if !spacing.is_finite() || spacing <= 0.0 {
            return Err(Error::invalid(format!(
                "waypoint spacing must be positive, got {spacing}"
            )));
        }

        let mut node_index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if !n.position.is_finite() {
                return Err(Error::map(format!("node {}: position not finite", n.id)));
            }
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(Error::map(format!("duplicate node id {}", n.id)));
            }
        }

        let mut edges = Vec::with_capacity(edge_specs.len());
        let mut edge_index = BTreeMap::new();
        for spec in &edge_specs {
            let from = nodes
                .get(*node_index.get(&spec.from).ok_or_else(|| {
                    Error::map(format!("edge {}: unknown from-node {}", spec.id, spec.from))
                })?)
                .unwrap();
            let to = nodes
                .get(*node_index.get(&spec.to).ok_or_else(|| {
                    Error::map(format!("edge {}: unknown to-node {}", spec.id, spec.to))
                })?)
                .unwrap();
            if spec.speed_limit <= 0.0 || !spec.speed_limit.is_finite() {
                return Err(Error::map(format!(
                    "edge {}: speed limit must be positive",
                    spec.id
                )));
            }
            let edge = discretize_edge(spec, from.position, to.position, spacing)?;
            if edge_index
                .insert(spec.id.clone(), edges.len())
                .is_some()
            {
                return Err(Error::map(format!("duplicate edge id {}", spec.id)));
            }
            edges.push(edge);
        }

        let shortest = edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min);
        if spacing > shortest {
            return Err(Error::invalid(format!(
                "waypoint spacing {spacing} exceeds shortest edge length {shortest:.6}"
            )));
        }

        let mut out_edges = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            out_edges[node_index[&e.from]].push(i);
        }
        for outs in &mut out_edges {
            outs.sort_by(|&a, &b| edges[a].id.cmp(&edges[b].id));
        }

        Ok(RoadGraph {
            nodes,
            edges,
            node_index,
            edge_index,
            out_edges,
            spacing,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: &NodeId) -> Result<&Node> {
        self.node_index
            .get(id)
            .map(|&i| &self.nodes[i])
            .ok_or_else(|| Error::UnknownNode(id.clone()))
    }

    pub fn edge(&self, id: &EdgeId) -> Result<&Edge> {
        self.edge_index
            .get(id)
            .map(|&i| &self.edges[i])
            .ok_or_else(|| Error::UnknownEdge(id.clone()))
    }

    pub fn contains_node(&self, id: &NodeId) -> bool {
        self.node_index.contains_key(id)
    }

    pub(crate) fn node_idx(&self, id: &NodeId) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub(crate) fn node_at(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub(crate) fn edge_at(&self, idx: usize) -> &Edge {
        &self.edges[idx]
    }

    /// Outgoing edges of a node, ordered by edge id.
    pub fn outgoing(&self, id: &NodeId) -> Result<impl Iterator<Item = &Edge>> {
        let idx = self
            .node_idx(id)
            .ok_or_else(|| Error::UnknownNode(id.clone()))?;
        Ok(self.out_edges[idx].iter().map(move |&e| &self.edges[e]))
    }

    pub(crate) fn outgoing_idx(&self, node_idx: usize) -> &[usize] {
        &self.out_edges[node_idx]
    }

    /// Axis-aligned bounding box over node and waypoint positions: (min, max).
    pub fn bounding_box(&self) -> (Point2, Point2) {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut take = |p: Point2| {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        };
        for n in &self.nodes {
            take(n.position);
        }
        for e in &self.edges {
            for w in &e.waypoints {
                take(w.position);
            }
        }
        (min, max)
    }

    /// Check all structural invariants; one diagnostic string per violation,
    /// each naming the offending element. Empty means valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        for e in &self.edges {
            if !self.node_index.contains_key(&e.from) {
                out.push(format!("edge {}: dangling from-node {}", e.id, e.from));
            }
            if !self.node_index.contains_key(&e.to) {
                out.push(format!("edge {}: dangling to-node {}", e.id, e.to));
            }
            if e.waypoints.len() < 2 {
                out.push(format!("edge {}: fewer than two waypoints", e.id));
                continue;
            }
            let first = e.waypoints.first().unwrap();
            let last = e.waypoints.last().unwrap();
            if let (Some(&fi), Some(&ti)) =
                (self.node_index.get(&e.from), self.node_index.get(&e.to))
            {
                if first.position.dist(self.nodes[fi].position) > GEOMETRY_TOL {
                    out.push(format!(
                        "edge {}: first waypoint is {:.3e} m from its from-node",
                        e.id,
                        first.position.dist(self.nodes[fi].position)
                    ));
                }
                if last.position.dist(self.nodes[ti].position) > GEOMETRY_TOL {
                    out.push(format!(
                        "edge {}: last waypoint is {:.3e} m from its to-node",
                        e.id,
                        last.position.dist(self.nodes[ti].position)
                    ));
                }
            }
            for (k, pair) in e.waypoints.windows(2).enumerate() {
                let gap = pair[1].s_offset - pair[0].s_offset;
                if gap <= 0.0 {
                    out.push(format!(
                        "edge {}: waypoint s_offset not strictly increasing at index {k}",
                        e.id
                    ));
                }
                let interior = k + 2 < e.waypoints.len();
                if interior && (gap - self.spacing).abs() > SPACING_TOL {
                    out.push(format!(
                        "edge {}: waypoint spacing {:.6} at index {k}, expected {:.6}",
                        e.id, gap, self.spacing
                    ));
                } else if !interior && gap > self.spacing + SPACING_TOL {
                    out.push(format!(
                        "edge {}: final waypoint gap {:.6} exceeds spacing {:.6}",
                        e.id, gap, self.spacing
                    ));
                }
            }
            if let EdgeGeometry::CircularArc { center, radius, .. } = e.geometry {
                for (k, w) in e.waypoints.iter().enumerate() {
                    if (w.position.dist(center) - radius).abs() > GEOMETRY_TOL {
                        out.push(format!(
                            "edge {}: waypoint {k} off the arc by {:.3e} m",
                            e.id,
                            (w.position.dist(center) - radius).abs()
                        ));
                        break;
                    }
                }
            }
            if let (Some(&fi), Some(&ti)) =
                (self.node_index.get(&e.from), self.node_index.get(&e.to))
            {
                let (fp, tp) = (self.nodes[fi].position, self.nodes[ti].position);
                for (k, w) in e.waypoints.iter().enumerate() {
                    let expected = geometry_heading_at(&e.geometry, fp, tp, e.length, w.s_offset);
                    if crate::math::angle_diff(w.heading, expected) > GEOMETRY_TOL {
                        out.push(format!(
                            "edge {}: waypoint {k} heading off tangent by {:.3e} rad",
                            e.id,
                            crate::math::angle_diff(w.heading, expected)
                        ));
                        break;
                    }
                }
            }
        }
        out
    }

    /// True when every node reaches every other node along directed edges.
    pub fn strongly_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let forward = route::reach_from(self, 0, false);
        let backward = route::reach_from(self, 0, true);
        forward.iter().all(|&r| r) && backward.iter().all(|&r| r)
    }

    /// True when the graph contains at least one directed cycle.
    pub fn has_cycle(&self) -> bool {
        // Kahn's algorithm: leftover nodes after peeling zero-in-degree ones.
        let mut indeg = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            indeg[self.node_index[&e.to]] += 1;
        }
        let mut stack: Vec<usize> = (0..self.nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut removed = 0;
        while let Some(n) = stack.pop() {
            removed += 1;
            for &ei in &self.out_edges[n] {
                let t = self.node_index[&self.edges[ei].to];
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    stack.push(t);
                }
            }
        }
        removed < self.nodes.len()
    }
}

/// Evaluate a point on an edge geometry at arclength `s` from its start.
pub(crate) fn geometry_point(
    geometry: &EdgeGeometry,
    from: Point2,
    to: Point2,
    length: f64,
    s: f64,
) -> Point2 {
    match *geometry {
        EdgeGeometry::Straight => {
            let dir = (to - from) * (1.0 / length);
            from + dir * s
        }
        EdgeGeometry::CircularArc {
            center,
            radius,
            clockwise,
        } => {
            let phi0 = (from - center).angle();
            let phi = if clockwise {
                phi0 - s / radius
            } else {
                phi0 + s / radius
            };
            center + Point2::from_angle(phi) * radius
        }
    }
}

pub(crate) fn geometry_heading_at(
    geometry: &EdgeGeometry,
    from: Point2,
    to: Point2,
    _length: f64,
    s: f64,
) -> f64 {
    match *geometry {
        EdgeGeometry::Straight => (to - from).angle(),
        EdgeGeometry::CircularArc {
            center,
            radius,
            clockwise,
        } => {
            let phi0 = (from - center).angle();
            let phi = if clockwise {
                phi0 - s / radius
            } else {
                phi0 + s / radius
            };
            wrap_angle(if clockwise {
                phi - std::f64::consts::FRAC_PI_2
            } else {
                phi + std::f64::consts::FRAC_PI_2
            })
        }
    }
}

pub(crate) fn arc_length(center: Point2, radius: f64, clockwise: bool, from: Point2, to: Point2) -> f64 {
    let phi0 = (from - center).angle();
    let phi1 = (to - center).angle();
    let sweep = if clockwise {
        (phi0 - phi1).rem_euclid(TAU)
    } else {
        (phi1 - phi0).rem_euclid(TAU)
    };
    let sweep = if sweep == 0.0 { TAU } else { sweep };
    radius * sweep
}

fn discretize_edge(spec: &EdgeSpec, from: Point2, to: Point2, spacing: f64) -> Result<Edge> {
    let length = match spec.geometry {
        EdgeGeometry::Straight => {
            let l = from.dist(to);
            if l <= 0.0 {
                return Err(Error::map(format!("edge {}: zero length", spec.id)));
            }
            l
        }
        EdgeGeometry::CircularArc {
            center,
            radius,
            clockwise,
        } => {
            if radius <= 0.0 {
                return Err(Error::map(format!("edge {}: arc radius must be positive", spec.id)));
            }
            for (name, p) in [("from", from), ("to", to)] {
                if (p.dist(center) - radius).abs() > 1e-6 {
                    return Err(Error::map(format!(
                        "edge {}: {name}-node is {:.6} m from the arc circle",
                        spec.id,
                        (p.dist(center) - radius).abs()
                    )));
                }
            }
            arc_length(center, radius, clockwise, from, to)
        }
    };

    let curvature = match spec.geometry {
        EdgeGeometry::Straight => 0.0,
        EdgeGeometry::CircularArc {
            radius, clockwise, ..
        } => {
            if clockwise {
                -1.0 / radius
            } else {
                1.0 / radius
            }
        }
    };

    let mut waypoints = Vec::with_capacity((length / spacing).ceil() as usize + 2);
    let mut s = 0.0;
    while s < length - GEOMETRY_TOL {
        waypoints.push(make_waypoint(spec, from, to, length, s, curvature));
        s += spacing;
    }
    waypoints.push(make_waypoint(spec, from, to, length, length, curvature));

    Ok(Edge {
        id: spec.id.clone(),
        from: spec.from.clone(),
        to: spec.to.clone(),
        geometry: spec.geometry,
        speed_limit: spec.speed_limit,
        length,
        waypoints,
    })
}

fn make_waypoint(
    spec: &EdgeSpec,
    from: Point2,
    to: Point2,
    length: f64,
    s: f64,
    curvature: f64,
) -> Waypoint {
    Waypoint {
        position: geometry_point(&spec.geometry, from, to, length, s),
        heading: geometry_heading_at(&spec.geometry, from, to, length, s),
        s_offset: s,
        curvature,
    }
}

/// One edge's span within a [`Path`], carrying enough geometry to transform
/// exactly without a graph reference.
#[derive(Debug, Clone)]
pub struct PathSegment {
    pub edge_id: EdgeId,
    pub geometry: EdgeGeometry,
    pub edge_from: Point2,
    pub edge_to: Point2,
    pub edge_length: f64,
    pub speed_limit: f64,
    /// Arclength of the edge start measured from the path start.
    pub s_start: f64,
    pub s_end: f64,
}

/// A routed chain of edges with concatenated waypoints, re-based to path
/// arclength. A zero-edge path (start == goal) has no waypoints.
#[derive(Debug, Clone, Default)]
pub struct Path {
    pub edges: Vec<EdgeId>,
    pub waypoints: Vec<Waypoint>,
    pub segments: Vec<PathSegment>,
    pub total_length: f64,
}

impl Path {
    pub fn empty() -> Self {
        Path::default()
    }

    /// Build a path from a chain of edge ids; consecutive edges must share a node.
    pub fn from_edges(graph: &RoadGraph, edge_ids: &[EdgeId]) -> Result<Self> {
        let mut waypoints: Vec<Waypoint> = Vec::new();
        let mut segments = Vec::with_capacity(edge_ids.len());
        let mut base = 0.0;
        let mut prev_to: Option<&NodeId> = None;
        for id in edge_ids {
            let edge = graph.edge(id)?;
            if let Some(prev) = prev_to {
                if prev != &edge.from {
                    return Err(Error::map(format!(
                        "edges do not chain: previous ends at {prev}, {id} starts at {}",
                        edge.from
                    )));
                }
            }
            let from = graph.node(&edge.from)?.position;
            let to = graph.node(&edge.to)?.position;
            segments.push(PathSegment {
                edge_id: edge.id.clone(),
                geometry: edge.geometry,
                edge_from: from,
                edge_to: to,
                edge_length: edge.length,
                speed_limit: edge.speed_limit,
                s_start: base,
                s_end: base + edge.length,
            });
            // Drop the duplicated joint waypoint when concatenating.
            let skip = usize::from(!waypoints.is_empty());
            for w in edge.waypoints.iter().skip(skip) {
                waypoints.push(Waypoint {
                    s_offset: base + w.s_offset,
                    ..*w
                });
            }
            base += edge.length;
            prev_to = Some(&edge.to);
        }
        Ok(Path {
            edges: edge_ids.to_vec(),
            waypoints,
            segments,
            total_length: base,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Index of the segment containing path arclength `s` (clamped to range).
    pub fn segment_index_at(&self, s: f64) -> usize {
        match self
            .segments
            .binary_search_by(|seg| seg.s_end.partial_cmp(&s).unwrap())
        {
            Ok(i) => (i + 1).min(self.segments.len() - 1),
            Err(i) => i.min(self.segments.len() - 1),
        }
    }

    pub fn edge_id_at(&self, s: f64) -> Option<&EdgeId> {
        if self.is_empty() {
            return None;
        }
        Some(&self.segments[self.segment_index_at(s)].edge_id)
    }

    /// Minimum speed limit over the arclength window [s0, s1].
    pub fn speed_limit_over(&self, s0: f64, s1: f64) -> f64 {
        let mut limit = f64::INFINITY;
        for seg in &self.segments {
            if seg.s_end >= s0 && seg.s_start <= s1 {
                limit = limit.min(seg.speed_limit);
            }
        }
        limit
    }
}
