//! Routing over the road graph: A* with a straight-line heuristic plus the
//! random goal draws that keep the fleet circulating forever.

use super::{NodeId, Path, RoadGraph};
use crate::error::{Error, Result};
use rand::Rng;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Minimum-arclength route from `start` to `goal`.
///
/// The heuristic is straight-line distance, which never exceeds edge
/// arclength, so the first settle of the goal is optimal. Exact cost ties are
/// broken toward the lexicographically smaller edge-id sequence, which makes
/// the result deterministic on symmetric maps.
pub fn a_star(graph: &RoadGraph, start: &NodeId, goal: &NodeId) -> Result<Path> {
    let start_idx = graph
        .node_idx(start)
        .ok_or_else(|| Error::UnknownNode(start.clone()))?;
    let goal_idx = graph
        .node_idx(goal)
        .ok_or_else(|| Error::UnknownNode(goal.clone()))?;

    if start_idx == goal_idx {
        return Ok(Path::empty());
    }

    let n = graph.nodes().len();
    let goal_pos = graph.node_at(goal_idx).position;
    let h = |i: usize| graph.node_at(i).position.dist(goal_pos);

    let mut cost = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<usize>> = vec![None; n]; // incoming edge index
    let mut heap = BinaryHeap::new();
    cost[start_idx] = 0.0;
    heap.push(QueueEntry {
        f: h(start_idx),
        node: start_idx,
    });

    while let Some(QueueEntry { f, node }) = heap.pop() {
        if node == goal_idx {
            break;
        }
        if f > cost[node] + h(node) + 1e-12 {
            continue; // stale entry
        }
        for &ei in graph.outgoing_idx(node) {
            let edge = graph.edge_at(ei);
            let to = graph.node_idx(&edge.to).unwrap();
            let candidate = cost[node] + edge.length;
            let better = if candidate < cost[to] {
                true
            } else if candidate == cost[to] {
                lex_smaller(graph, &parent, node, ei, to)
            } else {
                false
            };
            if better {
                cost[to] = candidate;
                parent[to] = Some(ei);
                heap.push(QueueEntry {
                    f: candidate + h(to),
                    node: to,
                });
            }
        }
    }

    if cost[goal_idx].is_infinite() {
        return Err(Error::NoRoute {
            from: start.clone(),
            to: goal.clone(),
        });
    }

    let mut edge_ids = Vec::new();
    let mut node = goal_idx;
    while node != start_idx {
        let ei = parent[node].expect("settled node has a parent");
        let edge = graph.edge_at(ei);
        edge_ids.push(edge.id.clone());
        node = graph.node_idx(&edge.from).unwrap();
    }
    edge_ids.reverse();
    Path::from_edges(graph, &edge_ids)
}

/// True when (path to `via` + `edge`) reads lexicographically smaller than
/// the currently recorded path to `to`.
fn lex_smaller(
    graph: &RoadGraph,
    parent: &[Option<usize>],
    via: usize,
    edge: usize,
    to: usize,
) -> bool {
    let mut candidate = edge_seq(graph, parent, via);
    candidate.push(edge);
    let incumbent = edge_seq(graph, parent, to);
    let cand_ids = candidate.iter().map(|&e| &graph.edge_at(e).id);
    let inc_ids = incumbent.iter().map(|&e| &graph.edge_at(e).id);
    cand_ids.lt(inc_ids)
}

fn edge_seq(graph: &RoadGraph, parent: &[Option<usize>], mut node: usize) -> Vec<usize> {
    let mut seq = Vec::new();
    while let Some(ei) = parent[node] {
        seq.push(ei);
        node = graph.node_idx(&graph.edge_at(ei).from).unwrap();
    }
    seq.reverse();
    seq
}

struct QueueEntry {
    f: f64,
    node: usize,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on f, ties settled by node index for determinism.
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Node indices reachable from `start` (following edges forward, or backward
/// when `reverse` is set). Includes `start` itself.
pub(crate) fn reach_from(graph: &RoadGraph, start: usize, reverse: bool) -> Vec<bool> {
    let n = graph.nodes().len();
    let mut adj = vec![Vec::new(); n];
    for e in graph.edges() {
        let f = graph.node_idx(&e.from).unwrap();
        let t = graph.node_idx(&e.to).unwrap();
        if reverse {
            adj[t].push(f);
        } else {
            adj[f].push(t);
        }
    }
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Node ids reachable from `from`, excluding `from` itself, sorted by id.
pub fn reachable_set(graph: &RoadGraph, from: &NodeId) -> Result<Vec<NodeId>> {
    let start = graph
        .node_idx(from)
        .ok_or_else(|| Error::UnknownNode(from.clone()))?;
    let seen = reach_from(graph, start, false);
    let mut ids: Vec<NodeId> = seen
        .iter()
        .enumerate()
        .filter(|&(i, &r)| r && i != start)
        .map(|(i, _)| graph.node_at(i).id.clone())
        .collect();
    ids.sort();
    Ok(ids)
}

/// Draw a uniformly random goal among the nodes reachable from `current`.
pub fn random_goal<R: Rng>(graph: &RoadGraph, current: &NodeId, rng: &mut R) -> Result<NodeId> {
    if graph.nodes().len() < 2 {
        return Err(Error::invalid("graph needs at least two nodes"));
    }
    let candidates = reachable_set(graph, current)?;
    if candidates.is_empty() {
        return Err(Error::NoRoute {
            from: current.clone(),
            to: current.clone(),
        });
    }
    Ok(candidates[rng.gen_range(0..candidates.len())].clone())
}

/// The edge whose centerline passes closest to `point`, with the arclength
/// of the closest approach. Distance ties resolve to the smaller edge id.
pub fn nearest_edge<'g>(
    graph: &'g RoadGraph,
    point: crate::math::Point2,
) -> (&'g super::Edge, f64, f64) {
    let mut best: Option<(&super::Edge, f64, f64)> = None;
    for edge in graph.edges() {
        let (s, dist) = chain_distance(&edge.waypoints, point);
        let better = match best {
            None => true,
            Some((b_edge, _, b_dist)) => {
                dist < b_dist - 1e-12 || ((dist - b_dist).abs() <= 1e-12 && edge.id < b_edge.id)
            }
        };
        if better {
            best = Some((edge, s, dist));
        }
    }
    best.expect("graph has edges")
}

/// Nearest point on a waypoint polyline: (arclength, distance).
fn chain_distance(waypoints: &[super::Waypoint], point: crate::math::Point2) -> (f64, f64) {
    let mut best = (0.0, f64::INFINITY);
    for pair in waypoints.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let ab = b.position - a.position;
        let len2 = ab.dot(ab);
        if len2 == 0.0 {
            continue;
        }
        let t = ((point - a.position).dot(ab) / len2).clamp(0.0, 1.0);
        let foot = a.position + ab * t;
        let dist = point.dist(foot);
        if dist < best.1 {
            best = (a.s_offset + (b.s_offset - a.s_offset) * t, dist);
        }
    }
    best
}

/// The node closest to `point`; distance ties resolve to the smaller id.
pub fn nearest_node<'g>(graph: &'g RoadGraph, point: crate::math::Point2) -> &'g super::Node {
    graph
        .nodes()
        .iter()
        .min_by(|a, b| {
            a.position
                .dist(point)
                .total_cmp(&b.position.dist(point))
                .then_with(|| a.id.cmp(&b.id))
        })
        .expect("graph has nodes")
}
