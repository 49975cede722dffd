//! Shared test oracles, deliberately independent of the implementation paths
//! they check.

#![allow(dead_code)]

use rand::Rng;
use traffic_twin::map::{EdgeGeometry, EdgeId, EdgeSpec, Node, NodeId, NodeKind, RoadGraph};
use traffic_twin::math::Point2;
use traffic_twin::planner::{Trajectory, TrajectoryFrame};
use traffic_twin::CarId;

/// Plain binary-heap Dijkstra over edge arclengths. No heuristic, no
/// tie-breaking subtleties: cost only.
pub fn dijkstra_cost(graph: &RoadGraph, start: &NodeId, goal: &NodeId) -> Option<f64> {
    use std::cmp::Ordering;
    use std::collections::{BinaryHeap, HashMap};

    struct Entry(f64, usize);
    impl PartialEq for Entry {
        fn eq(&self, other: &Self) -> bool {
            self.0 == other.0 && self.1 == other.1
        }
    }
    impl Eq for Entry {}
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> Ordering {
            other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
        }
    }
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }

    let index: HashMap<&NodeId, usize> = graph
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, n)| (&n.id, i))
        .collect();
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); graph.nodes().len()];
    for edge in graph.edges() {
        adjacency[index[&edge.from]].push((index[&edge.to], edge.length));
    }

    let (start, goal) = (*index.get(start)?, *index.get(goal)?);
    let mut dist = vec![f64::INFINITY; graph.nodes().len()];
    dist[start] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry(0.0, start));
    while let Some(Entry(d, u)) = heap.pop() {
        if u == goal {
            return Some(d);
        }
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adjacency[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry(nd, v));
            }
        }
    }
    None
}

/// Random strongly connected road graph with straight edges: a Hamiltonian
/// cycle over shuffled nodes plus extra random edges. Edge cost equals chord
/// length, so the straight-line heuristic stays admissible.
pub fn random_connected_graph<R: Rng>(rng: &mut R, max_nodes: usize) -> RoadGraph {
    let n = rng.gen_range(4..=max_nodes);
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        loop {
            let p = Point2::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            if nodes
                .iter()
                .all(|existing: &Node| existing.position.dist(p) > 2.0)
            {
                nodes.push(Node {
                    id: NodeId::new(format!("n{i:02}")),
                    position: p,
                    kind: NodeKind::LanePoint,
                });
                break;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }

    let mut specs = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let add = |specs: &mut Vec<EdgeSpec>,
                   seen: &mut std::collections::BTreeSet<(usize, usize)>,
                   from: usize,
                   to: usize| {
        if from == to || !seen.insert((from, to)) {
            return;
        }
        specs.push(EdgeSpec {
            id: EdgeId::new(format!("e{:03}", specs.len())),
            from: NodeId::new(format!("n{from:02}")),
            to: NodeId::new(format!("n{to:02}")),
            geometry: EdgeGeometry::Straight,
            speed_limit: 3.0,
        });
    };
    for k in 0..n {
        add(&mut specs, &mut seen, order[k], order[(k + 1) % n]);
    }
    for _ in 0..2 * n {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        add(&mut specs, &mut seen, a, b);
    }

    let shortest = specs
        .iter()
        .map(|s| {
            let a = &nodes[s.from.as_str()[1..].parse::<usize>().unwrap()];
            let b = &nodes[s.to.as_str()[1..].parse::<usize>().unwrap()];
            a.position.dist(b.position)
        })
        .fold(f64::INFINITY, f64::min);
    let spacing = (shortest / 2.0).min(0.5);
    RoadGraph::assemble(nodes, specs, spacing).expect("random graph assembles")
}

/// Random aligned trajectory set: shared dt and start time, piecewise-random
/// headings and speeds.
pub fn random_trajectory_set<R: Rng>(rng: &mut R, max_cars: usize, frames: usize) -> Vec<Trajectory> {
    let cars = rng.gen_range(2..=max_cars);
    let dt = 0.1;
    (0..cars)
        .map(|car| {
            let mut pos = Point2::new(rng.gen_range(0.0..30.0), rng.gen_range(0.0..30.0));
            let mut heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let mut v: f64 = rng.gen_range(0.0..3.0);
            let mut s = 0.0;
            let mut out = Vec::with_capacity(frames);
            for k in 0..frames {
                if k % 10 == 0 {
                    heading += rng.gen_range(-0.8..0.8);
                    v = (v + rng.gen_range(-0.5..0.5)).clamp(0.0, 3.0);
                }
                out.push(TrajectoryFrame {
                    t: k as f64 * dt,
                    s,
                    d: 0.0,
                    x: pos.x,
                    y: pos.y,
                    heading,
                    v,
                    a: 0.0,
                });
                pos = pos + Point2::from_angle(heading) * (v * dt);
                s += v * dt;
            }
            Trajectory {
                car_id: CarId(car as u32),
                start_time: 0.0,
                dt,
                frames: out,
                horizon: (frames - 1) as f64 * dt,
            }
        })
        .collect()
}

/// Exhaustive all-pairs, all-frames scan: the first violating index and
/// distance for every pair closer than `threshold`, ordered by pair.
pub fn brute_force_first_violations(
    trajectories: &[Trajectory],
    threshold: f64,
) -> Vec<(CarId, CarId, usize, f64)> {
    let mut out = Vec::new();
    for (i, a) in trajectories.iter().enumerate() {
        for b in &trajectories[i + 1..] {
            let frames = a.frames.len().min(b.frames.len());
            for k in 0..frames {
                let d = Point2::new(a.frames[k].x, a.frames[k].y)
                    .dist(Point2::new(b.frames[k].x, b.frames[k].y));
                if d < threshold {
                    out.push((a.car_id, b.car_id, k, d));
                    break;
                }
            }
        }
    }
    out.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    out
}
