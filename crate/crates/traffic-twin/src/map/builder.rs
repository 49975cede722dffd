//! Procedural builders for the bundled maps.
//!
//! The default map fits a 60 x 50 m box: a one-way counterclockwise perimeter
//! ring, one four-way intersection in the middle with left/right/straight
//! turn edges per approach (right-hand traffic, so each direction runs on its
//! own offset lane), and connector arcs that diverge from / merge onto the
//! ring. Everything is tangent-continuous, so routes never kink.

use super::{EdgeGeometry, EdgeId, EdgeSpec, Node, NodeId, NodeKind, RoadGraph};
use crate::error::Result;
use crate::math::Point2;

/// Default waypoint spacing, meters.
pub const DEFAULT_SPACING: f64 = 0.5;

const STRAIGHT_LIMIT: f64 = 3.0;
const CURVE_LIMIT: f64 = 2.0;

struct MapBuilder {
    nodes: Vec<Node>,
    edges: Vec<EdgeSpec>,
}

impl MapBuilder {
    fn new() -> Self {
        MapBuilder {
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    fn node(&mut self, id: &str, x: f64, y: f64, kind: NodeKind) {
        self.nodes.push(Node {
            id: NodeId::new(id),
            position: Point2::new(x, y),
            kind,
        });
    }

    fn straight(&mut self, id: &str, from: &str, to: &str, limit: f64) {
        self.edges.push(EdgeSpec {
            id: EdgeId::new(id),
            from: NodeId::new(from),
            to: NodeId::new(to),
            geometry: EdgeGeometry::Straight,
            speed_limit: limit,
        });
    }

    fn arc(&mut self, id: &str, from: &str, to: &str, cx: f64, cy: f64, r: f64, cw: bool) {
        self.edges.push(EdgeSpec {
            id: EdgeId::new(id),
            from: NodeId::new(from),
            to: NodeId::new(to),
            geometry: EdgeGeometry::CircularArc {
                center: Point2::new(cx, cy),
                radius: r,
                clockwise: cw,
            },
            speed_limit: CURVE_LIMIT,
        });
    }

    fn build(self, spacing: f64) -> Result<RoadGraph> {
        RoadGraph::assemble(self.nodes, self.edges, spacing)
    }
}

/// Build the default map at the given waypoint spacing.
pub fn build_default_map(spacing: f64) -> Result<RoadGraph> {
    let mut b = MapBuilder::new();

    // Perimeter ring corners (counterclockwise travel).
    b.node("p_bs", 8.0, 2.0, NodeKind::LanePoint);
    b.node("p_be", 52.0, 2.0, NodeKind::LanePoint);
    b.node("p_rs", 58.0, 8.0, NodeKind::LanePoint);
    b.node("p_re", 58.0, 42.0, NodeKind::LanePoint);
    b.node("p_ts", 52.0, 48.0, NodeKind::LanePoint);
    b.node("p_te", 8.0, 48.0, NodeKind::LanePoint);
    b.node("p_ls", 2.0, 42.0, NodeKind::LanePoint);
    b.node("p_le", 2.0, 8.0, NodeKind::LanePoint);

    // Ring junctions feeding / draining the cross roads.
    b.node("d_nb", 26.5, 2.0, NodeKind::Diverge);
    b.node("m_sb", 33.5, 2.0, NodeKind::Merge);
    b.node("d_wb", 58.0, 21.5, NodeKind::Diverge);
    b.node("m_eb", 58.0, 28.5, NodeKind::Merge);
    b.node("d_sb", 33.5, 48.0, NodeKind::Diverge);
    b.node("m_nb", 26.5, 48.0, NodeKind::Merge);
    b.node("d_eb", 2.0, 28.5, NodeKind::Diverge);
    b.node("m_wb", 2.0, 21.5, NodeKind::Merge);

    // Connectors between ring arcs and the intersection approaches.
    b.node("j_eb_in", 7.0, 23.5, NodeKind::LanePoint);
    b.node("j_eb_out", 53.0, 23.5, NodeKind::LanePoint);
    b.node("j_nb_in", 31.5, 7.0, NodeKind::LanePoint);
    b.node("j_nb_out", 31.5, 43.0, NodeKind::LanePoint);
    b.node("j_wb_in", 53.0, 26.5, NodeKind::LanePoint);
    b.node("j_wb_out", 7.0, 26.5, NodeKind::LanePoint);
    b.node("j_sb_in", 28.5, 43.0, NodeKind::LanePoint);
    b.node("j_sb_out", 28.5, 7.0, NodeKind::LanePoint);

    // Each ring side's diverge arc and merge arc cross at grade; the
    // crossing is a node so the conflict point is part of the graph.
    let w = (25.0f64 - 12.25).sqrt(); // circle-circle intersection offset
    b.node("x_b", 30.0, 7.0 - w, NodeKind::Merge);
    b.node("x_r", 53.0 + w, 25.0, NodeKind::Merge);
    b.node("x_t", 30.0, 43.0 + w, NodeKind::Merge);
    b.node("x_l", 7.0 - w, 25.0, NodeKind::Merge);

    // Four-way intersection, entries and exits per approach direction.
    b.node("en_e", 24.0, 23.5, NodeKind::IntersectionEntry);
    b.node("ex_e", 36.0, 23.5, NodeKind::IntersectionExit);
    b.node("en_n", 31.5, 19.0, NodeKind::IntersectionEntry);
    b.node("ex_n", 31.5, 31.0, NodeKind::IntersectionExit);
    b.node("en_w", 36.0, 26.5, NodeKind::IntersectionEntry);
    b.node("ex_w", 24.0, 26.5, NodeKind::IntersectionExit);
    b.node("en_s", 28.5, 31.0, NodeKind::IntersectionEntry);
    b.node("ex_s", 28.5, 19.0, NodeKind::IntersectionExit);

    // Perimeter straights, counterclockwise.
    b.straight("pb1", "p_bs", "d_nb", STRAIGHT_LIMIT);
    b.straight("pb2", "d_nb", "m_sb", STRAIGHT_LIMIT);
    b.straight("pb3", "m_sb", "p_be", STRAIGHT_LIMIT);
    b.straight("pr1", "p_rs", "d_wb", STRAIGHT_LIMIT);
    b.straight("pr2", "d_wb", "m_eb", STRAIGHT_LIMIT);
    b.straight("pr3", "m_eb", "p_re", STRAIGHT_LIMIT);
    b.straight("pt1", "p_ts", "d_sb", STRAIGHT_LIMIT);
    b.straight("pt2", "d_sb", "m_nb", STRAIGHT_LIMIT);
    b.straight("pt3", "m_nb", "p_te", STRAIGHT_LIMIT);
    b.straight("pl1", "p_ls", "d_eb", STRAIGHT_LIMIT);
    b.straight("pl2", "d_eb", "m_wb", STRAIGHT_LIMIT);
    b.straight("pl3", "m_wb", "p_le", STRAIGHT_LIMIT);

    // Perimeter corner arcs.
    b.arc("cbr", "p_be", "p_rs", 52.0, 8.0, 6.0, false);
    b.arc("ctr", "p_re", "p_ts", 52.0, 42.0, 6.0, false);
    b.arc("ctl", "p_te", "p_ls", 8.0, 42.0, 6.0, false);
    b.arc("cbl", "p_le", "p_bs", 8.0, 8.0, 6.0, false);

    // Diverge arcs off the ring onto the approaches, split at the crossing.
    b.arc("a_eb_div1", "d_eb", "x_l", 7.0, 28.5, 5.0, false);
    b.arc("a_eb_div2", "x_l", "j_eb_in", 7.0, 28.5, 5.0, false);
    b.arc("a_nb_div1", "d_nb", "x_b", 26.5, 7.0, 5.0, false);
    b.arc("a_nb_div2", "x_b", "j_nb_in", 26.5, 7.0, 5.0, false);
    b.arc("a_wb_div1", "d_wb", "x_r", 53.0, 21.5, 5.0, false);
    b.arc("a_wb_div2", "x_r", "j_wb_in", 53.0, 21.5, 5.0, false);
    b.arc("a_sb_div1", "d_sb", "x_t", 33.5, 43.0, 5.0, false);
    b.arc("a_sb_div2", "x_t", "j_sb_in", 33.5, 43.0, 5.0, false);

    // Approach straights into the intersection.
    b.straight("s_eb_in", "j_eb_in", "en_e", STRAIGHT_LIMIT);
    b.straight("s_nb_in", "j_nb_in", "en_n", STRAIGHT_LIMIT);
    b.straight("s_wb_in", "j_wb_in", "en_w", STRAIGHT_LIMIT);
    b.straight("s_sb_in", "j_sb_in", "en_s", STRAIGHT_LIMIT);

    // Intersection interior: straight / left / right per approach.
    b.straight("i_e_s", "en_e", "ex_e", STRAIGHT_LIMIT);
    b.arc("i_e_l", "en_e", "ex_n", 24.0, 31.0, 7.5, false);
    b.arc("i_e_r", "en_e", "ex_s", 24.0, 19.0, 4.5, true);
    b.straight("i_n_s", "en_n", "ex_n", STRAIGHT_LIMIT);
    b.arc("i_n_l", "en_n", "ex_w", 24.0, 19.0, 7.5, false);
    b.arc("i_n_r", "en_n", "ex_e", 36.0, 19.0, 4.5, true);
    b.straight("i_w_s", "en_w", "ex_w", STRAIGHT_LIMIT);
    b.arc("i_w_l", "en_w", "ex_s", 36.0, 19.0, 7.5, false);
    b.arc("i_w_r", "en_w", "ex_n", 36.0, 31.0, 4.5, true);
    b.straight("i_s_s", "en_s", "ex_s", STRAIGHT_LIMIT);
    b.arc("i_s_l", "en_s", "ex_e", 36.0, 31.0, 7.5, false);
    b.arc("i_s_r", "en_s", "ex_w", 24.0, 31.0, 4.5, true);

    // Outbound straights from the intersection back toward the ring.
    b.straight("s_eb_out", "ex_e", "j_eb_out", STRAIGHT_LIMIT);
    b.straight("s_nb_out", "ex_n", "j_nb_out", STRAIGHT_LIMIT);
    b.straight("s_wb_out", "ex_w", "j_wb_out", STRAIGHT_LIMIT);
    b.straight("s_sb_out", "ex_s", "j_sb_out", STRAIGHT_LIMIT);

    // Merge arcs back onto the ring, split at the crossing.
    b.arc("a_eb_mrg1", "j_eb_out", "x_r", 53.0, 28.5, 5.0, false);
    b.arc("a_eb_mrg2", "x_r", "m_eb", 53.0, 28.5, 5.0, false);
    b.arc("a_nb_mrg1", "j_nb_out", "x_t", 26.5, 43.0, 5.0, false);
    b.arc("a_nb_mrg2", "x_t", "m_nb", 26.5, 43.0, 5.0, false);
    b.arc("a_wb_mrg1", "j_wb_out", "x_l", 7.0, 21.5, 5.0, false);
    b.arc("a_wb_mrg2", "x_l", "m_wb", 7.0, 21.5, 5.0, false);
    b.arc("a_sb_mrg1", "j_sb_out", "x_b", 33.5, 7.0, 5.0, false);
    b.arc("a_sb_mrg2", "x_b", "m_sb", 33.5, 7.0, 5.0, false);

    b.build(spacing)
}

/// A small circular loop with four closely spaced merge points and bypass
/// chords, tight enough that a vehicle held at one merge is still inside the
/// previous merge's conflict area. Useful for studying mutual-yield lockups.
pub fn build_merge_ring(spacing: f64) -> Result<RoadGraph> {
    const CX: f64 = 15.0;
    const CY: f64 = 15.0;
    const R: f64 = 3.0;

    let mut b = MapBuilder::new();
    let pos = |deg: f64| {
        let rad = deg.to_radians();
        (CX + R * rad.cos(), CY + R * rad.sin())
    };

    for k in 0..4 {
        let (mx, my) = pos(90.0 * k as f64);
        b.node(&format!("m{k}"), mx, my, NodeKind::Merge);
        let (dx, dy) = pos(90.0 * k as f64 + 45.0);
        b.node(&format!("d{k}"), dx, dy, NodeKind::Diverge);
    }

    for k in 0..4 {
        let next = (k + 1) % 4;
        // Ring arcs, counterclockwise: merge -> diverge -> next merge.
        b.arc(&format!("r{k}a"), &format!("m{k}"), &format!("d{k}"), CX, CY, R, false);
        b.arc(&format!("r{k}b"), &format!("d{k}"), &format!("m{next}"), CX, CY, R, false);
        // Bypass chord rejoining at the next merge.
        b.straight(&format!("c{k}"), &format!("d{k}"), &format!("m{next}"), CURVE_LIMIT);
    }

    b.build(spacing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::NodeKind;

    #[test]
    fn default_map_fits_bounding_box() {
        let g = build_default_map(0.5).unwrap();
        let (min, max) = g.bounding_box();
        assert!(max.x - min.x <= 60.0 && max.y - min.y <= 50.0);
        assert!(g.validate().is_empty(), "{:?}", g.validate());
    }

    #[test]
    fn default_map_structure() {
        let g = build_default_map(0.5).unwrap();
        let entries: Vec<_> = g
            .nodes()
            .iter()
            .filter(|n| n.kind == NodeKind::IntersectionEntry)
            .collect();
        assert_eq!(entries.len(), 4);
        for entry in entries {
            assert_eq!(g.outgoing(&entry.id).unwrap().count(), 3, "entry {}", entry.id);
        }
        let merges = g.nodes().iter().filter(|n| n.kind == NodeKind::Merge).count();
        let diverges = g.nodes().iter().filter(|n| n.kind == NodeKind::Diverge).count();
        assert!(merges >= 2);
        assert!(diverges >= 1);
        assert!(g.has_cycle());
    }

    #[test]
    fn default_map_strongly_connected() {
        let g = build_default_map(0.5).unwrap();
        assert!(g.strongly_connected());
    }

    #[test]
    fn default_map_rejects_oversized_spacing() {
        assert!(build_default_map(1e9).is_err());
        assert!(build_default_map(0.0).is_err());
    }

    #[test]
    fn merge_ring_valid_and_connected() {
        let g = build_merge_ring(0.5).unwrap();
        assert!(g.validate().is_empty(), "{:?}", g.validate());
        assert!(g.strongly_connected());
        assert_eq!(
            g.nodes().iter().filter(|n| n.kind == NodeKind::Merge).count(),
            4
        );
    }
}
