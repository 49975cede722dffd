//! JSON map files. Waypoints are not stored; they are re-discretized from the
//! edge geometry and `spacing_m` on load, then everything is validated.

use super::{EdgeGeometry, EdgeId, EdgeSpec, Node, NodeId, NodeKind, RoadGraph};
use crate::error::{Error, Result};
use crate::math::Point2;
use serde::{Deserialize, Serialize};
use std::path::Path as FsPath;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    spacing_m: f64,
    nodes: Vec<MapNode>,
    edges: Vec<MapEdge>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapNode {
    id: NodeId,
    x: f64,
    y: f64,
    kind: NodeKind,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapEdge {
    id: EdgeId,
    from: NodeId,
    to: NodeId,
    geometry: EdgeGeometry,
    speed_limit: f64,
}

pub fn save_map(graph: &RoadGraph, path: impl AsRef<FsPath>) -> Result<()> {
    let file = MapFile {
        spacing_m: graph.spacing(),
        nodes: graph
            .nodes()
            .iter()
            .map(|n| MapNode {
                id: n.id.clone(),
                x: n.position.x,
                y: n.position.y,
                kind: n.kind,
            })
            .collect(),
        edges: graph
            .edges()
            .iter()
            .map(|e| MapEdge {
                id: e.id.clone(),
                from: e.from.clone(),
                to: e.to.clone(),
                geometry: e.geometry,
                speed_limit: e.speed_limit,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Parse and assemble a map file without running the full validator
/// (structural errors like dangling endpoints still fail here).
pub fn load_map_raw(path: impl AsRef<FsPath>) -> Result<RoadGraph> {
    let text = std::fs::read_to_string(&path)?;
    let file: MapFile = serde_json::from_str(&text)
        .map_err(|e| Error::map(format!("{}: {e}", path.as_ref().display())))?;
    let nodes = file
        .nodes
        .into_iter()
        .map(|n| Node {
            id: n.id,
            position: Point2::new(n.x, n.y),
            kind: n.kind,
        })
        .collect();
    let edges = file
        .edges
        .into_iter()
        .map(|e| EdgeSpec {
            id: e.id,
            from: e.from,
            to: e.to,
            geometry: e.geometry,
            speed_limit: e.speed_limit,
        })
        .collect();
    RoadGraph::assemble(nodes, edges, file.spacing_m)
}

/// Load a map file, rejecting it on the first invariant violation.
pub fn load_map(path: impl AsRef<FsPath>) -> Result<RoadGraph> {
    let graph = load_map_raw(path)?;
    let diags = graph.validate();
    if let Some(first) = diags.first() {
        return Err(Error::map(first.clone()));
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::build_default_map;

    #[test]
    fn save_load_round_trip() {
        let g = build_default_map(0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.json");
        save_map(&g, &path).unwrap();
        let loaded = load_map(&path).unwrap();
        assert_eq!(loaded.nodes().len(), g.nodes().len());
        assert_eq!(loaded.edges().len(), g.edges().len());
        assert!(loaded.validate().is_empty());
        assert_eq!(loaded.spacing(), 0.5);
    }

    #[test]
    fn dangling_endpoint_names_edge() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{
  "spacing_m": 0.5,
  "nodes": [{"id": "a", "x": 0.0, "y": 0.0, "kind": "lane_point"}],
  "edges": [{"id": "e9", "from": "a", "to": "ghost",
             "geometry": {"type": "straight"}, "speed_limit": 3.0}]
}"#,
        )
        .unwrap();
        let err = load_map(&path).unwrap_err().to_string();
        assert!(err.contains("e9") && err.contains("ghost"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extra.json");
        std::fs::write(&path, r#"{"spacing_m": 0.5, "nodes": [], "edges": [], "bogus": 1}"#)
            .unwrap();
        assert!(load_map(&path).is_err());
    }
}
