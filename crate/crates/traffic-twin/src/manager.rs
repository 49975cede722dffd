//! The centralized planning cycle: keep every car routed, localize it into
//! path coordinates from its last received state snapshot, plan a polynomial
//! trajectory with car-following and red-light handling, then deconflict the
//! buffer (optimized mode) or apply first-come-first-served stop/go overrides
//! (baseline mode) and broadcast one trajectory command per car.
//!
//! The manager's knowledge of the world comes exclusively from delivered
//! messages: vehicle snapshots and signal phase broadcasts, both subject to
//! whatever the channel did to them. It never reads simulator ground truth.

use crate::conflict::{
    self, FifoGate, GateCarInfo, GateCommand, PlanInput, RouteContext, SeparationParams,
};
use crate::error::{Error, Result};
use crate::frenet::{self, FrenetState};
use crate::map::{a_star, random_goal, NodeId, Path, RoadGraph};
use crate::math::Point2;
use crate::planner::{self, Obstacle, ObstacleKind, PlannerParams, Trajectory};
use crate::v2x::{LightId, LightState, Payload, SpatData, V2XMessage};
use crate::vehicle::VehicleState;
use crate::{parallel, CarId};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManagerMode {
    Optimized,
    FifoBaseline,
}

/// Ties a traffic light to the intersection entry node it guards; the stop
/// line sits at that node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightBinding {
    pub light_id: LightId,
    pub node_id: NodeId,
}

#[derive(Debug, Clone)]
pub struct ManagerConfig {
    pub mode: ManagerMode,
    pub planner: PlannerParams,
    pub separation: SeparationParams,
    /// A car within this distance of its goal node has completed the route.
    pub goal_radius: f64,
    /// Off-path rejection distance for localization.
    pub corridor: f64,
    /// How far ahead along the path another car counts as a leader.
    pub leader_lookahead: f64,
    /// Lateral window for leader matching.
    pub leader_corridor: f64,
    /// Red lights within this distance become virtual stop-line obstacles.
    pub stop_line_lookahead: f64,
    /// Checkpoint radius of the baseline gate.
    pub zone_radius: f64,
    /// How far ahead gate checkpoints are honored.
    pub gate_lookahead: f64,
    /// Downstream window for merge classification.
    pub merge_lookahead: f64,
    /// Worker threads for the per-car planning fan-out.
    pub workers: usize,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        ManagerConfig {
            mode: ManagerMode::Optimized,
            planner: PlannerParams::default(),
            separation: SeparationParams::default(),
            goal_radius: 1.0,
            corridor: frenet::DEFAULT_CORRIDOR,
            leader_lookahead: 15.0,
            leader_corridor: 1.0,
            stop_line_lookahead: 8.0,
            zone_radius: 3.0,
            gate_lookahead: 8.0,
            merge_lookahead: 8.0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteCompletion {
    pub car: CarId,
    pub goal: NodeId,
    pub travel_time: f64,
}

#[derive(Debug, Default)]
pub struct TickOutput {
    /// One trajectory command per managed car, ascending car id.
    pub commands: Vec<Trajectory>,
    pub completions: Vec<RouteCompletion>,
    /// Cars skipped because no usable state snapshot is available.
    pub skipped: u32,
}

#[derive(Debug, Default)]
struct CarEntry {
    path: Option<Arc<Path>>,
    goal: Option<NodeId>,
    route_started: f64,
    s_hint: Option<f64>,
    bsm: Option<(VehicleState, f64)>,
    last_cmd: Option<Trajectory>,
}

pub struct Manager {
    graph: Arc<RoadGraph>,
    cfg: ManagerConfig,
    cars: BTreeMap<CarId, CarEntry>,
    route_rngs: BTreeMap<CarId, ChaCha8Rng>,
    light_beliefs: BTreeMap<LightId, (SpatData, f64)>,
    bindings: Vec<LightBinding>,
    obstacles: Vec<Obstacle>,
    gate: FifoGate,
}

impl Manager {
    pub fn new(
        graph: Arc<RoadGraph>,
        cfg: ManagerConfig,
        car_ids: &[CarId],
        bindings: Vec<LightBinding>,
        obstacles: Vec<Obstacle>,
        seed: u64,
    ) -> Self {
        let gate = FifoGate::new(&graph, cfg.zone_radius);
        let cars = car_ids
            .iter()
            .map(|&id| (id, CarEntry::default()))
            .collect();
        let route_rngs = car_ids
            .iter()
            .map(|&id| (id, crate::rng::route_rng(seed, id.0)))
            .collect();
        Manager {
            graph,
            cfg,
            cars,
            route_rngs,
            light_beliefs: BTreeMap::new(),
            bindings,
            obstacles,
            gate,
        }
    }

    pub fn mode(&self) -> ManagerMode {
        self.cfg.mode
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.cfg
    }

    /// Feed one delivered message into the manager's world belief.
    pub fn handle_message(&mut self, msg: &V2XMessage, received_at: f64) {
        match &msg.payload {
            Payload::Bsm(bsm) => {
                if let Some(entry) = self.cars.get_mut(&bsm.state.car_id) {
                    entry.bsm = Some((bsm.state, received_at));
                }
            }
            Payload::Spat(spat) => {
                self.light_beliefs
                    .insert(spat.light_id, (*spat, received_at));
            }
            _ => {}
        }
    }

    /// Draw a fresh reachable goal and route to it. The new path begins with
    /// `anchor_edge` — the edge the car currently occupies — so the car
    /// projects onto its own route immediately; the goal draw and the A*
    /// route start from that edge's end node.
    fn reroute(&mut self, car: CarId, anchor_edge: &crate::map::EdgeId, now: f64) -> Result<()> {
        let anchor = self.graph.edge(anchor_edge)?.to.clone();
        let rng = self.route_rngs.get_mut(&car).expect("known car");
        let goal = random_goal(&self.graph, &anchor, rng)?;
        let route = a_star(&self.graph, &anchor, &goal)?;
        let mut edges = Vec::with_capacity(route.edges.len() + 1);
        edges.push(anchor_edge.clone());
        edges.extend(route.edges.iter().cloned());
        let path = Arc::new(Path::from_edges(&self.graph, &edges)?);
        let entry = self.cars.get_mut(&car).unwrap();
        entry.path = Some(path);
        entry.goal = Some(goal);
        entry.route_started = now;
        entry.s_hint = None;
        Ok(())
    }

    /// The edge to anchor a fresh route on: when a goal node was just
    /// reached, the nearest of its incoming edges; otherwise the nearest
    /// edge overall.
    fn anchor_edge(&self, position: Point2, reached_goal: Option<&NodeId>) -> crate::map::EdgeId {
        if let Some(goal) = reached_goal {
            let incoming: Option<&crate::map::Edge> = self
                .graph
                .edges()
                .iter()
                .filter(|e| &e.to == goal)
                .min_by(|a, b| {
                    let da = a
                        .waypoints
                        .iter()
                        .map(|w| w.position.dist(position))
                        .fold(f64::INFINITY, f64::min);
                    let db = b
                        .waypoints
                        .iter()
                        .map(|w| w.position.dist(position))
                        .fold(f64::INFINITY, f64::min);
                    da.total_cmp(&db).then_with(|| a.id.cmp(&b.id))
                });
            if let Some(edge) = incoming {
                return edge.id.clone();
            }
        }
        crate::map::nearest_edge(&self.graph, position).0.id.clone()
    }

    /// One planning cycle at simulation time `now`.
    pub fn tick(&mut self, now: f64) -> Result<TickOutput> {
        let mut out = TickOutput::default();
        let car_ids: Vec<CarId> = self.cars.keys().copied().collect();

        // Phase 1, serial in ascending car id: route maintenance and
        // localization. Goal draws consume per-car rng streams.
        let mut localized: BTreeMap<CarId, FrenetState> = BTreeMap::new();
        for &car in &car_ids {
            let Some((state, _)) = self.cars[&car].bsm else {
                out.skipped += 1;
                continue;
            };
            let position = state.position();

            // Goal reached?
            if let (Some(goal), Some(_)) = (&self.cars[&car].goal, &self.cars[&car].path) {
                let goal_pos = self.graph.node(goal)?.position;
                if position.dist(goal_pos) <= self.cfg.goal_radius {
                    out.completions.push(RouteCompletion {
                        car,
                        goal: goal.clone(),
                        travel_time: now - self.cars[&car].route_started,
                    });
                    let reached = goal.clone();
                    self.cars.get_mut(&car).unwrap().path = None;
                    let edge = self.anchor_edge(position, Some(&reached));
                    self.reroute(car, &edge, now)?;
                }
            }
            if self.cars[&car].path.is_none() {
                let edge = self.anchor_edge(position, None);
                self.reroute(car, &edge, now)?;
            }

            // Localize; an off-path fix invalidates the route and retries
            // once from the nearest edge.
            for attempt in 0..2 {
                let entry = &self.cars[&car];
                let path = entry.path.as_ref().unwrap();
                match frenet::to_frenet_near(
                    path,
                    state.pose(),
                    state.v,
                    entry.s_hint,
                    self.cfg.corridor,
                ) {
                    Ok(fs) => {
                        localized.insert(car, fs);
                        self.cars.get_mut(&car).unwrap().s_hint = Some(fs.s);
                        break;
                    }
                    Err(Error::OffPath { .. }) if attempt == 0 => {
                        let edge = self.anchor_edge(position, None);
                        self.cars.get_mut(&car).unwrap().path = None;
                        self.reroute(car, &edge, now)?;
                    }
                    Err(Error::OffPath { .. }) => {
                        out.skipped += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        }

        // Assemble plan inputs against the frozen belief snapshot.
        let mut inputs: BTreeMap<CarId, PlanInput> = BTreeMap::new();
        for (&car, fs) in &localized {
            let entry = &self.cars[&car];
            let path = Arc::clone(entry.path.as_ref().unwrap());
            let leader = self.find_leader(car, &path, fs);
            let mut obstacles = self.obstacles.clone();
            obstacles.extend(self.red_light_obstacles(&path, fs.s));
            let window_end = (fs.s + self.cfg.planner.cruise_speed_cap * self.cfg.planner.horizon)
                .min(path.total_length);
            let speed_limit = path.speed_limit_over(fs.s, window_end);
            inputs.insert(
                car,
                PlanInput {
                    path,
                    fs: *fs,
                    leader,
                    obstacles,
                    speed_limit,
                    start_time: now,
                },
            );
        }

        // Phase 2, deterministic-parallel: plan every car against the
        // snapshot. Results land in ascending car id order.
        let planned_ids: Vec<CarId> = inputs.keys().copied().collect();
        let results = parallel::map_ordered(self.cfg.workers, &planned_ids, |_, car| {
            let input = &inputs[car];
            planner::plan(
                &input.path,
                &input.fs,
                &self.cfg.planner,
                input.leader.as_ref(),
                &input.obstacles,
                input.speed_limit,
                *car,
                now,
            )
        });
        let mut buffer = Vec::with_capacity(results.len());
        for r in results {
            buffer.push(r?);
        }

        // Cars without a fresh plan keep their previous command in the
        // buffer so others still avoid them.
        for &car in &car_ids {
            if !planned_ids.contains(&car) {
                if let Some(prev) = &self.cars[&car].last_cmd {
                    buffer.push(prev.clone());
                }
            }
        }

        // Phase 3, serial: conflict resolution or gate overrides.
        match self.cfg.mode {
            ManagerMode::Optimized => {
                let paths: BTreeMap<CarId, Arc<Path>> = inputs
                    .iter()
                    .map(|(&c, i)| (c, Arc::clone(&i.path)))
                    .collect();
                let ctx = RouteContext {
                    graph: &self.graph,
                    paths: &paths,
                    merge_lookahead: self.cfg.merge_lookahead,
                };
                conflict::resolve_all(
                    &mut buffer,
                    &inputs,
                    &self.cfg.separation,
                    &self.cfg.planner,
                    Some(&ctx),
                )?;
            }
            ManagerMode::FifoBaseline => {
                let infos = self.gate_infos(&inputs);
                let commands = self.gate.update(&infos);
                for traj in buffer.iter_mut() {
                    let car = traj.car_id;
                    let (Some(cmd), Some(input)) = (commands.get(&car), inputs.get(&car)) else {
                        continue;
                    };
                    if let GateCommand::StopAt {
                        checkpoint_s,
                        boundary_offset,
                    } = cmd
                    {
                        // A car that can no longer brake to the boundary is
                        // committed; stopping it inside the conflict area
                        // would be worse than letting it clear.
                        let hold = checkpoint_s - boundary_offset;
                        let v = input.fs.s_dot.max(0.0);
                        let brake_need = v * v / (2.0 * self.cfg.planner.a_max);
                        if hold <= input.fs.s + brake_need {
                            continue;
                        }
                        *traj = planner::plan_scaled(
                            &input.path,
                            &input.fs,
                            &self.cfg.planner,
                            input.leader.as_ref(),
                            &input.obstacles,
                            input.speed_limit,
                            1.0,
                            Some(hold),
                            car,
                            now,
                        )?;
                    }
                }
            }
        }

        // Emit commands for freshly planned cars only, ascending id.
        buffer.retain(|t| planned_ids.contains(&t.car_id));
        buffer.sort_by_key(|t| t.car_id);
        for traj in &buffer {
            self.cars.get_mut(&traj.car_id).unwrap().last_cmd = Some(traj.clone());
        }
        out.commands = buffer;
        Ok(out)
    }

    /// Nearest other car ahead on the ego path, as a path-relative state.
    fn find_leader(&self, ego: CarId, path: &Path, fs: &FrenetState) -> Option<FrenetState> {
        let mut best: Option<FrenetState> = None;
        for (&other, entry) in &self.cars {
            if other == ego {
                continue;
            }
            let Some((state, _)) = entry.bsm else { continue };
            let Some((s, d)) = frenet::project_point(path, state.position()) else {
                continue;
            };
            if d.abs() > self.cfg.leader_corridor {
                continue;
            }
            if s <= fs.s + 1e-6 || s - fs.s > self.cfg.leader_lookahead {
                continue;
            }
            let Ok(pose) = frenet::to_euclidean(path, s, 0.0) else { continue };
            let s_dot =
                (state.v * crate::math::wrap_angle(state.heading - pose.heading).cos()).max(0.0);
            if best.as_ref().map_or(true, |b| s < b.s) {
                best = Some(FrenetState {
                    s,
                    d,
                    s_dot,
                    d_dot: 0.0,
                    s_ddot: 0.0,
                });
            }
        }
        best
    }

    /// Stop lines of believed-red lights ahead, as small static obstacles
    /// the planner brakes for.
    fn red_light_obstacles(&self, path: &Path, ego_s: f64) -> Vec<Obstacle> {
        let mut out = Vec::new();
        for binding in &self.bindings {
            let Some((spat, _)) = self.light_beliefs.get(&binding.light_id) else {
                continue;
            };
            if spat.state != LightState::Red {
                continue;
            }
            let Ok(node) = self.graph.node(&binding.node_id) else { continue };
            // The stop line matters only while the entry node lies ahead on
            // the path within the reaction window.
            for seg in &path.segments {
                let Ok(edge) = self.graph.edge(&seg.edge_id) else { continue };
                if edge.to == binding.node_id
                    && seg.s_end > ego_s + 0.01
                    && seg.s_end - ego_s <= self.cfg.stop_line_lookahead
                {
                    out.push(Obstacle {
                        position: node.position,
                        radius: 0.05,
                        kind: ObstacleKind::Static,
                    });
                }
            }
        }
        out
    }

    fn gate_infos(&self, inputs: &BTreeMap<CarId, PlanInput>) -> BTreeMap<CarId, GateCarInfo> {
        let mut infos = BTreeMap::new();
        for (&car, input) in inputs {
            let position = self.cars[&car]
                .bsm
                .map(|(s, _)| s.position())
                .unwrap_or_default();
            let mut upcoming = Vec::new();
            for seg in &input.path.segments {
                if seg.s_end < input.fs.s || seg.s_end - input.fs.s > self.cfg.gate_lookahead {
                    continue;
                }
                let Ok(edge) = self.graph.edge(&seg.edge_id) else { continue };
                if self.gate.zone_of(&edge.to).is_some() {
                    upcoming.push((edge.to.clone(), seg.s_end));
                }
            }
            infos.insert(
                car,
                GateCarInfo {
                    position,
                    path_s: input.fs.s,
                    upcoming,
                },
            );
        }
        infos
    }

    pub fn goal_of(&self, car: CarId) -> Option<&NodeId> {
        self.cars.get(&car).and_then(|e| e.goal.as_ref())
    }

    pub fn path_of(&self, car: CarId) -> Option<&Arc<Path>> {
        self.cars.get(&car).and_then(|e| e.path.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::build_default_map;

    use crate::v2x::{AgentId, BsmData, LightId};

    fn state_at(car: CarId, node: &str, g: &RoadGraph) -> VehicleState {
        let n = g.node(&node.into()).unwrap();
        let heading = g
            .outgoing(&n.id)
            .unwrap()
            .next()
            .map(|e| e.waypoints[0].heading)
            .unwrap_or(0.0);
        VehicleState {
            car_id: car,
            x: n.position.x,
            y: n.position.y,
            heading,
            v: 0.0,
            steering: 0.0,
            wheelbase: 0.6,
            length: 0.9,
            width: 0.5,
        }
    }

    fn bsm(state: VehicleState) -> V2XMessage {
        V2XMessage {
            msg_id: 0,
            sender: AgentId::Car(state.car_id),
            payload: Payload::Bsm(BsmData { state }),
            created: 0.0,
        }
    }

    fn manager_with_cars(nodes: &[&str]) -> (Manager, Arc<RoadGraph>) {
        let g = Arc::new(build_default_map(0.5).unwrap());
        let ids: Vec<CarId> = (0..nodes.len() as u32).map(CarId).collect();
        let mut m = Manager::new(
            Arc::clone(&g),
            ManagerConfig::default(),
            &ids,
            vec![],
            vec![],
            42,
        );
        for (i, node) in nodes.iter().enumerate() {
            let s = state_at(CarId(i as u32), node, &g);
            m.handle_message(&bsm(s), 0.0);
        }
        (m, g)
    }

    #[test]
    fn unmanaged_car_is_skipped() {
        let g = Arc::new(build_default_map(0.5).unwrap());
        let mut m = Manager::new(
            Arc::clone(&g),
            ManagerConfig::default(),
            &[CarId(0)],
            vec![],
            vec![],
            1,
        );
        let out = m.tick(0.0).unwrap();
        assert_eq!(out.skipped, 1);
        assert!(out.commands.is_empty());
    }

    #[test]
    fn single_car_gets_route_and_command() {
        let (mut m, _g) = manager_with_cars(&["p_bs"]);
        let out = m.tick(0.0).unwrap();
        assert_eq!(out.commands.len(), 1);
        assert!(m.goal_of(CarId(0)).is_some());
        assert!(m.path_of(CarId(0)).is_some());
        let traj = &out.commands[0];
        assert!(!traj.frames.is_empty());
        assert_eq!(traj.start_time, 0.0);
    }

    #[test]
    fn goal_sequences_are_deterministic_per_seed() {
        let run = || {
            let (mut m, _g) = manager_with_cars(&["p_bs", "p_ts"]);
            m.tick(0.0).unwrap();
            (m.goal_of(CarId(0)).cloned(), m.goal_of(CarId(1)).cloned())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn red_light_stops_then_green_crosses() {
        let g = Arc::new(build_default_map(0.5).unwrap());
        let binding = LightBinding {
            light_id: LightId(0),
            node_id: "en_e".into(),
        };
        let mut m = Manager::new(
            Arc::clone(&g),
            ManagerConfig::default(),
            &[CarId(0)],
            vec![binding],
            vec![],
            42,
        );
        // Rolling eastward, 5 m short of the stop line.
        let entry = g.node(&"en_e".into()).unwrap().position;
        let mut state = state_at(CarId(0), "j_eb_in", &g);
        state.x = entry.x - 5.0;
        state.y = entry.y;
        state.v = 2.0;
        m.handle_message(&bsm(state), 0.0);
        let spat = |state, t| V2XMessage {
            msg_id: 1,
            sender: AgentId::Light(LightId(0)),
            payload: Payload::Spat(SpatData {
                light_id: LightId(0),
                state,
                time_to_change: 5.0,
            }),
            created: t,
        };
        m.handle_message(&spat(LightState::Red, 0.0), 0.0);

        let out = m.tick(0.0).unwrap();
        let traj = &out.commands[0];
        let min_gap_to_line = traj
            .frames
            .iter()
            .map(|f| Point2::new(f.x, f.y).dist(entry))
            .fold(f64::INFINITY, f64::min);
        assert!(
            min_gap_to_line >= m.cfg.planner.standstill_gap - 1e-6,
            "stopped {min_gap_to_line} m from the line"
        );
        assert!(traj.frames.last().unwrap().v < 1e-6);

        // Light turns green: next tick's trajectory crosses the line.
        m.handle_message(&spat(LightState::Green, 0.2), 0.2);
        let out = m.tick(0.2).unwrap();
        let traj = &out.commands[0];
        assert!(
            traj.frames.iter().any(|f| f.x > entry.x + 0.5),
            "trajectory should cross the stop line on green"
        );
    }

    #[test]
    fn goal_reached_draws_new_route() {
        let (mut m, g) = manager_with_cars(&["p_bs"]);
        m.tick(0.0).unwrap();
        let goal = m.goal_of(CarId(0)).unwrap().clone();
        // Move the car's belief onto the goal node.
        let goal_state = {
            let n = g.node(&goal).unwrap();
            let mut s = state_at(CarId(0), goal.as_str(), &g);
            s.x = n.position.x;
            s.y = n.position.y;
            s
        };
        m.handle_message(&bsm(goal_state), 5.0);
        let out = m.tick(5.0).unwrap();
        assert_eq!(out.completions.len(), 1);
        assert_eq!(out.completions[0].goal, goal);
        assert!((out.completions[0].travel_time - 5.0).abs() < 1e-9);
        assert_ne!(m.goal_of(CarId(0)).unwrap(), &goal);
    }

    #[test]
    fn optimized_buffer_is_conflict_free() {
        let (mut m, _g) = manager_with_cars(&["en_e", "en_n", "en_w", "en_s"]);
        let out = m.tick(0.0).unwrap();
        assert_eq!(out.commands.len(), 4);
        for t in &out.commands {
            let conflicts = conflict::detect(t, &out.commands, &m.cfg.separation, None).unwrap();
            assert!(conflicts.is_empty(), "{conflicts:?}");
        }
    }
}
