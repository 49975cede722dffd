//! Fixed-timestep simulation loop binding vehicles, the manager, traffic
//! lights, and the broadcast channel, with metrics and trace output.
//!
//! Time is an integer tick count times `vehicle_dt`; every other period must
//! be an integer multiple of it, so no float drift accumulates. Randomness is
//! split into per-concern streams, and all per-tick fan-out commits results
//! in car-id order: a run is a pure function of its config.

mod metrics;
mod trace;

pub use metrics::{CrossTrackError, MessageStats, Metrics};

use crate::conflict::SeparationParams;
use crate::error::{Error, Result};
use crate::frenet;
use crate::manager::{LightBinding, Manager, ManagerConfig, ManagerMode};
use crate::map::{build_default_map, build_merge_ring, load_map, NodeId, RoadGraph};
use crate::math::Point2;
use crate::planner::{Obstacle, PlannerParams, Trajectory};
use crate::v2x::{
    AgentId, BroadcastOutcome, ChannelModel, LightId, MapDigest, MessageBus, Payload, Phase,
    TrafficLight, V2XMessage,
};
use crate::vehicle::{self, Control, NoiseModel, VehicleParams, VehicleState};
use crate::{parallel, CarId};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use trace::{Event, EventWriter, TraceWriter};

/// Where the road network comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapSource {
    /// The bundled 60 x 50 m intersection map.
    Default,
    /// The small mutual-yield study ring.
    MergeRing,
    /// A JSON map file.
    File(PathBuf),
}

/// A traffic light bound to the intersection entry it guards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightSpec {
    pub light_id: LightId,
    pub node_id: NodeId,
    pub phases: Vec<Phase>,
}

/// A scripted emergency preemption request broadcast at `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreemptionSpec {
    pub time: f64,
    pub light_id: LightId,
    pub phase_index: usize,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    /// Simulated seconds.
    pub duration: f64,
    /// Vehicle integration step, s.
    pub vehicle_dt: f64,
    /// Manager cycle period, s (multiple of vehicle_dt).
    pub planning_period: f64,
    /// Vehicle snapshot broadcast period, s (multiple of vehicle_dt).
    pub bsm_period: f64,
    pub n_cars: u32,
    pub mode: ManagerMode,
    /// Perfect world: zero noise, zero latency/loss, vehicles teleport along
    /// their trajectory frames.
    pub ideal: bool,
    pub channel: ChannelModel,
    pub noise: NoiseModel,
    pub planner: PlannerParams,
    pub separation: SeparationParams,
    pub vehicle: VehicleParams,
    pub map: MapSource,
    /// Waypoint spacing for built maps, m.
    pub spacing: f64,
    /// Explicit spawn nodes (one per car); evenly spread over the map when
    /// absent.
    pub starts: Option<Vec<NodeId>>,
    pub lights: Vec<LightSpec>,
    pub obstacles: Vec<Obstacle>,
    pub preemptions: Vec<PreemptionSpec>,
    /// Worker threads for per-car fan-out (any value yields identical output).
    pub workers: usize,
    /// Write per-message events into events.jsonl.
    pub log_messages: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 42,
            duration: 60.0,
            vehicle_dt: 0.02,
            planning_period: 0.2,
            bsm_period: 0.1,
            n_cars: 10,
            mode: ManagerMode::Optimized,
            ideal: false,
            channel: ChannelModel::default(),
            noise: NoiseModel::default(),
            planner: PlannerParams::default(),
            separation: SeparationParams::default(),
            vehicle: VehicleParams::default(),
            map: MapSource::Default,
            spacing: crate::map::DEFAULT_SPACING,
            starts: None,
            lights: Vec::new(),
            obstacles: Vec::new(),
            preemptions: Vec::new(),
            workers: 1,
            log_messages: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.duration <= 0.0 {
            return Err(Error::config("duration must be > 0"));
        }
        if self.vehicle_dt <= 0.0 {
            return Err(Error::config("vehicle_dt must be > 0"));
        }
        if self.n_cars < 1 {
            return Err(Error::config("n_cars must be >= 1"));
        }
        if !(self.vehicle_dt <= self.planner.dt && self.planner.dt <= self.planning_period) {
            return Err(Error::config(
                "rates must satisfy vehicle_dt <= trajectory dt <= planning_period",
            ));
        }
        for (name, period) in [
            ("planning_period", self.planning_period),
            ("bsm_period", self.bsm_period),
            ("trajectory dt", self.planner.dt),
        ] {
            let ratio = period / self.vehicle_dt;
            if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
                return Err(Error::config(format!(
                    "{name} ({period}) must be an integer multiple of vehicle_dt ({})",
                    self.vehicle_dt
                )));
            }
        }
        self.channel.validate()?;
        self.planner.validate()?;
        self.separation.validate(self.vehicle.length)?;
        if let Some(starts) = &self.starts {
            if starts.len() != self.n_cars as usize {
                return Err(Error::config(format!(
                    "starts lists {} nodes for {} cars",
                    starts.len(),
                    self.n_cars
                )));
            }
        }
        Ok(())
    }

    pub fn build_graph(&self) -> Result<RoadGraph> {
        match &self.map {
            MapSource::Default => build_default_map(self.spacing),
            MapSource::MergeRing => build_merge_ring(self.spacing),
            MapSource::File(path) => load_map(path),
        }
    }

    fn effective_channel(&self) -> ChannelModel {
        if self.ideal {
            ChannelModel::IDEAL
        } else {
            self.channel
        }
    }

    fn effective_noise(&self) -> NoiseModel {
        if self.ideal {
            NoiseModel {
                enabled: false,
                ..self.noise
            }
        } else {
            self.noise
        }
    }
}

/// The standard pair-of-pairs signal plan for the default map: east/west
/// green while north/south is red, with a yellow in between.
pub fn default_intersection_lights(graph: &RoadGraph) -> Vec<LightSpec> {
    use crate::v2x::LightState::*;
    let mut specs = Vec::new();
    let mut entries: Vec<_> = graph
        .nodes()
        .iter()
        .filter(|n| n.kind == crate::map::NodeKind::IntersectionEntry)
        .collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    for (i, entry) in entries.iter().enumerate() {
        // Approach direction from the entry's outgoing straight edge.
        let heading = graph
            .outgoing(&entry.id)
            .ok()
            .and_then(|mut it| it.next().map(|e| e.waypoints[0].heading))
            .unwrap_or(0.0);
        let east_west = heading.cos().abs() > heading.sin().abs();
        let phases = if east_west {
            vec![
                Phase { state: Green, duration: 8.0 },
                Phase { state: Yellow, duration: 2.0 },
                Phase { state: Red, duration: 10.0 },
            ]
        } else {
            vec![
                Phase { state: Red, duration: 10.0 },
                Phase { state: Green, duration: 8.0 },
                Phase { state: Yellow, duration: 2.0 },
            ]
        };
        specs.push(LightSpec {
            light_id: LightId(i as u32),
            node_id: entry.id.clone(),
            phases,
        });
    }
    specs
}

/// One row of the lag experiment.
#[derive(Debug, Clone, Serialize)]
pub struct LagRow {
    pub latency: f64,
    pub mean_response_delay: f64,
    pub min_separation: Option<f64>,
}

/// Everything a run produces beyond the serialized metrics.
#[derive(Debug, Default)]
pub struct RunExtras {
    pub mean_response_delay: f64,
    pub response_samples: u64,
    pub max_abs_cross_track: f64,
    pub unmanaged_ticks: u64,
    /// Ticks where a car sat outside the map bounding box inflated by 1 m.
    pub bbox_excursions: u64,
    /// Completed goals per car, in completion order.
    pub goal_sequences: BTreeMap<CarId, Vec<NodeId>>,
    pub completions_per_car: BTreeMap<CarId, u64>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub extras: RunExtras,
}

/// Run a simulation, optionally writing trace.csv / events.jsonl /
/// metrics.json into `out_dir`.
pub fn run(cfg: &SimConfig, out_dir: Option<&Path>) -> Result<RunOutput> {
    cfg.validate()?;
    Engine::new(cfg, out_dir)?.run()
}

/// Run one simulation per latency value with the same seed and report how
/// quickly vehicles responded to their commands.
pub fn lag_experiment(cfg: &SimConfig, latencies: &[f64]) -> Result<Vec<LagRow>> {
    let mut rows = Vec::with_capacity(latencies.len());
    for &latency in latencies {
        if latency < 0.0 {
            return Err(Error::config("latencies must be >= 0"));
        }
        let mut one = cfg.clone();
        one.channel.base_latency = latency;
        let out = run(&one, None)?;
        rows.push(LagRow {
            latency,
            mean_response_delay: out.extras.mean_response_delay,
            min_separation: out.metrics.min_separation,
        });
    }
    Ok(rows)
}

struct LatestCmd {
    traj: Trajectory,
    /// The route the trajectory was planned on, snapshotted at delivery so
    /// ideal-mode teleporting can interpolate along exact geometry.
    path: Option<Arc<crate::map::Path>>,
    created: f64,
    used: bool,
}

struct VehicleSim {
    state: VehicleState,
    cmd: Option<LatestCmd>,
    /// Ground-truth localization hint for the trace.
    s_hint: Option<f64>,
    path_ptr: usize,
}

struct Engine<'c> {
    cfg: &'c SimConfig,
    graph: Arc<RoadGraph>,
    manager: Manager,
    vehicles: Vec<VehicleSim>,
    lights: Vec<TrafficLight>,
    bus: MessageBus,
    channel: ChannelModel,
    noise: NoiseModel,
    channel_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    acc: metrics::MetricsAccumulator,
    extras: RunExtras,
    trace: Option<TraceWriter>,
    events: Option<EventWriter>,
    bbox: (Point2, Point2),
    preemptions_sent: Vec<bool>,
    /// Pairs currently in violation, for episode events.
    violating: Vec<(CarId, CarId)>,
    all_slow_since: Option<f64>,
    deadlock_flagged: bool,
    response_delay_sum: f64,
}

impl<'c> Engine<'c> {
    fn new(cfg: &'c SimConfig, out_dir: Option<&Path>) -> Result<Self> {
        let graph = Arc::new(cfg.build_graph()?);
        let diags = graph.validate();
        if let Some(first) = diags.first() {
            return Err(Error::map(first.clone()));
        }

        let starts = spawn_nodes(cfg, &graph)?;
        let car_ids: Vec<CarId> = (0..cfg.n_cars).map(CarId).collect();
        let vehicles = car_ids
            .iter()
            .zip(&starts)
            .map(|(&id, node)| {
                let n = graph.node(node)?;
                let heading = graph
                    .outgoing(node)?
                    .next()
                    .map(|e| e.waypoints[0].heading)
                    .unwrap_or(0.0);
                Ok(VehicleSim {
                    state: VehicleState::at_pose(
                        id,
                        crate::math::Pose {
                            position: n.position,
                            heading,
                        },
                        &cfg.vehicle,
                    ),
                    cmd: None,
                    s_hint: None,
                    path_ptr: 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut lights = Vec::new();
        let mut bindings = Vec::new();
        for spec in &cfg.lights {
            graph.node(&spec.node_id)?;
            lights.push(TrafficLight::new(spec.light_id, spec.phases.clone())?);
            bindings.push(LightBinding {
                light_id: spec.light_id,
                node_id: spec.node_id.clone(),
            });
        }
        for p in &cfg.preemptions {
            if !lights.iter().any(|l| l.light_id == p.light_id) {
                return Err(Error::config(format!(
                    "preemption at t={} names unknown {}",
                    p.time, p.light_id
                )));
            }
        }

        let manager_cfg = ManagerConfig {
            mode: cfg.mode,
            planner: cfg.planner,
            separation: cfg.separation,
            workers: cfg.workers,
            ..ManagerConfig::default()
        };
        let manager = Manager::new(
            Arc::clone(&graph),
            manager_cfg,
            &car_ids,
            bindings,
            cfg.obstacles.clone(),
            cfg.seed,
        );

        let (trace, events) = match out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                (
                    Some(TraceWriter::create(&dir.join("trace.csv"))?),
                    Some(EventWriter::create(&dir.join("events.jsonl"))?),
                )
            }
            None => (None, None),
        };

        let bbox = graph.bounding_box();
        Ok(Engine {
            cfg,
            channel: cfg.effective_channel(),
            noise: cfg.effective_noise(),
            channel_rng: crate::rng::channel_rng(cfg.seed),
            noise_rng: crate::rng::noise_rng(cfg.seed),
            manager,
            vehicles,
            lights,
            bus: MessageBus::new(),
            acc: metrics::MetricsAccumulator::new(),
            extras: RunExtras::default(),
            trace,
            events,
            bbox,
            preemptions_sent: vec![false; cfg.preemptions.len()],
            violating: Vec::new(),
            all_slow_since: None,
            deadlock_flagged: false,
            response_delay_sum: 0.0,
            graph,
        })
    }

    fn run(mut self) -> Result<RunOutput> {
        let dt = self.cfg.vehicle_dt;
        let ticks = (self.cfg.duration / dt).round() as u64;
        let planning_every = (self.cfg.planning_period / dt).round() as u64;
        let bsm_every = (self.cfg.bsm_period / dt).round() as u64;

        for tick in 0..ticks {
            let now = tick as f64 * dt;

            self.send_due_preemptions(now)?;
            self.deliver(now)?;

            if tick % planning_every == 0 {
                self.manager_cycle(now)?;
                self.deliver(now)?;
            }

            self.step_vehicles(now)?;

            if tick % bsm_every == 0 {
                if tick == 0 {
                    self.broadcast_map_digest(now)?;
                }
                self.broadcast_bsms(now)?;
                self.broadcast_spats(now)?;
            }

            self.observe(now)?;

            for light in &mut self.lights {
                light.step(dt);
            }
        }

        if self.extras.response_samples > 0 {
            self.extras.mean_response_delay =
                self.response_delay_sum / self.extras.response_samples as f64;
        }
        let metrics = self.acc.finish(self.cfg.duration, self.bus.stats());
        if let Some(t) = self.trace.take() {
            t.finish()?;
        }
        if let Some(e) = self.events.take() {
            e.finish()?;
        }
        Ok(RunOutput {
            metrics,
            extras: self.extras,
        })
    }

    fn broadcast(&mut self, sender: AgentId, payload: Payload, now: f64) -> Result<()> {
        let kind = payload.kind();
        let outcome = self
            .bus
            .broadcast(sender, payload, now, &self.channel, &mut self.channel_rng);
        if let BroadcastOutcome::Dropped { msg_id } = outcome {
            if self.cfg.log_messages {
                if let Some(events) = self.events.as_mut() {
                    events.event(&Event::Msg {
                        t: now,
                        msg_id,
                        msg_kind: kind,
                        sender: sender.to_string(),
                        created: now,
                        delivered: None,
                        dropped: true,
                    })?;
                }
            }
        }
        Ok(())
    }

    fn deliver(&mut self, now: f64) -> Result<()> {
        for (at, msg) in self.bus.deliver_due(now) {
            if self.cfg.log_messages {
                if let Some(events) = self.events.as_mut() {
                    events.event(&Event::Msg {
                        t: at,
                        msg_id: msg.msg_id,
                        msg_kind: msg.payload.kind(),
                        sender: msg.sender.to_string(),
                        created: msg.created,
                        delivered: Some(at),
                        dropped: false,
                    })?;
                }
            }
            self.route_message(msg, at)?;
        }
        Ok(())
    }

    fn route_message(&mut self, msg: V2XMessage, at: f64) -> Result<()> {
        match &msg.payload {
            Payload::Bsm(_) | Payload::Spat(_) => self.manager.handle_message(&msg, at),
            Payload::TrajectoryCmd(traj) => {
                let car = traj.car_id;
                let path = self.manager.path_of(car).cloned();
                if let Some(v) = self.vehicles.get_mut(car.0 as usize) {
                    v.cmd = Some(LatestCmd {
                        traj: traj.clone(),
                        path,
                        created: msg.created,
                        used: false,
                    });
                }
            }
            Payload::Preemption {
                light_id,
                phase_index,
            } => {
                if let Some(light) = self.lights.iter_mut().find(|l| l.light_id == *light_id) {
                    light.preempt(*phase_index)?;
                }
            }
            Payload::Map(_) => {}
        }
        Ok(())
    }

    fn manager_cycle(&mut self, now: f64) -> Result<()> {
        let out = self.manager.tick(now)?;
        self.extras.unmanaged_ticks += out.skipped as u64;
        for c in &out.completions {
            self.acc.completed_routes += 1;
            self.acc.travel_times.push(c.travel_time);
            *self.extras.completions_per_car.entry(c.car).or_default() += 1;
            self.extras
                .goal_sequences
                .entry(c.car)
                .or_default()
                .push(c.goal.clone());
            if let Some(events) = self.events.as_mut() {
                events.event(&Event::RouteCompleted {
                    t: now,
                    car: c.car.0,
                    goal: c.goal.as_str(),
                    travel_time: c.travel_time,
                })?;
            }
        }
        for traj in out.commands {
            self.broadcast(AgentId::Manager, Payload::TrajectoryCmd(traj), now)?;
        }
        Ok(())
    }

    fn step_vehicles(&mut self, now: f64) -> Result<()> {
        let ideal = self.cfg.ideal;
        let dt = self.cfg.vehicle_dt;
        let vparams = &self.cfg.vehicle;

        // Pure per-car computation, then an ordered commit.
        let computed = parallel::map_ordered(
            self.cfg.workers,
            &self.vehicles,
            |_, v| -> Result<(VehicleState, bool)> {
                match (&v.cmd, ideal) {
                (Some(cmd), true) => {
                    // Interpolate along the exact route geometry when the
                    // planning path is known; frame-space interpolation is
                    // the fallback.
                    let pose_speed = cmd
                        .path
                        .as_ref()
                        .and_then(|path| {
                            let (s, d, speed) = cmd.traj.sample_sd(now);
                            frenet::to_euclidean(path, s.min(path.total_length), d)
                                .ok()
                                .map(|pose| (pose, speed))
                        })
                        .unwrap_or_else(|| {
                            let (pose, speed, _) = cmd.traj.sample_at(now);
                            (pose, speed)
                        });
                    let (pose, speed) = pose_speed;
                    let mut next = v.state;
                    next.x = pose.position.x;
                    next.y = pose.position.y;
                    next.heading = pose.heading;
                    next.v = speed;
                    next.steering = 0.0;
                    Ok((next, !cmd.used))
                }
                (Some(cmd), false) => {
                    let control = vehicle::pure_pursuit(
                        &v.state,
                        &cmd.traj,
                        vparams.lookahead,
                        vparams,
                    )?;
                    Ok((vehicle::step(&v.state, &control, dt, vparams), !cmd.used))
                }
                    (None, _) => {
                        // No command yet: brake to a stop in place.
                        let control = Control {
                            accel: vparams.a_min,
                            steering: 0.0,
                        };
                        Ok((vehicle::step(&v.state, &control, dt, vparams), false))
                    }
                }
            },
        );

        for (v, result) in self.vehicles.iter_mut().zip(computed) {
            let (next, first_use): (VehicleState, bool) = result?;
            v.state = next;
            if first_use {
                if let Some(cmd) = v.cmd.as_mut() {
                    cmd.used = true;
                    self.response_delay_sum += now - cmd.created;
                    self.extras.response_samples += 1;
                }
            }
        }
        Ok(())
    }

    fn broadcast_bsms(&mut self, now: f64) -> Result<()> {
        for i in 0..self.vehicles.len() {
            let snapshot =
                vehicle::perturb(&self.vehicles[i].state, &self.noise, &mut self.noise_rng);
            self.broadcast(
                AgentId::Car(CarId(i as u32)),
                Payload::Bsm(crate::v2x::BsmData { state: snapshot }),
                now,
            )?;
        }
        Ok(())
    }

    fn broadcast_spats(&mut self, now: f64) -> Result<()> {
        for i in 0..self.lights.len() {
            let spat = self.lights[i].spat();
            let id = self.lights[i].light_id;
            self.broadcast(AgentId::Light(id), Payload::Spat(spat), now)?;
        }
        Ok(())
    }

    fn broadcast_map_digest(&mut self, now: f64) -> Result<()> {
        let (min, max) = self.bbox;
        let digest = MapDigest {
            node_count: self.graph.nodes().len(),
            edge_count: self.graph.edges().len(),
            spacing_m: self.graph.spacing(),
            bbox_min: (min.x, min.y),
            bbox_max: (max.x, max.y),
        };
        self.broadcast(AgentId::Infrastructure, Payload::Map(digest), now)
    }

    fn send_due_preemptions(&mut self, now: f64) -> Result<()> {
        for i in 0..self.cfg.preemptions.len() {
            let p = &self.cfg.preemptions[i];
            if !self.preemptions_sent[i] && p.time <= now {
                self.preemptions_sent[i] = true;
                self.broadcast(
                    AgentId::Infrastructure,
                    Payload::Preemption {
                        light_id: p.light_id,
                        phase_index: p.phase_index,
                    },
                    now,
                )?;
            }
        }
        Ok(())
    }

    /// Per-tick observation: metrics accumulation, violation and deadlock
    /// detection, trace rows.
    fn observe(&mut self, now: f64) -> Result<()> {
        let n = self.vehicles.len();

        // Pairwise separation over ground truth.
        let mut now_violating = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let d = self.vehicles[i]
                    .state
                    .position()
                    .dist(self.vehicles[j].state.position());
                self.acc.separation_sample(d);
                if d < self.cfg.separation.d_safe {
                    self.acc.separation_violations += 1;
                    let pair = (CarId(i as u32), CarId(j as u32));
                    now_violating.push(pair);
                    if !self.violating.contains(&pair) {
                        if let Some(events) = self.events.as_mut() {
                            events.event(&Event::SeparationViolation {
                                t: now,
                                a: pair.0 .0,
                                b: pair.1 .0,
                                distance: d,
                            })?;
                        }
                    }
                }
            }
        }
        self.violating = now_violating;

        // Deadlock: the whole fleet creeping below threshold for too long.
        let all_slow = self.vehicles.iter().all(|v| v.state.v < 0.01);
        if all_slow {
            let since = *self.all_slow_since.get_or_insert(now);
            if now - since > 10.0 && !self.deadlock_flagged {
                self.deadlock_flagged = true;
                self.acc.deadlock_events += 1;
                if let Some(events) = self.events.as_mut() {
                    events.event(&Event::Deadlock { t: now })?;
                }
            }
        } else {
            self.all_slow_since = None;
            self.deadlock_flagged = false;
        }

        // Per-car observations and trace rows.
        let (bb_min, bb_max) = self.bbox;
        for i in 0..n {
            let state = self.vehicles[i].state;
            self.acc.speed_sample(state.v);

            let p = state.position();
            if p.x < bb_min.x - 1.0 || p.x > bb_max.x + 1.0 || p.y < bb_min.y - 1.0
                || p.y > bb_max.y + 1.0
            {
                self.extras.bbox_excursions += 1;
            }

            let car = CarId(i as u32);
            let path = self.manager.path_of(car).cloned();
            let frenet_fix = path.as_ref().and_then(|path| {
                let ptr = Arc::as_ptr(path) as usize;
                if self.vehicles[i].path_ptr != ptr {
                    self.vehicles[i].path_ptr = ptr;
                    self.vehicles[i].s_hint = None;
                }
                frenet::to_frenet_near(
                    path,
                    state.pose(),
                    state.v,
                    self.vehicles[i].s_hint,
                    frenet::DEFAULT_CORRIDOR,
                )
                .ok()
            });

            let mut trace_frenet: Option<(f64, f64, String)> = None;
            if let (Some(fix), Some(path)) = (frenet_fix, path.as_ref()) {
                self.vehicles[i].s_hint = Some(fix.s);
                let on_curve = matches!(
                    path.segments[path.segment_index_at(fix.s)].geometry,
                    crate::map::EdgeGeometry::CircularArc { .. }
                );
                self.acc.cross_track_sample(fix.d.abs(), on_curve);
                self.extras.max_abs_cross_track =
                    self.extras.max_abs_cross_track.max(fix.d.abs());
                let edge = path.edge_id_at(fix.s).map(|e| e.to_string()).unwrap_or_default();
                trace_frenet = Some((fix.s, fix.d, edge));
            }

            if let Some(tracer) = self.trace.as_mut() {
                let mode_flag = match self.cfg.mode {
                    ManagerMode::Optimized => "o",
                    ManagerMode::FifoBaseline => "f",
                };
                let flags = if self.cfg.ideal {
                    format!("{mode_flag}i")
                } else {
                    mode_flag.to_string()
                };
                tracer.row(
                    now,
                    car,
                    state.x,
                    state.y,
                    state.heading,
                    state.v,
                    trace_frenet.as_ref().map(|(s, d, e)| (*s, *d, e.as_str())),
                    &flags,
                )?;
            }
        }
        Ok(())
    }
}

/// Spawn nodes: explicit list, or an even spread over the id-sorted nodes.
fn spawn_nodes(cfg: &SimConfig, graph: &RoadGraph) -> Result<Vec<NodeId>> {
    if let Some(starts) = &cfg.starts {
        for node in starts {
            graph.node(node)?;
        }
        return Ok(starts.clone());
    }
    let mut ids: Vec<NodeId> = graph.nodes().iter().map(|n| n.id.clone()).collect();
    ids.sort();
    if (cfg.n_cars as usize) > ids.len() {
        return Err(Error::config(format!(
            "{} cars but the map has only {} spawn nodes",
            cfg.n_cars,
            ids.len()
        )));
    }
    Ok((0..cfg.n_cars as usize)
        .map(|i| ids[i * ids.len() / cfg.n_cars as usize].clone())
        .collect())
}

/// Serialize metrics as a stable pretty JSON document.
pub fn metrics_json(metrics: &Metrics) -> String {
    let mut s = serde_json::to_string_pretty(metrics).expect("metrics serialize");
    s.push('\n');
    s
}

pub fn write_metrics(metrics: &Metrics, dir: &Path) -> Result<()> {
    std::fs::write(dir.join("metrics.json"), metrics_json(metrics))?;
    Ok(())
}
