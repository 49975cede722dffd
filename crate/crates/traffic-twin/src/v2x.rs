//! Broadcast messaging with a lossy, delayed channel, plus traffic-light
//! controllers that publish signal phase and timing and accept preemption
//! requests.
//!
//! Message kinds mirror the usual connected-vehicle roles structurally
//! (safety snapshots, signal phase and timing, map digests, trajectory
//! commands, preemption) without any wire-level encoding.

use crate::error::{Error, Result};
use crate::planner::Trajectory;
use crate::vehicle::VehicleState;
use crate::CarId;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LightId(pub u32);

impl std::fmt::Display for LightId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "light{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentId {
    Car(CarId),
    Light(LightId),
    Manager,
    Infrastructure,
}

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AgentId::Car(c) => write!(f, "{c}"),
            AgentId::Light(l) => write!(f, "{l}"),
            AgentId::Manager => write!(f, "manager"),
            AgentId::Infrastructure => write!(f, "infrastructure"),
        }
    }
}

/// Basic periodic state snapshot a vehicle broadcasts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsmData {
    pub state: VehicleState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatData {
    pub light_id: LightId,
    pub state: LightState,
    /// Seconds until the current phase rolls over.
    pub time_to_change: f64,
}

/// Structural digest of the road network, broadcast by infrastructure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDigest {
    pub node_count: usize,
    pub edge_count: usize,
    pub spacing_m: f64,
    pub bbox_min: (f64, f64),
    pub bbox_max: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Bsm(BsmData),
    Spat(SpatData),
    Map(MapDigest),
    TrajectoryCmd(Trajectory),
    Preemption { light_id: LightId, phase_index: usize },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Bsm(_) => "BSM",
            Payload::Spat(_) => "SPaT",
            Payload::Map(_) => "MAP",
            Payload::TrajectoryCmd(_) => "TrajectoryCmd",
            Payload::Preemption { .. } => "Preemption",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct V2XMessage {
    /// Monotonically increasing per bus.
    pub msg_id: u64,
    pub sender: AgentId,
    pub payload: Payload,
    /// Simulation clock at broadcast, s.
    pub created: f64,
}

/// Latency / loss model: delay = max(0, base + N(0, jitter)), loss sampled
/// per message.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelModel {
    pub base_latency: f64,
    pub jitter_sigma: f64,
    pub drop_prob: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            base_latency: 0.05,
            jitter_sigma: 0.01,
            drop_prob: 0.01,
        }
    }
}

impl ChannelModel {
    pub const IDEAL: ChannelModel = ChannelModel {
        base_latency: 0.0,
        jitter_sigma: 0.0,
        drop_prob: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if self.base_latency < 0.0 || self.jitter_sigma < 0.0 {
            return Err(Error::config("channel latency/jitter must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(Error::config("drop_prob must be in [0, 1]"));
        }
        Ok(())
    }
}

/// What `broadcast` did with a message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BroadcastOutcome {
    Scheduled { msg_id: u64, deliver_at: f64 },
    Dropped { msg_id: u64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ChannelStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Mean broadcast-to-delivery delay over delivered messages, s.
    pub mean_delay: f64,
    #[serde(skip)]
    total_delay: f64,
}

/// Single logically-serialized broadcast queue.
#[derive(Debug, Default)]
pub struct MessageBus {
    next_id: u64,
    queue: BinaryHeap<Scheduled>,
    stats: ChannelStats,
}

#[derive(Debug)]
struct Scheduled {
    deliver_at: f64,
    msg: V2XMessage,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scheduled {}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap by (delivery time, msg_id).
        other
            .deliver_at
            .total_cmp(&self.deliver_at)
            .then_with(|| other.msg.msg_id.cmp(&self.msg.msg_id))
    }
}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl MessageBus {
    pub fn new() -> Self {
        MessageBus::default()
    }

    /// Broadcast a payload at `now`. The channel may drop it outright or
    /// schedule it after a sampled latency (never before creation).
    pub fn broadcast<R: Rng>(
        &mut self,
        sender: AgentId,
        payload: Payload,
        now: f64,
        channel: &ChannelModel,
        rng: &mut R,
    ) -> BroadcastOutcome {
        let msg_id = self.next_id;
        self.next_id += 1;
        self.stats.sent += 1;

        if channel.drop_prob > 0.0 && rng.gen::<f64>() < channel.drop_prob {
            self.stats.dropped += 1;
            return BroadcastOutcome::Dropped { msg_id };
        }
        let jitter = if channel.jitter_sigma > 0.0 {
            Normal::new(0.0, channel.jitter_sigma)
                .expect("valid sigma")
                .sample(rng)
        } else {
            0.0
        };
        let latency = (channel.base_latency + jitter).max(0.0);
        let deliver_at = now + latency;
        self.queue.push(Scheduled {
            deliver_at,
            msg: V2XMessage {
                msg_id,
                sender,
                payload,
                created: now,
            },
        });
        BroadcastOutcome::Scheduled { msg_id, deliver_at }
    }

    /// Pop every message due by `now`, ordered by (delivery time, msg_id).
    /// Each message is returned exactly once.
    pub fn deliver_due(&mut self, now: f64) -> Vec<(f64, V2XMessage)> {
        let mut out = Vec::new();
        while let Some(next) = self.queue.peek() {
            if next.deliver_at > now {
                break;
            }
            let sched = self.queue.pop().unwrap();
            self.stats.delivered += 1;
            self.stats.total_delay += sched.deliver_at - sched.msg.created;
            self.stats.mean_delay = self.stats.total_delay / self.stats.delivered as f64;
            out.push((sched.deliver_at, sched.msg));
        }
        out
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn stats(&self) -> ChannelStats {
        self.stats
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightState {
    Red,
    Green,
    Yellow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub state: LightState,
    pub duration: f64,
}

/// A cyclic traffic light. `pending_jump` interposes the yellow phase when a
/// preemption arrives on green, then jumps to the requested phase.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficLight {
    pub light_id: LightId,
    pub phases: Vec<Phase>,
    pub phase_index: usize,
    pub time_in_phase: f64,
    pending_jump: Option<usize>,
}

impl TrafficLight {
    pub fn new(light_id: LightId, phases: Vec<Phase>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::invalid("light needs at least one phase"));
        }
        if phases.iter().any(|p| p.duration <= 0.0) {
            return Err(Error::invalid("phase durations must be positive"));
        }
        Ok(TrafficLight {
            light_id,
            phases,
            phase_index: 0,
            time_in_phase: 0.0,
            pending_jump: None,
        })
    }

    pub fn state(&self) -> LightState {
        self.phases[self.phase_index].state
    }

    /// Advance by dt, rolling through phase boundaries and carrying the
    /// remainder.
    pub fn step(&mut self, dt: f64) {
        debug_assert!(dt > 0.0);
        self.time_in_phase += dt;
        while self.time_in_phase >= self.phases[self.phase_index].duration {
            self.time_in_phase -= self.phases[self.phase_index].duration;
            self.phase_index = match self.pending_jump.take() {
                Some(target) => target,
                None => (self.phase_index + 1) % self.phases.len(),
            };
        }
    }

    /// Force the light toward `phase_index`. From green the light first
    /// serves a full yellow phase (if it has one), then jumps; otherwise the
    /// jump is immediate. Time in phase resets either way.
    pub fn preempt(&mut self, phase_index: usize) -> Result<()> {
        if phase_index >= self.phases.len() {
            return Err(Error::invalid(format!(
                "{}: no phase {phase_index}",
                self.light_id
            )));
        }
        let yellow = self
            .phases
            .iter()
            .position(|p| p.state == LightState::Yellow);
        if self.state() == LightState::Green && self.phase_index != phase_index {
            if let Some(yellow_idx) = yellow {
                self.phase_index = yellow_idx;
                self.time_in_phase = 0.0;
                self.pending_jump = Some(phase_index);
                return Ok(());
            }
        }
        self.phase_index = phase_index;
        self.time_in_phase = 0.0;
        self.pending_jump = None;
        Ok(())
    }

    /// Current phase and exact time to its rollover.
    pub fn spat(&self) -> SpatData {
        SpatData {
            light_id: self.light_id,
            state: self.state(),
            time_to_change: self.phases[self.phase_index].duration - self.time_in_phase,
        }
    }

    pub fn cycle_time(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::channel_rng;

    fn dummy_payload() -> Payload {
        Payload::Preemption {
            light_id: LightId(0),
            phase_index: 0,
        }
    }

    #[test]
    fn full_drop_channel_delivers_nothing() {
        let mut bus = MessageBus::new();
        let channel = ChannelModel { drop_prob: 1.0, ..ChannelModel::IDEAL };
        let mut rng = channel_rng(1);
        for _ in 0..50 {
            let out = bus.broadcast(AgentId::Manager, dummy_payload(), 0.0, &channel, &mut rng);
            assert!(matches!(out, BroadcastOutcome::Dropped { .. }));
        }
        assert_eq!(bus.pending(), 0);
        assert_eq!(bus.stats().dropped, 50);
    }

    #[test]
    fn ideal_channel_delivers_same_tick_in_msg_order() {
        let mut bus = MessageBus::new();
        let mut rng = channel_rng(1);
        for _ in 0..5 {
            bus.broadcast(AgentId::Manager, dummy_payload(), 1.0, &ChannelModel::IDEAL, &mut rng);
        }
        let delivered = bus.deliver_due(1.0);
        let ids: Vec<u64> = delivered.iter().map(|(_, m)| m.msg_id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        assert!(delivered.iter().all(|(at, m)| *at == m.created));
    }

    #[test]
    fn empty_queue_delivers_empty() {
        let mut bus = MessageBus::new();
        assert!(bus.deliver_due(100.0).is_empty());
    }

    #[test]
    fn conservation_and_exactly_once() {
        let mut bus = MessageBus::new();
        let channel = ChannelModel { base_latency: 0.05, jitter_sigma: 0.02, drop_prob: 0.2 };
        let mut rng = channel_rng(9);
        let total = 1000;
        for k in 0..total {
            bus.broadcast(AgentId::Manager, dummy_payload(), k as f64 * 0.01, &channel, &mut rng);
        }
        let stats = bus.stats();
        assert_eq!(stats.sent, total);
        assert_eq!(stats.sent, stats.dropped + bus.pending() as u64);

        let mut seen = std::collections::BTreeSet::new();
        let mut t = 0.0;
        while bus.pending() > 0 {
            t += 0.05;
            for (at, m) in bus.deliver_due(t) {
                assert!(at >= m.created, "delivery before creation");
                assert!(seen.insert(m.msg_id), "msg {} delivered twice", m.msg_id);
            }
        }
        assert_eq!(seen.len() as u64, total - bus.stats().dropped);
        assert_eq!(bus.stats().sent, bus.stats().delivered + bus.stats().dropped);
    }

    #[test]
    fn delay_statistics_match_model() {
        let mut bus = MessageBus::new();
        let channel = ChannelModel { base_latency: 0.05, jitter_sigma: 0.01, drop_prob: 0.0 };
        let mut rng = channel_rng(4);
        for _ in 0..10_000 {
            bus.broadcast(AgentId::Manager, dummy_payload(), 0.0, &channel, &mut rng);
        }
        bus.deliver_due(10.0);
        let stats = bus.stats();
        assert_eq!(stats.delivered, 10_000);
        assert!((stats.mean_delay - 0.05).abs() < 0.05 * 0.05, "mean {}", stats.mean_delay);
    }

    #[test]
    fn determinism_per_seed() {
        let run = || {
            let mut bus = MessageBus::new();
            let channel = ChannelModel::default();
            let mut rng = channel_rng(77);
            let mut outcomes = Vec::new();
            for k in 0..200 {
                outcomes.push(bus.broadcast(
                    AgentId::Manager,
                    dummy_payload(),
                    k as f64 * 0.01,
                    &channel,
                    &mut rng,
                ));
            }
            outcomes
        };
        assert_eq!(run(), run());
    }

    fn standard_light() -> TrafficLight {
        TrafficLight::new(
            LightId(0),
            vec![
                Phase { state: LightState::Green, duration: 5.0 },
                Phase { state: LightState::Yellow, duration: 2.0 },
                Phase { state: LightState::Red, duration: 5.0 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn small_step_keeps_phase() {
        let mut light = standard_light();
        light.step(4.9);
        assert_eq!(light.state(), LightState::Green);
        assert!((light.time_in_phase - 4.9).abs() < 1e-12);
    }

    #[test]
    fn rollover_carries_remainder() {
        let mut light = standard_light();
        light.step(4.9);
        light.step(0.2);
        assert_eq!(light.state(), LightState::Yellow);
        assert!((light.time_in_phase - 0.1).abs() < 1e-12);
    }

    #[test]
    fn full_cycle_in_random_increments_returns_to_start() {
        let mut light = standard_light();
        let cycle = light.cycle_time();
        let mut rng = channel_rng(2);
        use rand::Rng;
        let mut remaining = cycle;
        while remaining > 0.0 {
            let dt = rng.gen_range(0.01f64..0.3).min(remaining);
            light.step(dt);
            remaining -= dt;
        }
        assert_eq!(light.phase_index, 0);
        assert!(light.time_in_phase.abs() < 1e-9, "offset {}", light.time_in_phase);
    }

    #[test]
    fn preempt_same_phase_resets_clock() {
        let mut light = standard_light();
        light.step(3.0);
        light.preempt(0).unwrap();
        assert_eq!(light.phase_index, 0);
        assert_eq!(light.time_in_phase, 0.0);
    }

    #[test]
    fn preempt_from_red_is_immediate() {
        let mut light = standard_light();
        light.step(8.0); // into red
        assert_eq!(light.state(), LightState::Red);
        light.preempt(0).unwrap();
        assert_eq!(light.state(), LightState::Green);
        assert_eq!(light.time_in_phase, 0.0);
    }

    #[test]
    fn preempt_from_green_serves_full_yellow() {
        let mut light = standard_light();
        assert_eq!(light.state(), LightState::Green);
        light.preempt(2).unwrap();
        assert_eq!(light.state(), LightState::Yellow);
        // Step through the yellow in small ticks; exactly 2 s later it is red.
        let mut t = 0.0;
        while t < 2.0 - 1e-9 {
            light.step(0.1);
            t += 0.1;
            if t < 2.0 - 1e-9 {
                assert_eq!(light.state(), LightState::Yellow, "t = {t}");
            }
        }
        assert_eq!(light.state(), LightState::Red);
    }

    #[test]
    fn preempt_unknown_phase_rejected() {
        let mut light = standard_light();
        assert!(light.preempt(9).is_err());
    }

    #[test]
    fn spat_reports_exact_time_to_change() {
        let mut light = standard_light();
        light.step(1.0);
        let spat = light.spat();
        assert_eq!(spat.state, LightState::Green);
        assert!((spat.time_to_change - 4.0).abs() < 1e-12);
        // Just after rollover the remainder is carried.
        light.step(4.15);
        let spat = light.spat();
        assert_eq!(spat.state, LightState::Yellow);
        assert!((spat.time_to_change - (2.0 - 0.15)).abs() < 1e-9);
    }

    #[test]
    fn spat_schedule_reconstruction_over_cycle() {
        // A receiver sampling SPaT every 0.1 s over one cycle sees exactly
        // the controller's schedule (zero-latency channel).
        let mut light = standard_light();
        let mut reconstructed = Vec::new();
        let mut actual = Vec::new();
        for _ in 0..120 {
            let spat = light.spat();
            reconstructed.push((spat.state, (spat.time_to_change * 1e9).round() as i64));
            actual.push((
                light.state(),
                ((light.phases[light.phase_index].duration - light.time_in_phase) * 1e9).round()
                    as i64,
            ));
            light.step(0.1);
        }
        assert_eq!(reconstructed, actual);
    }
}
