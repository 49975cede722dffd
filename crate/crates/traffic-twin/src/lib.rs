//! A deterministic, desk-scale digital twin of a centrally managed road
//! traffic system.
//!
//! The crate simulates a fleet of Ackermann-steered vehicles on a downscaled
//! road network. A central manager localizes every vehicle into path-relative
//! Frenet coordinates, plans quintic-polynomial trajectories with adaptive
//! cruise behavior, detects spatio-temporal conflicts between planned
//! trajectories, and replans until the buffer is conflict-free — or, in the
//! baseline mode, gates intersections first-come-first-served so the cost of
//! that policy can be measured. All communication between vehicles and the
//! manager flows through a broadcast bus with configurable latency, jitter,
//! and packet loss.
//!
//! Everything is seeded and deterministic: the same scenario produces
//! byte-identical traces, regardless of worker count.
//!
//! # Library layout
//!
//! - [`map`] — road graph, default map builders, A* routing, JSON map files
//! - [`frenet`] — (s, d) transforms between world poses and path coordinates
//! - [`planner`] — quintic trajectories, ACC targets, segment classification
//! - [`conflict`] — conflict detection, priority replanning, FIFO gate
//! - [`vehicle`] — kinematic bicycle, pure-pursuit tracking, pose noise
//! - [`v2x`] — broadcast bus, channel model, traffic lights, message kinds
//! - [`manager`] — the per-cycle planning loop over delivered messages
//! - [`engine`] — fixed-timestep simulation loop, metrics, trace writers
//! - [`scenario`] — JSON scenario files mapped onto [`engine::SimConfig`]
//! - [`cli`] — implementations behind the `traffic-twin` binary
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run --example build_and_validate_map
//! cargo run --example route_planning
//! cargo run --example frenet_roundtrip
//! cargo run --example plan_trajectory
//! cargo run --example resolve_conflicts
//! cargo run --example pure_pursuit_tracking
//! cargo run --example traffic_lights
//! cargo run --example channel_stats
//! cargo run --example run_simulation
//! cargo run --example compare_modes
//! cargo run --example lag_sweep
//! ```
//!
//! The thin `traffic-twin` binary wraps the same library calls behind
//! `run`, `validate-map`, `compare`, and `lag` subcommands.

pub mod cli;
pub mod conflict;
pub mod engine;
pub mod error;
pub mod frenet;
pub mod manager;
pub mod map;
pub mod math;
pub mod planner;
pub mod rng;
pub mod scenario;
pub mod v2x;
pub mod vehicle;

mod parallel;

pub use error::{Error, Result};

/// A vehicle identifier, dense from zero within a simulation.
#[derive(
    Debug,
    Clone,
    Copy,
    PartialEq,
    Eq,
    PartialOrd,
    Ord,
    Hash,
    serde::Serialize,
    serde::Deserialize,
)]
#[serde(transparent)]
pub struct CarId(pub u32);

impl std::fmt::Display for CarId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "car{}", self.0)
    }
}
