//! JSON scenario files. Every field is optional and defaults to the standard
//! 10-car intersection run; unknown keys are rejected so typos fail loudly.

use crate::conflict::SeparationParams;
use crate::engine::{default_intersection_lights, LightSpec, MapSource, PreemptionSpec, SimConfig};
use crate::error::{Error, Result};
use crate::manager::ManagerMode;
use crate::map::NodeId;
use crate::planner::{Obstacle, PlannerParams};
use crate::v2x::ChannelModel;
use crate::vehicle::{NoiseModel, VehicleParams};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    pub duration: f64,
    pub vehicle_dt: f64,
    pub planning_period: f64,
    pub bsm_period: f64,
    pub n_cars: u32,
    pub mode: ManagerMode,
    pub ideal: bool,
    pub channel: ChannelModel,
    pub noise: NoiseModel,
    pub planner: PlannerParams,
    pub separation: SeparationParams,
    pub vehicle: VehicleParams,
    /// "default", "merge_ring", or {"file": "path/to/map.json"}.
    pub map: MapSpec,
    pub spacing: f64,
    pub starts: Option<Vec<NodeId>>,
    /// "none", "intersection_default", or an explicit list.
    pub lights: LightsSpec,
    pub obstacles: Vec<Obstacle>,
    pub preemptions: Vec<PreemptionSpec>,
    pub workers: usize,
    pub log_messages: bool,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        let base = SimConfig::default();
        ScenarioFile {
            seed: base.seed,
            duration: base.duration,
            vehicle_dt: base.vehicle_dt,
            planning_period: base.planning_period,
            bsm_period: base.bsm_period,
            n_cars: base.n_cars,
            mode: base.mode,
            ideal: base.ideal,
            channel: base.channel,
            noise: base.noise,
            planner: base.planner,
            separation: base.separation,
            vehicle: base.vehicle,
            map: MapSpec::Named("default".into()),
            spacing: base.spacing,
            starts: None,
            lights: LightsSpec::Named("none".into()),
            obstacles: Vec::new(),
            preemptions: Vec::new(),
            workers: base.workers,
            log_messages: base.log_messages,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum MapSpec {
    Named(String),
    File { file: PathBuf },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum LightsSpec {
    Named(String),
    Explicit(Vec<LightSpec>),
}

impl ScenarioFile {
    pub fn into_config(self) -> Result<SimConfig> {
        let map = match self.map {
            MapSpec::Named(name) => match name.as_str() {
                "default" => MapSource::Default,
                "merge_ring" => MapSource::MergeRing,
                other => {
                    return Err(Error::config(format!(
                        "map: unknown builtin `{other}` (expected \"default\", \"merge_ring\", or {{\"file\": ...}})"
                    )))
                }
            },
            MapSpec::File { file } => MapSource::File(file),
        };

        let mut cfg = SimConfig {
            seed: self.seed,
            duration: self.duration,
            vehicle_dt: self.vehicle_dt,
            planning_period: self.planning_period,
            bsm_period: self.bsm_period,
            n_cars: self.n_cars,
            mode: self.mode,
            ideal: self.ideal,
            channel: self.channel,
            noise: self.noise,
            planner: self.planner,
            separation: self.separation,
            vehicle: self.vehicle,
            map,
            spacing: self.spacing,
            starts: self.starts,
            lights: Vec::new(),
            obstacles: self.obstacles,
            preemptions: self.preemptions,
            workers: self.workers,
            log_messages: self.log_messages,
        };

        cfg.lights = match self.lights {
            LightsSpec::Explicit(list) => list,
            LightsSpec::Named(name) => match name.as_str() {
                "none" => Vec::new(),
                "intersection_default" => {
                    let graph = cfg.build_graph()?;
                    default_intersection_lights(&graph)
                }
                other => {
                    return Err(Error::config(format!(
                        "lights: unknown builtin `{other}` (expected \"none\", \"intersection_default\", or a list)"
                    )))
                }
            },
        };

        cfg.validate()?;
        Ok(cfg)
    }
}

/// Load a scenario file and resolve it to a validated config.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<SimConfig> {
    let text = std::fs::read_to_string(&path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Json(j) => Error::config(format!("{}: {j}", path.as_ref().display())),
        other => other,
    })
}

pub fn parse_scenario(text: &str) -> Result<SimConfig> {
    let file: ScenarioFile = serde_json::from_str(text)?;
    file.into_config()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default_scenario() {
        let cfg = parse_scenario("{}").unwrap();
        assert_eq!(cfg.n_cars, 10);
        assert_eq!(cfg.mode, ManagerMode::Optimized);
        assert_eq!(cfg.map, MapSource::Default);
        assert!(cfg.lights.is_empty());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_scenario(r#"{"bogus_key": 1}"#).unwrap_err().to_string();
        assert!(err.contains("bogus_key"), "{err}");
    }

    #[test]
    fn nested_unknown_keys_rejected() {
        let err = parse_scenario(r#"{"channel": {"base_latency": 0.1, "oops": 2}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("oops"), "{err}");
    }

    #[test]
    fn invariant_violation_names_fields() {
        let err = parse_scenario(r#"{"vehicle_dt": 0.5}"#).unwrap_err().to_string();
        assert!(err.contains("vehicle_dt") || err.contains("planning_period"), "{err}");
    }

    #[test]
    fn merge_ring_and_default_lights_resolve() {
        let cfg = parse_scenario(r#"{"map": "merge_ring", "n_cars": 4}"#).unwrap();
        assert_eq!(cfg.map, MapSource::MergeRing);

        let cfg = parse_scenario(r#"{"lights": "intersection_default"}"#).unwrap();
        assert_eq!(cfg.lights.len(), 4);
    }

    #[test]
    fn unknown_builtin_map_rejected() {
        assert!(parse_scenario(r#"{"map": "nonexistent"}"#).is_err());
    }
}
