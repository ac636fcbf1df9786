//! Scenario files and demand presets.

use std::collections::BTreeMap;
use std::path::Path;

use corridor_core::signal_control::{ActionSpaceSpec, FixedTimings};
use corridor_core::sim::{CorridorConfig, DemandConfig, PedestrianFlow, ProfileStep, VehicleFlow};
use corridor_core::trainer::{Environment, EvalConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// A scenario document as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub corridor: CorridorConfig,
    pub demand: DemandConfig,
    #[serde(default)]
    pub timings: FixedTimings,
    #[serde(default)]
    pub action_space: ActionSpaceSpec,
    #[serde(default = "default_lost_time")]
    pub webster_lost_time: f64,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Named demand transformations, applied on top of `demand`.
    #[serde(default)]
    pub presets: BTreeMap<String, Preset>,
}

fn default_lost_time() -> f64 {
    Environment::new(CorridorConfig::default(), DemandConfig::empty(1)).webster_lost_time
}

fn one() -> f64 {
    1.0
}

/// Demand transformation selected with `--preset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    #[serde(default)]
    pub description: String,
    #[serde(default = "one")]
    pub vehicle_scale: f64,
    #[serde(default = "one")]
    pub pedestrian_scale: f64,
    #[serde(default)]
    pub horizon: Option<u32>,
    /// Replaces the base time-of-day profile when present.
    #[serde(default)]
    pub profile: Option<Vec<ProfileStep>>,
    #[serde(default)]
    pub extra_vehicle_flows: Vec<VehicleFlow>,
    #[serde(default)]
    pub extra_pedestrian_flows: Vec<PedestrianFlow>,
}

impl Preset {
    pub fn apply(&self, demand: &DemandConfig) -> DemandConfig {
        let mut d = demand.clone();
        for f in &mut d.vehicle_flows {
            f.vehicles_per_hour *= self.vehicle_scale;
        }
        for f in &mut d.pedestrian_flows {
            f.peds_per_hour *= self.pedestrian_scale;
        }
        d.vehicle_flows.extend(self.extra_vehicle_flows.iter().copied());
        d.pedestrian_flows.extend(self.extra_pedestrian_flows.iter().copied());
        d.pedestrian_flows.retain(|f| f.peds_per_hour > 0.0);
        if let Some(h) = self.horizon {
            d.horizon = h;
        }
        if let Some(p) = &self.profile {
            d.profile = p.clone();
        }
        d
    }
}

/// Fully resolved run configuration: scenario, preset and CLI overrides
/// folded together. This is what every command echoes before it runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub scenario: String,
    pub description: String,
    pub preset: Option<String>,
    pub environment: Environment,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl ResolvedConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.environment.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("schema error: {e}")))
    }

    /// Applies `preset` (if any) and returns the resolved configuration.
    pub fn resolve(&self, preset: Option<&str>) -> Result<ResolvedConfig, CliError> {
        let demand = match preset {
            None => self.demand.clone(),
            Some(name) => {
                let p = self.presets.get(name).ok_or_else(|| {
                    let known: Vec<&str> = self.presets.keys().map(String::as_str).collect();
                    CliError::Validation(format!("unknown preset `{name}` (available: {})", known.join(", ")))
                })?;
                p.apply(&self.demand)
            }
        };
        Ok(ResolvedConfig {
            scenario: self.name.clone(),
            description: self.description.clone(),
            preset: preset.map(str::to_owned),
            environment: Environment {
                corridor: self.corridor.clone(),
                demand,
                timings: self.timings,
                action_space: self.action_space,
                webster_lost_time: self.webster_lost_time,
            },
            train: self.train.clone(),
            eval: self.eval.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "m",
        "corridor": {"num_intersections": 1, "link_lengths": []},
        "demand": {
            "horizon": 600,
            "vehicle_flows": [{"origin": 0, "destination": 1, "vehicles_per_hour": 100}],
            "pedestrian_flows": [{"intersection": 0, "zone": 4, "peds_per_hour": 50}]
        },
        "presets": {"busy": {"vehicle_scale": 2, "pedestrian_scale": 0, "horizon": 300}}
    }"#;

    #[test]
    fn unknown_key_is_rejected() {
        let text = MINIMAL.replacen("\"name\": \"m\"", "\"name\": \"m\", \"nmae\": 1", 1);
        let err = ScenarioFile::parse(&text).unwrap_err();
        assert!(err.to_string().contains("nmae"), "{err}");
    }

    #[test]
    fn preset_scales_and_drops_zero_flows() {
        let s = ScenarioFile::parse(MINIMAL).unwrap();
        let r = s.resolve(Some("busy")).unwrap();
        let d = &r.environment.demand;
        assert_eq!(d.vehicle_flows[0].vehicles_per_hour, 200.0);
        assert!(d.pedestrian_flows.is_empty());
        assert_eq!(d.horizon, 300);
        r.validate().unwrap();
    }

    #[test]
    fn unknown_preset_lists_known_ones() {
        let s = ScenarioFile::parse(MINIMAL).unwrap();
        let err = s.resolve(Some("rush")).unwrap_err();
        assert!(err.to_string().contains("busy"));
    }

    #[test]
    fn echo_round_trips() {
        let s = ScenarioFile::parse(MINIMAL).unwrap();
        let mut r = s.resolve(None).unwrap();
        r.train.gamma = 0.99;
        r.train.lr = 3.3e-4;
        let back: ResolvedConfig = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
