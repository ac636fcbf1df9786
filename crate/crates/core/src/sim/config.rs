use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::geometry::{num_vehicle_zones, PED_ZONES};
use crate::error::{Error, Result};

/// Vehicle dynamics shared by every vehicle in the corridor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KinematicParams {
    /// m/s²
    pub max_accel: f64,
    /// Planning deceleration for leaders and red lights, m/s².
    pub max_decel: f64,
    /// A vehicle stops for amber only if it can do so at this rate, m/s².
    pub comfortable_decel: f64,
    /// Standstill bumper-to-bumper gap, m.
    pub min_gap: f64,
    pub car_length: f64,
    pub bus_length: f64,
}

impl Default for KinematicParams {
    fn default() -> Self {
        KinematicParams {
            max_accel: 2.5,
            max_decel: 4.0,
            comfortable_decel: 3.0,
            min_gap: 2.0,
            car_length: 5.0,
            bus_length: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorridorConfig {
    pub num_intersections: usize,
    pub approaches_per_intersection: usize,
    pub lanes_per_approach: usize,
    pub cells_per_lane: usize,
    /// m
    pub cell_length: f64,
    /// Distances between consecutive intersections (west to east), m.
    pub link_lengths: Vec<f64>,
    /// Length of every link fed directly by an entry zone, m.
    pub entry_length: f64,
    pub ped_zones_per_intersection: usize,
    /// s
    pub sim_step: f64,
    /// Free-flow speed, km/h.
    pub design_speed: f64,
    /// Pedestrians discharged per second from a zone during its walk interval.
    pub ped_service_rate: f64,
    /// Speed under which vehicle occupants count as delayed, km/h.
    pub delay_threshold: f64,
    pub vehicle: KinematicParams,
}

impl Default for CorridorConfig {
    fn default() -> Self {
        CorridorConfig {
            num_intersections: 3,
            approaches_per_intersection: 4,
            lanes_per_approach: 4,
            cells_per_lane: 10,
            cell_length: 6.0,
            link_lengths: vec![250.0, 250.0],
            entry_length: 200.0,
            ped_zones_per_intersection: PED_ZONES,
            sim_step: 1.0,
            design_speed: 50.0,
            ped_service_rate: 2.0,
            delay_threshold: 5.0,
            vehicle: KinematicParams::default(),
        }
    }
}

fn positive(value: f64, field: &str) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite and > 0, got {value}")))
    }
}

impl CorridorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_intersections == 0 {
            return Err(Error::config("corridor.num_intersections", "must be >= 1"));
        }
        if self.approaches_per_intersection != 4 {
            return Err(Error::config("corridor.approaches_per_intersection", "only 4-leg intersections are modelled"));
        }
        if !(1..=4).contains(&self.lanes_per_approach) {
            return Err(Error::config("corridor.lanes_per_approach", "must be in 1..=4"));
        }
        if self.cells_per_lane == 0 {
            return Err(Error::config("corridor.cells_per_lane", "must be >= 1"));
        }
        if self.ped_zones_per_intersection != PED_ZONES {
            return Err(Error::config("corridor.ped_zones_per_intersection", "must be 8"));
        }
        positive(self.cell_length, "corridor.cell_length")?;
        positive(self.sim_step, "corridor.sim_step")?;
        if self.sim_step != 1.0 {
            return Err(Error::config("corridor.sim_step", "only 1 s steps are supported"));
        }
        positive(self.design_speed, "corridor.design_speed")?;
        positive(self.ped_service_rate, "corridor.ped_service_rate")?;
        positive(self.delay_threshold, "corridor.delay_threshold")?;
        let span = self.encoded_span();
        if self.link_lengths.len() != self.num_intersections - 1 {
            return Err(Error::config(
                "corridor.link_lengths",
                format!("expected {} entries, got {}", self.num_intersections - 1, self.link_lengths.len()),
            ));
        }
        for (i, d) in self.link_lengths.iter().enumerate() {
            if !(*d >= span) || !d.is_finite() {
                return Err(Error::config(
                    format!("corridor.link_lengths[{i}]"),
                    format!("must be >= cells_per_lane * cell_length = {span}"),
                ));
            }
        }
        if !(self.entry_length >= span) || !self.entry_length.is_finite() {
            return Err(Error::config("corridor.entry_length", format!("must be >= {span}")));
        }
        let k = &self.vehicle;
        positive(k.max_accel, "corridor.vehicle.max_accel")?;
        positive(k.max_decel, "corridor.vehicle.max_decel")?;
        positive(k.comfortable_decel, "corridor.vehicle.comfortable_decel")?;
        positive(k.min_gap, "corridor.vehicle.min_gap")?;
        positive(k.car_length, "corridor.vehicle.car_length")?;
        positive(k.bus_length, "corridor.vehicle.bus_length")?;
        Ok(())
    }

    /// Length of lane covered by the encoded cells, m.
    pub fn encoded_span(&self) -> f64 {
        self.cells_per_lane as f64 * self.cell_length
    }

    pub fn design_speed_mps(&self) -> f64 {
        self.design_speed / 3.6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleFlow {
    pub origin: usize,
    pub destination: usize,
    pub vehicles_per_hour: f64,
    /// Fraction of the flow that are buses.
    #[serde(default)]
    pub bus_share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PedestrianFlow {
    pub intersection: usize,
    pub zone: usize,
    pub peds_per_hour: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupantWeight {
    pub occupants: u32,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OccupantDistributions {
    pub car: Vec<OccupantWeight>,
    pub bus: Vec<OccupantWeight>,
}

fn weights(pairs: &[(u32, f64)]) -> Vec<OccupantWeight> {
    pairs
        .iter()
        .map(|&(occupants, probability)| OccupantWeight { occupants, probability })
        .collect()
}

impl Default for OccupantDistributions {
    fn default() -> Self {
        OccupantDistributions {
            // mean 1.55
            car: weights(&[(1, 0.65), (2, 0.22), (3, 0.08), (4, 0.03), (5, 0.02)]),
            // mean 20.6
            bus: weights(&[
                (5, 0.10),
                (10, 0.15),
                (15, 0.20),
                (20, 0.20),
                (25, 0.15),
                (30, 0.10),
                (40, 0.06),
                (50, 0.04),
            ]),
        }
    }
}

/// Piecewise-constant demand multiplier starting at `from` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileStep {
    pub from: u32,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandConfig {
    #[serde(default)]
    pub vehicle_flows: Vec<VehicleFlow>,
    #[serde(default)]
    pub occupants: OccupantDistributions,
    #[serde(default)]
    pub pedestrian_flows: Vec<PedestrianFlow>,
    /// Simulated seconds per run.
    pub horizon: u32,
    #[serde(default)]
    pub profile: Vec<ProfileStep>,
}

impl DemandConfig {
    pub fn empty(horizon: u32) -> Self {
        DemandConfig {
            vehicle_flows: Vec::new(),
            occupants: OccupantDistributions::default(),
            pedestrian_flows: Vec::new(),
            horizon,
            profile: Vec::new(),
        }
    }

    pub fn multiplier_at(&self, t: u32) -> f64 {
        self.profile
            .iter()
            .take_while(|p| p.from <= t)
            .last()
            .map_or(1.0, |p| p.multiplier)
    }

    pub fn validate(&self, corridor: &CorridorConfig) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("demand.horizon", "must be >= 1"));
        }
        let zones = num_vehicle_zones(corridor.num_intersections);
        for (i, f) in self.vehicle_flows.iter().enumerate() {
            let field = |name: &str| format!("demand.vehicle_flows[{i}].{name}");
            if f.origin >= zones {
                return Err(Error::config(field("origin"), format!("zone must be < {zones}")));
            }
            if f.destination >= zones {
                return Err(Error::config(field("destination"), format!("zone must be < {zones}")));
            }
            if f.origin == f.destination {
                return Err(Error::config(field("destination"), "must differ from origin"));
            }
            if !(f.vehicles_per_hour >= 0.0) || !f.vehicles_per_hour.is_finite() {
                return Err(Error::config(field("vehicles_per_hour"), "must be finite and >= 0"));
            }
            if !(0.0..=1.0).contains(&f.bus_share) {
                return Err(Error::config(field("bus_share"), "must be in [0, 1]"));
            }
        }
        for (i, f) in self.pedestrian_flows.iter().enumerate() {
            let field = |name: &str| format!("demand.pedestrian_flows[{i}].{name}");
            if f.intersection >= corridor.num_intersections {
                return Err(Error::config(field("intersection"), "out of range"));
            }
            if f.zone >= PED_ZONES {
                return Err(Error::config(field("zone"), "must be < 8"));
            }
            if !(f.peds_per_hour >= 0.0) || !f.peds_per_hour.is_finite() {
                return Err(Error::config(field("peds_per_hour"), "must be finite and >= 0"));
            }
        }
        for (name, dist) in [("car", &self.occupants.car), ("bus", &self.occupants.bus)] {
            let field = format!("demand.occupants.{name}");
            if dist.is_empty() {
                return Err(Error::config(field, "must not be empty"));
            }
            if dist.iter().any(|w| w.occupants == 0) {
                return Err(Error::config(field, "occupants must be >= 1"));
            }
            if dist.iter().any(|w| !(w.probability >= 0.0)) {
                return Err(Error::config(field, "probabilities must be >= 0"));
            }
            let sum: f64 = dist.iter().map(|w| w.probability).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::config(field, format!("probabilities sum to {sum}, expected 1")));
            }
        }
        for (i, p) in self.profile.iter().enumerate() {
            if !(p.multiplier >= 0.0) || !p.multiplier.is_finite() {
                return Err(Error::config(format!("demand.profile[{i}].multiplier"), "must be finite and >= 0"));
            }
            if i > 0 && p.from <= self.profile[i - 1].from {
                return Err(Error::config(format!("demand.profile[{i}].from"), "must be strictly increasing"));
            }
        }
        Ok(())
    }
}
