//! Human-centric reward and the traveller delay metrics.
//!
//! Every second, each occupant of a vehicle moving slower than the delay
//! threshold and each pedestrian waiting at a crossing counts as one delayed
//! person. The reward of a step is minus that (weighted) count, and the
//! aggregate individual delay (AID) of a run is the plain count summed over
//! the run, so with unit weights the two are the same number.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{TravelMode, TripRecord};

pub const DEFAULT_DELAY_THRESHOLD_KMH: f64 = 5.0;

pub fn is_vehicle_delayed(speed_kmh: f64, threshold_kmh: f64) -> bool {
    speed_kmh < threshold_kmh
}

/// Delayed travellers observed at the end of one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelaySnapshot {
    pub t: u32,
    /// Occupant count of every delayed vehicle (m entries).
    pub delayed_vehicle_occupants: Vec<u32>,
    /// Waiting pedestrians per intersection (n entries).
    pub delayed_pedestrians: Vec<u32>,
}

impl DelaySnapshot {
    pub fn new(t: u32, delayed_vehicle_occupants: Vec<u32>, delayed_pedestrians: Vec<u32>) -> Self {
        DelaySnapshot {
            t,
            delayed_vehicle_occupants,
            delayed_pedestrians,
        }
    }

    /// m
    pub fn delayed_vehicles(&self) -> usize {
        self.delayed_vehicle_occupants.len()
    }

    pub fn delayed_occupants(&self) -> u64 {
        self.delayed_vehicle_occupants.iter().map(|&o| o as u64).sum()
    }

    pub fn waiting_pedestrians(&self) -> u64 {
        self.delayed_pedestrians.iter().map(|&p| p as u64).sum()
    }

    /// Delayed persons: vehicle occupants plus pedestrians.
    pub fn delayed_persons(&self) -> u64 {
        self.delayed_occupants() + self.waiting_pedestrians()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub vehicle: f64,
    pub pedestrian: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            vehicle: 1.0,
            pedestrian: 1.0,
        }
    }
}

/// r = -(w_veh Σ occupants + w_ped Σ pedestrians).
pub fn compute_reward(snapshot: &DelaySnapshot, weights: RewardWeights) -> f64 {
    -(weights.vehicle * snapshot.delayed_occupants() as f64
        + weights.pedestrian * snapshot.waiting_pedestrians() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Aggregate individual delay, person-seconds.
    pub aid: u64,
    /// AID per traveller of demand.
    pub pcd: f64,
    /// Mean delayed vehicles per second.
    pub avds: f64,
    /// Mean waiting pedestrians per second.
    pub apds: f64,
    /// Mean seconds below the delay threshold per completed vehicle.
    pub adv: Option<f64>,
    /// Mean travel time in excess of free flow per completed vehicle.
    pub adv_freeflow: Option<f64>,
    /// Mean queueing time per served pedestrian.
    pub awtp: Option<f64>,
    /// Test duration, s.
    pub t: u64,
    /// Total traveller demand.
    pub d: u64,
    pub n_v: u64,
    pub n_p: u64,
    /// Σ_t delayed vehicles.
    pub delayed_vehicle_seconds: u64,
    /// Σ_t waiting pedestrians.
    pub waiting_pedestrian_seconds: u64,
}

/// Streaming form of [`accumulate_metrics`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsAccumulator {
    steps: u64,
    aid: u64,
    delayed_vehicle_seconds: u64,
    waiting_pedestrian_seconds: u64,
}

impl MetricsAccumulator {
    pub fn push(&mut self, snapshot: &DelaySnapshot) {
        self.steps += 1;
        self.aid += snapshot.delayed_persons();
        self.delayed_vehicle_seconds += snapshot.delayed_vehicles() as u64;
        self.waiting_pedestrian_seconds += snapshot.waiting_pedestrians();
    }

    pub fn aid(&self) -> u64 {
        self.aid
    }

    pub fn finish(&self, trips: &[TripRecord], demand: u64) -> Result<MetricsReport> {
        if self.steps == 0 {
            return Err(Error::InsufficientSample { needed: 1, got: 0 });
        }
        if demand == 0 {
            return Err(Error::Domain("total traveller demand D must be >= 1".into()));
        }
        let t = self.steps as f64;
        let mut veh = (0u64, 0u64, 0.0f64);
        let mut ped = (0u64, 0u64);
        for trip in trips {
            match trip.mode {
                TravelMode::Car | TravelMode::Bus => {
                    veh.0 += 1;
                    veh.1 += trip.delay_s as u64;
                    veh.2 += trip.freeflow_delay_s;
                }
                TravelMode::Pedestrian => {
                    ped.0 += 1;
                    ped.1 += trip.delay_s as u64;
                }
            }
        }
        let mean = |sum: f64, n: u64| (n > 0).then(|| sum / n as f64);
        Ok(MetricsReport {
            aid: self.aid,
            pcd: self.aid as f64 / demand as f64,
            avds: self.delayed_vehicle_seconds as f64 / t,
            apds: self.waiting_pedestrian_seconds as f64 / t,
            adv: mean(veh.1 as f64, veh.0),
            adv_freeflow: mean(veh.2, veh.0),
            awtp: mean(ped.1 as f64, ped.0),
            t: self.steps,
            d: demand,
            n_v: veh.0,
            n_p: ped.0,
            delayed_vehicle_seconds: self.delayed_vehicle_seconds,
            waiting_pedestrian_seconds: self.waiting_pedestrian_seconds,
        })
    }
}

/// Folds per-step snapshots and the trip log of one run into its report.
pub fn accumulate_metrics(snapshots: &[DelaySnapshot], trips: &[TripRecord], demand: u64) -> Result<MetricsReport> {
    let mut acc = MetricsAccumulator::default();
    for s in snapshots {
        acc.push(s);
    }
    acc.finish(trips, demand)
}

/// Percentage reduction of AID relative to a baseline.
pub fn improvement(baseline_aid: f64, ours_aid: f64) -> Result<f64> {
    if !(baseline_aid > 0.0) {
        return Err(Error::Domain(alloc::format!("baseline AID {baseline_aid} must be > 0")));
    }
    Ok(100.0 * (baseline_aid - ours_aid) / baseline_aid)
}

/// Mean and sample standard deviation (n - 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.len() < 2 {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Some(Stat {
            mean,
            std: libm::sqrt(var),
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub aid: Stat,
    pub pcd: Stat,
    pub avds: Stat,
    pub apds: Stat,
    /// Over the seeds where the metric is present; absent with < 2 values.
    pub adv: Option<Stat>,
    pub adv_freeflow: Option<Stat>,
    pub awtp: Option<Stat>,
}

/// Mean and standard deviation of every metric across seeds.
pub fn seed_sweep_stats(reports: &[MetricsReport]) -> Result<SweepStats> {
    if reports.len() < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            got: reports.len(),
        });
    }
    let col = |f: &dyn Fn(&MetricsReport) -> f64| {
        Stat::of(&reports.iter().map(f).collect::<Vec<_>>()).expect("at least two reports")
    };
    let opt = |f: &dyn Fn(&MetricsReport) -> Option<f64>| Stat::of(&reports.iter().filter_map(f).collect::<Vec<_>>());
    Ok(SweepStats {
        aid: col(&|r| r.aid as f64),
        pcd: col(&|r| r.pcd),
        avds: col(&|r| r.avds),
        apds: col(&|r| r.apds),
        adv: opt(&|r| r.adv),
        adv_freeflow: opt(&|r| r.adv_freeflow),
        awtp: opt(&|r| r.awtp),
    })
}
