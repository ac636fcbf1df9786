//! Deterministic one-second microscopic simulator of a signalised corridor
//! with cars, buses and pedestrians.

mod car_following;
mod config;
mod geometry;
mod signal;

pub use car_following::{car_following_update, safe_speed, stops_for_amber, Motion, SignalAhead, StopLine};
pub use config::{
    CorridorConfig, DemandConfig, KinematicParams, OccupantDistributions, OccupantWeight, PedestrianFlow,
    ProfileStep, VehicleFlow,
};
pub use geometry::{
    approach_length, classify_movement, downstream, exit_side, lanes_for, num_vehicle_zones, ped_zone_phase,
    phase_flow_ratios, phase_serves, route, zone, Movement, Route, Side, Zone, PED_ZONES,
};
pub use signal::{IntervalRecord, SignalController};

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{is_vehicle_delayed, DelaySnapshot};
use crate::signal_control::{decode_plan, FixedTimings, SignalPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VehicleClass {
    Car,
    Bus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: u64,
    pub class: VehicleClass,
    pub occupants: u32,
    /// Distance from the front bumper to the stop line of the current
    /// approach, m.
    pub position: f64,
    /// m/s
    pub speed: f64,
    /// m/s²
    pub acceleration: f64,
    pub length: f64,
    pub route: Route,
    /// Index of the movement to take at the next stop line.
    pub leg: usize,
    pub intersection: usize,
    pub approach: Side,
    pub lane: usize,
    pub entry_time: u32,
    /// Seconds spent below the delay threshold or held at the entry.
    pub delay: u32,
    pub freeflow_time: f64,
    last_moved: u32,
}

impl Vehicle {
    pub fn speed_kmh(&self) -> f64 {
        self.speed * 3.6
    }

    pub fn movement(&self) -> Movement {
        self.route.movements[self.leg]
    }
}

/// One incoming lane, vehicles ordered from the stop line backwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub length: f64,
    pub vehicles: VecDeque<Vehicle>,
}

impl Lane {
    /// Whether a vehicle can enter at the upstream end without overlapping.
    fn has_room(&self, min_gap: f64) -> bool {
        self.free_space() >= min_gap
    }

    fn free_space(&self) -> f64 {
        self.vehicles
            .back()
            .map_or(self.length, |b| self.length - (b.position + b.length))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TravelMode {
    Car,
    Bus,
    Pedestrian,
}

impl TravelMode {
    pub fn label(self) -> &'static str {
        match self {
            TravelMode::Car => "car",
            TravelMode::Bus => "bus",
            TravelMode::Pedestrian => "pedestrian",
        }
    }
}

/// A completed traveller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub mode: TravelMode,
    pub occupants: u32,
    pub entry_s: u32,
    pub exit_s: u32,
    /// Seconds below the delay threshold (vehicles) or queued (pedestrians).
    pub delay_s: u32,
    /// Travel time minus free-flow travel time; equals `delay_s` for
    /// pedestrians.
    pub freeflow_delay_s: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub spawned_vehicles: u64,
    pub exited_vehicles: u64,
    pub spawned_peds: u64,
    pub served_peds: u64,
    /// Travellers generated so far: vehicle occupants plus pedestrians.
    pub demand_persons: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct FlowRoute {
    route: Route,
    freeflow_time: f64,
}

/// The complete simulation world.
#[derive(Debug, Clone, PartialEq)]
pub struct CorridorState {
    config: CorridorConfig,
    demand: DemandConfig,
    timings: FixedTimings,
    clock: u32,
    lanes: Vec<Lane>,
    held: Vec<VecDeque<Vehicle>>,
    ped_queues: Vec<VecDeque<u32>>,
    ped_credit: Vec<f64>,
    controllers: Vec<SignalController>,
    trips: Vec<TripRecord>,
    signal_log: Vec<IntervalRecord>,
    routes: Vec<FlowRoute>,
    car_occupants: WeightedIndex<f64>,
    bus_occupants: WeightedIndex<f64>,
    counters: Counters,
    rng: ChaCha8Rng,
    next_id: u64,
}

/// Empty corridor with default amber/all-red/minimum-green timings.
pub fn init_corridor(config: CorridorConfig, demand: DemandConfig, seed: u64) -> Result<CorridorState> {
    CorridorState::new(config, demand, FixedTimings::default(), seed)
}

impl CorridorState {
    pub fn new(config: CorridorConfig, demand: DemandConfig, timings: FixedTimings, seed: u64) -> Result<Self> {
        config.validate()?;
        demand.validate(&config)?;
        timings.validate()?;
        let n = config.num_intersections;
        let lanes_per = config.lanes_per_approach;
        let mut lanes = Vec::with_capacity(n * 4 * lanes_per);
        for i in 0..n {
            for side in Side::ALL {
                for _ in 0..lanes_per {
                    lanes.push(Lane {
                        length: approach_length(&config, i, side),
                        vehicles: VecDeque::new(),
                    });
                }
            }
        }
        let routes = demand
            .vehicle_flows
            .iter()
            .map(|f| {
                let route = route(n, f.origin, f.destination)?;
                let freeflow_time = route.length(&config) / config.design_speed_mps();
                Ok(FlowRoute { route, freeflow_time })
            })
            .collect::<Result<Vec<_>>>()?;
        let occupants = |field: &str, d: &[OccupantWeight]| {
            WeightedIndex::new(d.iter().map(|w| w.probability))
                .map_err(|e| Error::config(field, alloc::format!("{e}")))
        };
        let car_occupants = occupants("demand.occupants.car", &demand.occupants.car)?;
        let bus_occupants = occupants("demand.occupants.bus", &demand.occupants.bus)?;
        let default_plan = decode_plan(0.5, timings.min_half_cycle().max(50), &timings)?;
        let controllers = (0..n).map(|i| SignalController::new(i, default_plan, timings)).collect();
        Ok(CorridorState {
            held: (0..num_vehicle_zones(n)).map(|_| VecDeque::new()).collect(),
            ped_queues: (0..n * PED_ZONES).map(|_| VecDeque::new()).collect(),
            ped_credit: alloc::vec![0.0; n * PED_ZONES],
            controllers,
            trips: Vec::new(),
            signal_log: Vec::new(),
            routes,
            car_occupants,
            bus_occupants,
            counters: Counters::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_id: 0,
            clock: 0,
            lanes,
            config,
            demand,
            timings,
        })
    }

    pub fn config(&self) -> &CorridorConfig {
        &self.config
    }

    pub fn demand(&self) -> &DemandConfig {
        &self.demand
    }

    pub fn timings(&self) -> &FixedTimings {
        &self.timings
    }

    /// Seconds simulated so far.
    pub fn clock(&self) -> u32 {
        self.clock
    }

    pub fn finished(&self) -> bool {
        self.clock >= self.demand.horizon
    }

    fn lane_index(&self, intersection: usize, approach: Side, lane: usize) -> usize {
        (intersection * 4 + approach.index()) * self.config.lanes_per_approach + lane
    }

    pub fn lane(&self, intersection: usize, approach: Side, lane: usize) -> &Lane {
        &self.lanes[self.lane_index(intersection, approach, lane)]
    }

    /// Vehicles inside the network (not those held at an entry).
    pub fn vehicles(&self) -> impl Iterator<Item = &Vehicle> {
        self.lanes.iter().flat_map(|l| l.vehicles.iter())
    }

    pub fn vehicles_in_network(&self) -> usize {
        self.lanes.iter().map(|l| l.vehicles.len()).sum()
    }

    pub fn held_vehicles(&self) -> usize {
        self.held.iter().map(|q| q.len()).sum()
    }

    pub fn ped_queue(&self, intersection: usize, zone: usize) -> usize {
        self.ped_queues[intersection * PED_ZONES + zone].len()
    }

    pub fn waiting_pedestrians(&self) -> usize {
        self.ped_queues.iter().map(|q| q.len()).sum()
    }

    pub fn controllers(&self) -> &[SignalController] {
        &self.controllers
    }

    pub fn install_plan(&mut self, intersection: usize, plan: SignalPlan) -> Result<()> {
        self.controllers
            .get_mut(intersection)
            .ok_or_else(|| Error::Domain(alloc::format!("no intersection {intersection}")))?
            .install_plan(plan)
    }

    pub fn trips(&self) -> &[TripRecord] {
        &self.trips
    }

    pub fn signal_log(&self) -> &[IntervalRecord] {
        &self.signal_log
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    /// spawned = in network + exited + held.
    pub fn conservation_holds(&self) -> bool {
        self.counters.spawned_vehicles
            == self.vehicles_in_network() as u64 + self.counters.exited_vehicles + self.held_vehicles() as u64
    }

    /// Advances the world by one simulation step and returns the delay
    /// snapshot observed at its end.
    pub fn step(&mut self) -> DelaySnapshot {
        let now = self.clock;
        self.spawn_demand();
        self.serve_pedestrians();
        self.move_vehicles();
        let snapshot = self.observe_delay();
        for c in &mut self.controllers {
            if let Some(record) = c.tick(now) {
                self.signal_log.push(record);
            }
        }
        self.clock += 1;
        debug_assert!(self.conservation_holds());
        snapshot
    }

    /// Poisson arrivals for this step: vehicles join the virtual queue of
    /// their origin and enter as soon as the entry lane has room;
    /// pedestrians join their crossing zone.
    pub fn spawn_demand(&mut self) {
        let now = self.clock;
        let dt = self.config.sim_step;
        let multiplier = self.demand.multiplier_at(now);
        for (f, flow) in self.demand.vehicle_flows.iter().enumerate() {
            let count = poisson(&mut self.rng, flow.vehicles_per_hour * multiplier * dt / 3600.0);
            for _ in 0..count {
                let bus = flow.bus_share > 0.0 && self.rng.random_bool(flow.bus_share);
                let (class, occupants, length) = if bus {
                    let k = self.bus_occupants.sample(&mut self.rng);
                    (VehicleClass::Bus, self.demand.occupants.bus[k].occupants, self.config.vehicle.bus_length)
                } else {
                    let k = self.car_occupants.sample(&mut self.rng);
                    (VehicleClass::Car, self.demand.occupants.car[k].occupants, self.config.vehicle.car_length)
                };
                let r = &self.routes[f];
                let vehicle = Vehicle {
                    id: self.next_id,
                    class,
                    occupants,
                    position: 0.0,
                    speed: 0.0,
                    acceleration: 0.0,
                    length,
                    route: r.route.clone(),
                    leg: 0,
                    intersection: r.route.entry.intersection,
                    approach: r.route.entry.side,
                    lane: 0,
                    entry_time: now,
                    delay: 0,
                    freeflow_time: r.freeflow_time,
                    last_moved: u32::MAX,
                };
                self.next_id += 1;
                self.counters.spawned_vehicles += 1;
                self.counters.demand_persons += occupants as u64;
                self.held[flow.origin].push_back(vehicle);
            }
        }
        for flow in &self.demand.pedestrian_flows {
            let count = poisson(&mut self.rng, flow.peds_per_hour * multiplier * dt / 3600.0);
            let queue = &mut self.ped_queues[flow.intersection * PED_ZONES + flow.zone];
            for _ in 0..count {
                queue.push_back(now);
            }
            self.counters.spawned_peds += count;
            self.counters.demand_persons += count;
        }
        self.release_held();
    }

    fn release_held(&mut self) {
        let v_max = self.config.design_speed_mps();
        let params = self.config.vehicle;
        for origin in 0..self.held.len() {
            while let Some(front) = self.held[origin].front() {
                let (i, side) = (front.intersection, front.approach);
                let Some(lane) = self.pick_lane(i, side, front.movement()) else {
                    break;
                };
                let mut v = self.held[origin].pop_front().expect("front exists");
                let idx = self.lane_index(i, side, lane);
                let target = &mut self.lanes[idx];
                v.position = target.length;
                v.speed = match target.vehicles.back() {
                    Some(b) => {
                        let gap = target.length - (b.position + b.length) - params.min_gap;
                        safe_speed(gap, b.speed, params.max_decel, self.config.sim_step).min(v_max)
                    }
                    None => v_max,
                };
                v.lane = lane;
                target.vehicles.push_back(v);
            }
        }
    }

    /// Lane of approach (i, side) with the most free space among those
    /// allowed for `movement`, if any has room.
    fn pick_lane(&self, i: usize, side: Side, movement: Movement) -> Option<usize> {
        let min_gap = self.config.vehicle.min_gap;
        let mut best: Option<(usize, f64)> = None;
        for b in lanes_for(movement, self.config.lanes_per_approach) {
            let lane = self.lane(i, side, b);
            if !lane.has_room(min_gap) {
                continue;
            }
            let space = lane.free_space();
            if best.is_none_or(|(_, s)| space > s) {
                best = Some((b, space));
            }
        }
        best.map(|(b, _)| b)
    }

    fn serve_pedestrians(&mut self) {
        let now = self.clock;
        let rate = self.config.ped_service_rate * self.config.sim_step;
        for i in 0..self.config.num_intersections {
            for z in 0..PED_ZONES {
                let k = i * PED_ZONES + z;
                if !self.controllers[i].is_green(ped_zone_phase(z)) {
                    self.ped_credit[k] = 0.0;
                    continue;
                }
                self.ped_credit[k] += rate;
                while self.ped_credit[k] >= 1.0 {
                    let Some(arrival) = self.ped_queues[k].pop_front() else {
                        break;
                    };
                    self.ped_credit[k] -= 1.0;
                    let waited = now - arrival;
                    self.counters.served_peds += 1;
                    self.trips.push(TripRecord {
                        mode: TravelMode::Pedestrian,
                        occupants: 1,
                        entry_s: arrival,
                        exit_s: now,
                        delay_s: waited,
                        freeflow_delay_s: waited as f64,
                    });
                }
                if self.ped_queues[k].is_empty() {
                    self.ped_credit[k] = 0.0;
                }
            }
        }
    }

    fn move_vehicles(&mut self) {
        let now = self.clock;
        let dt = self.config.sim_step;
        let v_max = self.config.design_speed_mps();
        let params = self.config.vehicle;
        let n = self.config.num_intersections;
        for k in 0..self.lanes.len() {
            let mut queue = core::mem::take(&mut self.lanes[k].vehicles);
            let mut kept = VecDeque::with_capacity(queue.len());
            // (position, speed, length) of the leader at the start of the step
            let mut leader: Option<(f64, f64, f64)> = None;
            while let Some(mut v) = queue.pop_front() {
                if v.last_moved == now {
                    kept.push_back(v);
                    continue;
                }
                let old = (v.position, v.speed, v.length);
                let (gap, leader_speed) = match leader {
                    Some((p, s, len)) => (v.position - p - len, s),
                    None => (f64::INFINITY, 0.0),
                };
                let movement = v.movement();
                let exit = exit_side(v.approach, movement);
                let next = downstream(n, v.intersection, exit);
                let mut target_lane = None;
                let stop_line = if kept.is_empty() {
                    let blocked = match next {
                        None => false,
                        Some((j, side)) => {
                            target_lane = self.pick_lane(j, side, v.route.movements[v.leg + 1]);
                            target_lane.is_none()
                        }
                    };
                    Some(StopLine {
                        distance: v.position,
                        signal: self.controllers[v.intersection].signal_for(v.approach, movement),
                        blocked,
                    })
                } else {
                    None
                };
                let m = car_following_update(&params, v_max, v.speed, gap, leader_speed, stop_line, dt);
                v.speed = m.speed;
                v.acceleration = m.acceleration;
                v.position -= m.displacement;
                v.last_moved = now;
                leader = Some(old);

                if v.position >= 0.0 {
                    kept.push_back(v);
                    continue;
                }
                match (next, target_lane) {
                    (None, _) => {
                        self.counters.exited_vehicles += 1;
                        let exit_s = now + 1;
                        self.trips.push(TripRecord {
                            mode: match v.class {
                                VehicleClass::Car => TravelMode::Car,
                                VehicleClass::Bus => TravelMode::Bus,
                            },
                            occupants: v.occupants,
                            entry_s: v.entry_time,
                            exit_s,
                            delay_s: v.delay,
                            freeflow_delay_s: (exit_s - v.entry_time) as f64 - v.freeflow_time,
                        });
                    }
                    (Some((j, side)), Some(lane)) => {
                        let idx = self.lane_index(j, side, lane);
                        let target = &mut self.lanes[idx];
                        let mut position = target.length + v.position;
                        if let Some(b) = target.vehicles.back() {
                            position = position.max(b.position + b.length + params.min_gap);
                        }
                        v.position = position;
                        v.leg += 1;
                        v.intersection = j;
                        v.approach = side;
                        v.lane = lane;
                        target.vehicles.push_back(v);
                    }
                    (Some(_), None) => unreachable!("a blocked vehicle never passes its stop line"),
                }
            }
            self.lanes[k].vehicles = kept;
        }
    }

    fn observe_delay(&mut self) -> DelaySnapshot {
        let threshold = self.config.delay_threshold;
        let mut occupants = Vec::new();
        for lane in &mut self.lanes {
            for v in &mut lane.vehicles {
                if is_vehicle_delayed(v.speed_kmh(), threshold) {
                    v.delay += 1;
                    occupants.push(v.occupants);
                }
            }
        }
        for queue in &mut self.held {
            for v in queue.iter_mut() {
                v.delay += 1;
                occupants.push(v.occupants);
            }
        }
        let pedestrians = (0..self.config.num_intersections)
            .map(|i| (0..PED_ZONES).map(|z| self.ped_queue(i, z) as u32).sum())
            .collect();
        DelaySnapshot::new(self.clock, occupants, pedestrians)
    }

    /// Delayed vehicles per encoded cell: `[intersection][4 * approach +
    /// lane][cell]`, cell 0 at the stop line.
    pub fn delay_grid(&self) -> Vec<Vec<Vec<u32>>> {
        let cells = self.config.cells_per_lane;
        let mut grid = alloc::vec![alloc::vec![alloc::vec![0u32; cells]; 16]; self.config.num_intersections];
        for i in 0..self.config.num_intersections {
            for side in Side::ALL {
                for b in 0..self.config.lanes_per_approach {
                    for v in &self.lane(i, side, b).vehicles {
                        let cell = libm::floor(v.position / self.config.cell_length);
                        if cell >= 0.0 && (cell as usize) < cells && is_vehicle_delayed(v.speed_kmh(), self.config.delay_threshold) {
                            grid[i][4 * side.index() + b][cell as usize] += 1;
                        }
                    }
                }
            }
        }
        grid
    }

    #[cfg(test)]
    pub(crate) fn place_vehicle_for_test(&mut self, mut v: Vehicle) {
        let idx = self.lane_index(v.intersection, v.approach, v.lane);
        v.last_moved = u32::MAX;
        self.counters.spawned_vehicles += 1;
        let lane = &mut self.lanes[idx].vehicles;
        let at = lane.iter().position(|o| o.position > v.position).unwrap_or(lane.len());
        lane.insert(at, v);
    }
}

#[cfg(test)]
pub(crate) fn test_vehicle(intersection: usize, approach: Side, lane: usize, position: f64, speed: f64, route: Route) -> Vehicle {
    Vehicle {
        id: 999,
        class: VehicleClass::Car,
        occupants: 2,
        position,
        speed,
        acceleration: 0.0,
        length: 5.0,
        route,
        leg: 0,
        intersection,
        approach,
        lane,
        entry_time: 0,
        delay: 0,
        freeflow_time: 0.0,
        last_moved: u32::MAX,
    }
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map_or(0, |d| d.sample(rng) as u64)
}
