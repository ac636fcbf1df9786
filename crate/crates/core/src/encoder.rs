//! Flattened per-agent observation: cell grids, pedestrian queues, phase.
//!
//! Per agent the slice is `[O | V | A | P | ped | phase]`. Each grid has 16
//! rows (`4 * approach + lane`) of `l` cells, cell 0 touching the stop line.
//! Values are stored in physical units (km/h, m/s², persons); the network
//! input is produced by [`StateVector::normalized`].

use alloc::vec;
use alloc::vec::Vec;

use crate::sim::{CorridorState, Side, PED_ZONES};
use crate::signal_control::Phase;

pub const GRID_ROWS: usize = 16;
pub const PHASES: usize = 4;

/// Fixed input scales for the network.
pub const SPEED_SCALE: f64 = 60.0;
pub const ACCEL_SCALE: f64 = 4.0;
pub const OCCUPANT_SCALE: f64 = 10.0;
pub const PED_SCALE: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Occupancy = 0,
    Speed = 1,
    Accel = 2,
    Occupants = 3,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Occupancy, Channel::Speed, Channel::Accel, Channel::Occupants];

    fn scale(self) -> f64 {
        match self {
            Channel::Occupancy => 1.0,
            Channel::Speed => SPEED_SCALE,
            Channel::Accel => ACCEL_SCALE,
            Channel::Occupants => OCCUPANT_SCALE,
        }
    }
}

/// Offsets into a [`StateVector`]; a pure function of agent and cell counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub agents: usize,
    pub cells: usize,
}

impl StateLayout {
    pub fn new(agents: usize, cells: usize) -> Self {
        StateLayout { agents, cells }
    }

    pub fn grid_len(&self) -> usize {
        GRID_ROWS * self.cells
    }

    pub fn agent_len(&self) -> usize {
        4 * self.grid_len() + PED_ZONES + PHASES
    }

    pub fn len(&self) -> usize {
        self.agents * self.agent_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn agent_offset(&self, agent: usize) -> usize {
        agent * self.agent_len()
    }

    pub fn grid_offset(&self, agent: usize, channel: Channel) -> usize {
        self.agent_offset(agent) + channel as usize * self.grid_len()
    }

    pub fn cell(&self, agent: usize, channel: Channel, row: usize, cell: usize) -> usize {
        self.grid_offset(agent, channel) + row * self.cells + cell
    }

    pub fn ped_offset(&self, agent: usize) -> usize {
        self.agent_offset(agent) + 4 * self.grid_len()
    }

    pub fn phase_offset(&self, agent: usize) -> usize {
        self.ped_offset(agent) + PED_ZONES
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub layout: StateLayout,
    pub values: Vec<f64>,
}

/// Normalized network input holding only the non-zero entries.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct SparseInput {
    pub dim: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseInput {
    pub fn from_dense(values: &[f64]) -> Self {
        let mut s = SparseInput {
            dim: values.len(),
            ..Default::default()
        };
        for (k, &x) in values.iter().enumerate() {
            if x != 0.0 {
                s.indices.push(k as u32);
                s.values.push(x);
            }
        }
        s
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&k, &x) in self.indices.iter().zip(&self.values) {
            out[k as usize] = x;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&k| k as usize).zip(self.values.iter().copied())
    }
}

impl StateVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn agent(&self, agent: usize) -> &[f64] {
        let o = self.layout.agent_offset(agent);
        &self.values[o..o + self.layout.agent_len()]
    }

    pub fn phase(&self, agent: usize) -> &[f64] {
        let o = self.layout.phase_offset(agent);
        &self.values[o..o + PHASES]
    }

    /// Divides each entry by its channel scale, keeping only non-zeros.
    pub fn normalized(&self) -> SparseInput {
        let l = self.layout;
        let mut s = SparseInput {
            dim: self.len(),
            ..Default::default()
        };
        for agent in 0..l.agents {
            for ch in Channel::ALL {
                let o = l.grid_offset(agent, ch);
                for k in o..o + l.grid_len() {
                    if self.values[k] != 0.0 {
                        s.indices.push(k as u32);
                        s.values.push(self.values[k] / ch.scale());
                    }
                }
            }
            let p = l.ped_offset(agent);
            for k in p..p + PED_ZONES + PHASES {
                if self.values[k] != 0.0 {
                    let scale = if k < p + PED_ZONES { PED_SCALE } else { 1.0 };
                    s.indices.push(k as u32);
                    s.values.push(self.values[k] / scale);
                }
            }
        }
        s
    }
}

pub fn encode_phase_onehot(phase: Phase) -> [f64; PHASES] {
    let mut g = [0.0; PHASES];
    g[phase.index()] = 1.0;
    g
}

/// Snapshot of the observation every agent sees.
pub fn encode_state(state: &CorridorState) -> StateVector {
    let config = state.config();
    let layout = StateLayout::new(config.num_intersections, config.cells_per_lane);
    let mut values = vec![0.0; layout.len()];
    for i in 0..layout.agents {
        for side in Side::ALL {
            for b in 0..config.lanes_per_approach {
                let row = 4 * side.index() + b;
                // front vehicles first: the first one in a cell sets V and A
                for v in &state.lane(i, side, b).vehicles {
                    let cell = libm::floor(v.position / config.cell_length);
                    if cell < 0.0 || cell as usize >= layout.cells {
                        continue;
                    }
                    let cell = cell as usize;
                    let o = layout.cell(i, Channel::Occupancy, row, cell);
                    if values[o] == 0.0 {
                        values[o] = 1.0;
                        values[layout.cell(i, Channel::Speed, row, cell)] = v.speed_kmh();
                        values[layout.cell(i, Channel::Accel, row, cell)] = v.acceleration;
                    }
                    values[layout.cell(i, Channel::Occupants, row, cell)] += f64::from(v.occupants);
                }
            }
        }
        let p = layout.ped_offset(i);
        for z in 0..PED_ZONES {
            values[p + z] = state.ped_queue(i, z) as f64;
        }
        let g = layout.phase_offset(i);
        values[g..g + PHASES].copy_from_slice(&encode_phase_onehot(state.controllers()[i].current_phase()));
    }
    StateVector { layout, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{init_corridor, route, test_vehicle, CorridorConfig, DemandConfig, PedestrianFlow, VehicleFlow};
    use proptest::prelude::*;

    fn empty_state() -> CorridorState {
        init_corridor(CorridorConfig::default(), DemandConfig::empty(100), 0).unwrap()
    }

    #[test]
    fn layout_length() {
        let l = StateLayout::new(3, 10);
        assert_eq!(l.len(), 3 * (4 * 16 * 10 + 8 + 4));
        assert_eq!(l.phase_offset(2) + PHASES, l.len());
    }

    #[test]
    fn onehots() {
        assert_eq!(encode_phase_onehot(Phase::A), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(encode_phase_onehot(Phase::C), [0.0, 0.0, 1.0, 0.0]);
        assert_eq!(encode_phase_onehot(Phase::D), [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn empty_network() {
        let s = encode_state(&empty_state());
        assert_eq!(s.len(), s.layout.len());
        for i in 0..3 {
            assert_eq!(s.phase(i), &[1.0, 0.0, 0.0, 0.0]);
            assert!(s.agent(i)[..s.layout.phase_offset(0)].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn car_nine_metres_from_line() {
        let mut st = empty_state();
        let mut v = test_vehicle(1, Side::South, 2, 9.0, 30.0 / 3.6, route(3, 3, 2).unwrap());
        v.occupants = 2;
        st.place_vehicle_for_test(v);
        let s = encode_state(&st);
        let l = s.layout;
        // cell 0 covers [0, 6), so 9 m falls into the second cell
        let row = 4 * Side::South.index() + 2;
        assert_eq!(s.values[l.cell(1, Channel::Occupancy, row, 1)], 1.0);
        assert!((s.values[l.cell(1, Channel::Speed, row, 1)] - 30.0).abs() < 1e-12);
        assert_eq!(s.values[l.cell(1, Channel::Occupants, row, 1)], 2.0);
        // O, V, P plus three phase one-hots
        assert_eq!(s.values.iter().filter(|&&x| x != 0.0).count(), 6);
    }

    #[test]
    fn dense_cell_keeps_front_vehicle_and_sums_occupants() {
        let mut st = empty_state();
        let r = route(3, 3, 2).unwrap();
        let mut front = test_vehicle(0, Side::North, 0, 0.5, 1.0, r.clone());
        front.acceleration = -1.0;
        front.occupants = 3;
        let mut back = test_vehicle(0, Side::North, 0, 5.9, 2.0, r);
        back.length = 0.1;
        back.occupants = 4;
        st.place_vehicle_for_test(back);
        st.place_vehicle_for_test(front);
        let s = encode_state(&st);
        let l = s.layout;
        assert_eq!(s.values[l.cell(0, Channel::Occupancy, 0, 0)], 1.0);
        assert!((s.values[l.cell(0, Channel::Speed, 0, 0)] - 3.6).abs() < 1e-12);
        assert_eq!(s.values[l.cell(0, Channel::Accel, 0, 0)], -1.0);
        assert_eq!(s.values[l.cell(0, Channel::Occupants, 0, 0)], 7.0);
    }

    #[test]
    fn vehicles_beyond_span_are_invisible() {
        let mut st = empty_state();
        st.place_vehicle_for_test(test_vehicle(0, Side::North, 0, 60.0, 0.0, route(3, 3, 2).unwrap()));
        let s = encode_state(&st);
        assert_eq!(s.values.iter().filter(|&&x| x != 0.0).count(), 3);
    }

    #[test]
    fn normalized_matches_scales() {
        let mut st = empty_state();
        let mut v = test_vehicle(0, Side::West, 1, 1.0, 60.0 / 3.6, route(3, 0, 1).unwrap());
        v.acceleration = 2.0;
        v.occupants = 5;
        st.place_vehicle_for_test(v);
        let s = encode_state(&st);
        let n = s.normalized().to_dense();
        let l = s.layout;
        let row = 4 * Side::West.index() + 1;
        assert!((n[l.cell(0, Channel::Speed, row, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(n[l.cell(0, Channel::Accel, row, 0)], 0.5);
        assert_eq!(n[l.cell(0, Channel::Occupants, row, 0)], 0.5);
        assert_eq!(n[l.phase_offset(2)], 1.0);
    }

    fn random_demand(seed: u64) -> DemandConfig {
        let mut d = DemandConfig::empty(400);
        for o in 0..8 {
            d.vehicle_flows.push(VehicleFlow {
                origin: o,
                destination: (o + 1 + seed as usize % 7) % 8,
                vehicles_per_hour: 200.0 + 100.0 * (o as f64),
                bus_share: 0.2,
            });
        }
        d.vehicle_flows.retain(|f| f.origin != f.destination);
        d.pedestrian_flows.push(PedestrianFlow {
            intersection: 1,
            zone: 6,
            peds_per_hour: 300.0,
        });
        d
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn occupancy_gates_channels(seed in 0u64..1000, steps in 1usize..400) {
            let mut st = init_corridor(CorridorConfig::default(), random_demand(seed), seed).unwrap();
            for _ in 0..steps {
                st.step();
            }
            let s = encode_state(&st);
            let l = s.layout;
            let mut visible = 0;
            for i in 0..l.agents {
                for row in 0..GRID_ROWS {
                    for c in 0..l.cells {
                        let o = s.values[l.cell(i, Channel::Occupancy, row, c)];
                        prop_assert!(o == 0.0 || o == 1.0);
                        for ch in [Channel::Speed, Channel::Accel, Channel::Occupants] {
                            prop_assert_eq!(s.values[l.cell(i, ch, row, c)] * (1.0 - o), 0.0);
                        }
                    }
                }
                prop_assert_eq!(s.phase(i).iter().sum::<f64>(), 1.0);
            }
            // every vehicle within the span lands in an occupied cell
            for v in st.vehicles() {
                if v.position < l.cells as f64 * st.config().cell_length {
                    visible += 1;
                }
            }
            let occupants: f64 = (0..l.agents)
                .flat_map(|i| { let o = l.grid_offset(i, Channel::Occupants); s.values[o..o + l.grid_len()].to_vec() })
                .sum();
            let expected: u32 = st.vehicles().filter(|v| v.position < l.cells as f64 * st.config().cell_length).map(|v| v.occupants).sum();
            prop_assert_eq!(occupants, f64::from(expected));
            let ones = (0..l.agents)
                .map(|i| { let o = l.grid_offset(i, Channel::Occupancy); s.values[o..o + l.grid_len()].iter().sum::<f64>() })
                .sum::<f64>();
            // cars keep min_gap behind a 5 m body, so no two fronts share a 6 m cell
            prop_assert_eq!(ones, visible as f64);
        }
    }
}
