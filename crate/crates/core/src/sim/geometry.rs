//! Corridor topology: sides, movements, entry/exit zones and routing.
//!
//! Intersections are numbered west to east along the arterial. Traffic keeps
//! left, so right turns cross opposing traffic and run in their own stage.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::config::{CorridorConfig, DemandConfig};
use crate::error::{Error, Result};
use crate::signal_control::{critical_flow_ratio, Phase};

pub const PED_ZONES: usize = 8;

/// Compass side of an intersection; also names the approach a vehicle
/// arrives from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    North,
    East,
    South,
    West,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::North, Side::East, Side::South, Side::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Side {
        Side::ALL[(self.index() + 2) % 4]
    }

    /// Side reached by turning left while heading toward `self`.
    fn left_of_heading(self) -> Side {
        Side::ALL[(self.index() + 3) % 4]
    }

    fn right_of_heading(self) -> Side {
        Side::ALL[(self.index() + 1) % 4]
    }

    pub fn is_arterial(self) -> bool {
        matches!(self, Side::East | Side::West)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Movement {
    Left,
    Through,
    Right,
}

/// Movement of a vehicle heading toward `heading` that leaves toward `exit`.
pub fn classify_movement(heading: Side, exit: Side) -> Option<Movement> {
    if exit == heading {
        Some(Movement::Through)
    } else if exit == heading.left_of_heading() {
        Some(Movement::Left)
    } else if exit == heading.right_of_heading() {
        Some(Movement::Right)
    } else {
        None
    }
}

/// Whether `phase` releases `movement` on the approach from `approach`.
pub fn phase_serves(phase: Phase, approach: Side, movement: Movement) -> bool {
    let right = movement == Movement::Right;
    match phase {
        Phase::A => approach.is_arterial() && !right,
        Phase::B => approach.is_arterial() && right,
        Phase::C => !approach.is_arterial() && !right,
        Phase::D => !approach.is_arterial() && right,
    }
}

/// Phase during which pedestrians of crossing zone `zone` walk: zones 0-3
/// cross the side-street legs alongside the arterial stage A, zones 4-7 cross
/// the arterial alongside stage C.
pub fn ped_zone_phase(zone: usize) -> Phase {
    if zone < 4 {
        Phase::A
    } else {
        Phase::C
    }
}

/// Entry/exit zone: 0 west end, 1 east end, then north and south legs of
/// each intersection (2 + 2i, 3 + 2i).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    pub intersection: usize,
    pub side: Side,
}

pub fn num_vehicle_zones(num_intersections: usize) -> usize {
    2 + 2 * num_intersections
}

pub fn zone(num_intersections: usize, index: usize) -> Option<Zone> {
    match index {
        0 => Some(Zone { intersection: 0, side: Side::West }),
        1 => Some(Zone {
            intersection: num_intersections - 1,
            side: Side::East,
        }),
        k if k < num_vehicle_zones(num_intersections) => {
            let i = (k - 2) / 2;
            let side = if k % 2 == 0 { Side::North } else { Side::South };
            Some(Zone { intersection: i, side })
        }
        _ => None,
    }
}

/// Movements taken at each intersection crossed, from origin to destination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub entry: Zone,
    pub movements: Vec<Movement>,
}

impl Route {
    /// Intersection and approach of leg `k` of the route.
    pub fn leg(&self, k: usize) -> (usize, Side) {
        let mut intersection = self.entry.intersection;
        let mut approach = self.entry.side;
        for m in &self.movements[..k] {
            let exit = exit_side(approach, *m);
            intersection = if exit == Side::East { intersection + 1 } else { intersection - 1 };
            approach = exit.opposite();
        }
        (intersection, approach)
    }

    /// Total length driven, m.
    pub fn length(&self, config: &CorridorConfig) -> f64 {
        (0..self.movements.len())
            .map(|k| {
                let (i, a) = self.leg(k);
                approach_length(config, i, a)
            })
            .sum()
    }
}

pub fn exit_side(approach: Side, movement: Movement) -> Side {
    let heading = approach.opposite();
    match movement {
        Movement::Through => heading,
        Movement::Left => heading.left_of_heading(),
        Movement::Right => heading.right_of_heading(),
    }
}

pub fn route(num_intersections: usize, origin: usize, destination: usize) -> Result<Route> {
    let bad = |reason| Error::config("demand.vehicle_flows", reason);
    let from = zone(num_intersections, origin).ok_or_else(|| bad("origin zone out of range"))?;
    let to = zone(num_intersections, destination).ok_or_else(|| bad("destination zone out of range"))?;
    if origin == destination {
        return Err(bad("origin equals destination"));
    }
    let mut movements = Vec::new();
    let mut intersection = from.intersection;
    let mut approach = from.side;
    loop {
        let exit = if intersection == to.intersection {
            to.side
        } else if to.intersection > intersection {
            Side::East
        } else {
            Side::West
        };
        let m = classify_movement(approach.opposite(), exit).ok_or_else(|| bad("route would need a U-turn"))?;
        movements.push(m);
        if intersection == to.intersection {
            break;
        }
        intersection = if exit == Side::East { intersection + 1 } else { intersection - 1 };
        approach = exit.opposite();
    }
    Ok(Route { entry: from, movements })
}

/// Where a vehicle leaving `intersection` toward `exit` ends up: the approach
/// of a neighbouring intersection, or outside the network.
pub fn downstream(num_intersections: usize, intersection: usize, exit: Side) -> Option<(usize, Side)> {
    match exit {
        Side::East if intersection + 1 < num_intersections => Some((intersection + 1, Side::West)),
        Side::West if intersection > 0 => Some((intersection - 1, Side::East)),
        _ => None,
    }
}

pub fn approach_length(config: &CorridorConfig, intersection: usize, approach: Side) -> f64 {
    match approach {
        Side::West if intersection > 0 => config.link_lengths[intersection - 1],
        Side::East if intersection + 1 < config.num_intersections => config.link_lengths[intersection],
        _ => config.entry_length,
    }
}

/// Lanes of an approach that may carry `movement`: the innermost lane is
/// reserved for right turns when there is more than one lane.
pub fn lanes_for(movement: Movement, lanes: usize) -> core::ops::Range<usize> {
    if lanes == 1 {
        0..1
    } else if movement == Movement::Right {
        lanes - 1..lanes
    } else {
        0..lanes - 1
    }
}

/// Critical flow ratios of phases A..D at every intersection, from the
/// routed demand and a saturation flow of 1900 veh/h/lane.
pub fn phase_flow_ratios(config: &CorridorConfig, demand: &DemandConfig) -> Result<Vec<[f64; 4]>> {
    let n = config.num_intersections;
    // volume[i][side][0 = left/through, 1 = right]
    let mut volume = vec![[[0.0f64; 2]; 4]; n];
    for flow in &demand.vehicle_flows {
        let r = route(n, flow.origin, flow.destination)?;
        for (k, m) in r.movements.iter().enumerate() {
            let (i, a) = r.leg(k);
            volume[i][a.index()][(*m == Movement::Right) as usize] += flow.vehicles_per_hour;
        }
    }
    let lanes = config.lanes_per_approach;
    let lt_lanes = lanes_for(Movement::Through, lanes).len();
    let r_lanes = lanes_for(Movement::Right, lanes).len();
    Ok(volume
        .iter()
        .map(|v| {
            let mut ratios = [0.0; 4];
            for phase in Phase::ALL {
                let right = matches!(phase, Phase::B | Phase::D);
                let group_lanes = if right { r_lanes } else { lt_lanes };
                ratios[phase.index()] = Side::ALL
                    .iter()
                    .filter(|s| s.is_arterial() == matches!(phase, Phase::A | Phase::B))
                    .map(|s| critical_flow_ratio(v[s.index()][right as usize], group_lanes))
                    .fold(0.0, f64::max);
            }
            ratios
        })
        .collect())
}
