//! Fixed-time baselines: Webster cycle length, proportional green split and
//! distance/speed green-wave offsets.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{decode_plan, FixedTimings, PhasePair, SignalPlan};
use crate::error::{Error, Result};

/// Saturation flow used for critical flow ratios, veh/h/lane.
pub const SATURATION_FLOW_PER_LANE: f64 = 1900.0;
pub const WEBSTER_MIN_CYCLE: f64 = 30.0;
pub const WEBSTER_MAX_CYCLE: f64 = 150.0;

pub fn critical_flow_ratio(demand_vph: f64, lanes: usize) -> f64 {
    demand_vph / (SATURATION_FLOW_PER_LANE * lanes as f64)
}

/// C0 = (1.5 L + 5) / (1 - Y), without clamping.
pub fn webster_cycle_unclamped(critical_flow_ratios: &[f64], lost_time: f64) -> Result<f64> {
    if !(lost_time > 0.0) {
        return Err(Error::Domain(alloc::format!("lost time {lost_time} must be > 0")));
    }
    if let Some(bad) = critical_flow_ratios.iter().find(|y| !(**y >= 0.0)) {
        return Err(Error::Domain(alloc::format!("negative flow ratio {bad}")));
    }
    let y: f64 = critical_flow_ratios.iter().sum();
    if y >= 1.0 {
        return Err(Error::Oversaturated(y));
    }
    Ok((1.5 * lost_time + 5.0) / (1.0 - y))
}

/// Webster optimum cycle clamped to [30, 150] s.
pub fn webster_cycle(critical_flow_ratios: &[f64], lost_time: f64) -> Result<f64> {
    webster_cycle_unclamped(critical_flow_ratios, lost_time)
        .map(|c| c.clamp(WEBSTER_MIN_CYCLE, WEBSTER_MAX_CYCLE))
}

/// Distributes `cycle` minus the clearances over the phases in proportion to
/// their critical flow ratios, never going below the minimum green.
pub fn green_split(cycle: u32, ratios: &[f64], timings: &FixedTimings) -> Result<Vec<u32>> {
    let n = ratios.len() as u32;
    let required = n * (timings.min_green + timings.clearance());
    if n == 0 || cycle < required {
        return Err(Error::InfeasibleDuration { total: cycle, required });
    }
    let budget = (cycle - n * timings.clearance()) as f64;
    let min_green = timings.min_green as f64;
    let total_ratio: f64 = ratios.iter().sum();
    let weights: Vec<f64> = if total_ratio > 0.0 {
        ratios.to_vec()
    } else {
        vec![1.0; ratios.len()]
    };

    // fix phases whose proportional share falls under the minimum, then
    // re-spread what is left over the remaining ones
    let mut fixed = vec![false; ratios.len()];
    let mut shares = vec![0.0; ratios.len()];
    loop {
        let free_weight: f64 = (0..ratios.len()).filter(|&i| !fixed[i]).map(|i| weights[i]).sum();
        let free_budget = budget - fixed.iter().filter(|f| **f).count() as f64 * min_green;
        let mut changed = false;
        for i in 0..ratios.len() {
            if fixed[i] {
                shares[i] = min_green;
                continue;
            }
            shares[i] = if free_weight > 0.0 {
                free_budget * weights[i] / free_weight
            } else {
                free_budget / (fixed.iter().filter(|f| !**f).count() as f64)
            };
        }
        for i in 0..ratios.len() {
            if !fixed[i] && shares[i] < min_green {
                fixed[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    // largest-remainder rounding keeps the sum exact
    let mut greens: Vec<u32> = shares.iter().map(|s| libm::floor(*s + 1e-9) as u32).collect();
    let assigned: u32 = greens.iter().sum();
    let mut leftover = budget as u32 - assigned;
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - greens[a] as f64;
        let rb = shares[b] - greens[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        greens[i] += 1;
        leftover -= 1;
    }
    Ok(greens)
}

/// Offset of each intersection relative to the westernmost one: cumulative
/// distance divided by the design speed.
pub fn green_wave_offsets(link_lengths: &[f64], design_speed_kmh: f64) -> Result<Vec<f64>> {
    if !(design_speed_kmh > 0.0) {
        return Err(Error::Domain(alloc::format!("design speed {design_speed_kmh} must be > 0")));
    }
    let speed = design_speed_kmh / 3.6;
    let mut offsets = Vec::with_capacity(link_lengths.len() + 1);
    let mut distance = 0.0;
    offsets.push(0.0);
    for d in link_lengths {
        distance += d;
        offsets.push(distance / speed);
    }
    Ok(offsets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixedTimeVariant {
    /// FS-WF: Webster cycle and green split, no coordination.
    WebsterFormula,
    /// FS-GW: FS-WF timing plus distance/speed offsets from intersection 0.
    GreenWave,
}

/// A repeating four-phase timing of one intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedTimePlan {
    pub intersection: usize,
    pub cycle: u32,
    /// Greens of phases A, B, C, D.
    pub greens: [u32; 4],
    /// Start of phase A green relative to time 0, in [0, cycle).
    pub offset: u32,
}

impl FixedTimePlan {
    fn regular_half(&self, pair: PhasePair, timings: &FixedTimings) -> SignalPlan {
        let (g1, g2) = match pair {
            PhasePair::AB => (self.greens[0], self.greens[1]),
            PhasePair::CD => (self.greens[2], self.greens[3]),
        };
        SignalPlan {
            intersection: self.intersection,
            phase_pair: pair,
            green_1: g1,
            green_2: g2,
            total: g1 + g2 + 2 * timings.clearance(),
        }
    }

    /// Plan of the `k`-th half cycle since time 0.
    ///
    /// A non-zero offset is absorbed by a stretched first cycle whose length
    /// is `offset + m * cycle`, so every green stays at or above the minimum.
    pub fn half_cycle(&self, k: usize, timings: &FixedTimings) -> Result<SignalPlan> {
        let pair = if k % 2 == 0 { PhasePair::AB } else { PhasePair::CD };
        if self.offset == 0 || k >= 2 {
            return Ok(self.regular_half(pair, timings));
        }
        let min_half = timings.min_half_cycle();
        let mut stretched = self.offset;
        while stretched < 2 * min_half {
            stretched += self.cycle;
        }
        let regular_ab = self.regular_half(PhasePair::AB, timings).total;
        let first = ((stretched as u64 * regular_ab as u64 + self.cycle as u64 / 2) / self.cycle as u64)
            as u32;
        let first = first.clamp(min_half, stretched - min_half);
        let (total, g1, g2) = match pair {
            PhasePair::AB => (first, self.greens[0], self.greens[1]),
            PhasePair::CD => (stretched - first, self.greens[2], self.greens[3]),
        };
        let p1 = g1 as f64 / (g1 + g2) as f64;
        Ok(decode_plan(p1, total, timings)?.assigned(self.intersection, pair))
    }
}

/// Builds the FS-WF or FS-GW timing for every intersection.
///
/// `ratios[i]` holds the critical flow ratios of phases A..D at intersection
/// `i`. All intersections run the cycle of the critical (longest-cycle)
/// intersection; oversaturated intersections fall back to the maximum cycle.
pub fn fixed_time_plans(
    variant: FixedTimeVariant,
    ratios: &[[f64; 4]],
    link_lengths: &[f64],
    design_speed_kmh: f64,
    lost_time: f64,
    timings: &FixedTimings,
) -> Result<Vec<FixedTimePlan>> {
    let mut cycle = 0.0f64;
    for r in ratios {
        let c = match webster_cycle(r, lost_time) {
            Ok(c) => c,
            Err(Error::Oversaturated(_)) => WEBSTER_MAX_CYCLE,
            Err(e) => return Err(e),
        };
        cycle = cycle.max(c);
    }
    let feasible = 4 * (timings.min_green + timings.clearance());
    let cycle = (libm::floor(cycle + 0.5) as u32).max(feasible);

    let offsets = match variant {
        FixedTimeVariant::WebsterFormula => vec![0.0; ratios.len()],
        FixedTimeVariant::GreenWave => green_wave_offsets(link_lengths, design_speed_kmh)?,
    };
    ratios
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let g = green_split(cycle, r, timings)?;
            let offset = (libm::floor(offsets.get(i).copied().unwrap_or(0.0) + 0.5) as u32) % cycle;
            Ok(FixedTimePlan {
                intersection: i,
                cycle,
                greens: [g[0], g[1], g[2], g[3]],
                offset,
            })
        })
        .collect()
}
