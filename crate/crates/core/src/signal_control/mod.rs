//! Signal phases, half-cycle plans and the fixed-time baselines.
//!
//! A controller always runs the four-stage sequence A → B → C → D. Stages A
//! and C carry the through and left movements of the arterial and the cross
//! street respectively, B and D the protected (lagging) right turns. The
//! learner plans one *half cycle* at a time: either the pair (A, B) or the
//! pair (C, D), each green followed by amber and all-red clearance.

mod baseline;

pub use baseline::{
    critical_flow_ratio, fixed_time_plans, green_split, green_wave_offsets, webster_cycle,
    webster_cycle_unclamped, FixedTimePlan, FixedTimeVariant, SATURATION_FLOW_PER_LANE,
    WEBSTER_MAX_CYCLE, WEBSTER_MIN_CYCLE,
};

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the four exclusive signal stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
    D,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::A, Phase::B, Phase::C, Phase::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn next(self) -> Phase {
        Phase::ALL[(self.index() + 1) % 4]
    }

    pub fn label(self) -> &'static str {
        match self {
            Phase::A => "A",
            Phase::B => "B",
            Phase::C => "C",
            Phase::D => "D",
        }
    }
}

/// The two phases planned together by one decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhasePair {
    AB,
    CD,
}

impl PhasePair {
    pub fn phases(self) -> (Phase, Phase) {
        match self {
            PhasePair::AB => (Phase::A, Phase::B),
            PhasePair::CD => (Phase::C, Phase::D),
        }
    }

    pub fn other(self) -> PhasePair {
        match self {
            PhasePair::AB => PhasePair::CD,
            PhasePair::CD => PhasePair::AB,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntervalKind {
    Green,
    Amber,
    AllRed,
}

impl IntervalKind {
    pub fn label(self) -> &'static str {
        match self {
            IntervalKind::Green => "green",
            IntervalKind::Amber => "amber",
            IntervalKind::AllRed => "all_red",
        }
    }
}

/// A timed signal interval of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub phase: Phase,
    pub kind: IntervalKind,
    pub duration: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedTimings {
    pub amber: u32,
    pub all_red: u32,
    pub min_green: u32,
}

impl Default for FixedTimings {
    fn default() -> Self {
        FixedTimings {
            amber: 3,
            all_red: 2,
            min_green: 10,
        }
    }
}

impl FixedTimings {
    pub fn validate(&self) -> Result<()> {
        if self.amber == 0 {
            return Err(Error::config("timings.amber", "must be > 0"));
        }
        if self.all_red == 0 {
            return Err(Error::config("timings.all_red", "must be > 0"));
        }
        if self.min_green == 0 {
            return Err(Error::config("timings.min_green", "must be > 0"));
        }
        if self.min_green < self.amber {
            return Err(Error::config("timings.min_green", "must be >= amber"));
        }
        Ok(())
    }

    /// Amber plus all-red following every green.
    pub fn clearance(&self) -> u32 {
        self.amber + self.all_red
    }

    /// Shortest half cycle able to hold two minimum greens.
    pub fn min_half_cycle(&self) -> u32 {
        2 * (self.min_green + self.clearance())
    }
}

/// Decoded timing for the next half cycle of one intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalPlan {
    pub intersection: usize,
    pub phase_pair: PhasePair,
    pub green_1: u32,
    pub green_2: u32,
    pub total: u32,
}

impl SignalPlan {
    /// Re-targets the plan at a given intersection and phase pair.
    pub fn assigned(mut self, intersection: usize, pair: PhasePair) -> Self {
        self.intersection = intersection;
        self.phase_pair = pair;
        self
    }

    pub fn intervals(&self, timings: &FixedTimings) -> [Interval; 6] {
        let (first, second) = self.phase_pair.phases();
        let iv = |phase, kind, duration| Interval {
            phase,
            kind,
            duration,
        };
        [
            iv(first, IntervalKind::Green, self.green_1),
            iv(first, IntervalKind::Amber, timings.amber),
            iv(first, IntervalKind::AllRed, timings.all_red),
            iv(second, IntervalKind::Green, self.green_2),
            iv(second, IntervalKind::Amber, timings.amber),
            iv(second, IntervalKind::AllRed, timings.all_red),
        ]
    }

    /// Checks the budget identity and the minimum greens.
    pub fn is_valid(&self, timings: &FixedTimings) -> bool {
        self.green_1 >= timings.min_green
            && self.green_2 >= timings.min_green
            && self.green_1 + self.green_2 + 2 * timings.clearance() == self.total
    }
}

fn round_half_up(x: f64) -> u32 {
    // grid fractions times integer budgets land on exact halves; the nudge
    // keeps 0.5 from rounding down through representation error
    let r = libm::floor(x + 0.5 + 1e-9);
    if r <= 0.0 {
        0
    } else {
        r as u32
    }
}

/// Splits a half cycle of `total` seconds between its two phases, giving the
/// first phase the fraction `p1` of the green budget.
pub fn decode_plan(p1: f64, total: u32, timings: &FixedTimings) -> Result<SignalPlan> {
    if !(0.0..=1.0).contains(&p1) {
        return Err(Error::Domain(alloc::format!("split fraction {p1} outside [0, 1]")));
    }
    let required = timings.min_half_cycle();
    if total < required {
        return Err(Error::InfeasibleDuration { total, required });
    }
    let budget = total - 2 * timings.clearance();
    let mut green_1 = round_half_up(p1 * budget as f64).max(timings.min_green);
    let mut green_2 = budget.saturating_sub(green_1);
    if green_2 < timings.min_green {
        green_2 = timings.min_green;
        green_1 = budget - timings.min_green;
    }
    Ok(SignalPlan {
        intersection: 0,
        phase_pair: PhasePair::AB,
        green_1,
        green_2,
        total,
    })
}

/// Discrete action grid: 49 split fractions per agent and one shared
/// half-cycle duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionSpaceSpec {
    pub c_min: u32,
    pub c_max: u32,
}

impl Default for ActionSpaceSpec {
    fn default() -> Self {
        ActionSpaceSpec { c_min: 30, c_max: 70 }
    }
}

impl ActionSpaceSpec {
    pub const LOCAL_CARDINALITY: usize = 49;
    const LOCAL_STEPS: u32 = 50;

    pub fn validate(&self, timings: &FixedTimings) -> Result<()> {
        if self.c_max < self.c_min {
            return Err(Error::config("action_space.c_max", "must be >= c_min"));
        }
        if self.c_min < timings.min_half_cycle() {
            return Err(Error::config(
                "action_space.c_min",
                alloc::format!(
                    "must be >= {} to fit two minimum greens and clearances",
                    timings.min_half_cycle()
                ),
            ));
        }
        Ok(())
    }

    pub fn local_cardinality(&self) -> usize {
        Self::LOCAL_CARDINALITY
    }

    pub fn global_cardinality(&self) -> usize {
        (self.c_max - self.c_min + 1) as usize
    }

    /// Split fraction p1 = 0.02 (index + 1).
    pub fn local_value(&self, index: usize) -> f64 {
        (index as u32 + 1) as f64 / Self::LOCAL_STEPS as f64
    }

    pub fn local_values(&self) -> Vec<f64> {
        (0..Self::LOCAL_CARDINALITY).map(|k| self.local_value(k)).collect()
    }

    pub fn global_value(&self, index: usize) -> u32 {
        self.c_min + index as u32
    }

    pub fn global_values(&self) -> Vec<u32> {
        (self.c_min..=self.c_max).collect()
    }

    /// Index of the duration `total`, if it lies on the grid.
    pub fn global_index(&self, total: u32) -> Option<usize> {
        (self.c_min..=self.c_max)
            .contains(&total)
            .then(|| (total - self.c_min) as usize)
    }

    /// Head sizes for `agents` local branches plus the global branch.
    pub fn branch_sizes(&self, agents: usize) -> Vec<usize> {
        let mut sizes = alloc::vec![self.local_cardinality(); agents];
        sizes.push(self.global_cardinality());
        sizes
    }
}
