use alloc::collections::VecDeque;
use serde::{Deserialize, Serialize};

use super::car_following::SignalAhead;
use super::geometry::{phase_serves, Movement, Side};
use crate::error::{Error, Result};
use crate::signal_control::{FixedTimings, Interval, IntervalKind, Phase, PhasePair, SignalPlan};

/// Completed signal interval, for traces and safety checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub intersection: usize,
    pub phase: Phase,
    pub kind: IntervalKind,
    pub start: u32,
    pub end: u32,
}

/// Runs half-cycle plans back to back at one intersection.
///
/// When a half cycle ends the controller immediately loads the pending plan,
/// or repeats the greens of the last plan for the next phase pair, and flags
/// itself as awaiting a decision. A plan installed while the new half cycle
/// has not started yet replaces the loaded one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalController {
    pub intersection: usize,
    timings: FixedTimings,
    schedule: VecDeque<Interval>,
    remaining: u32,
    interval_start: u32,
    pair: PhasePair,
    half_elapsed: u32,
    awaiting_plan: bool,
    last_plan: SignalPlan,
    pending_plan: Option<SignalPlan>,
}

impl SignalController {
    pub fn new(intersection: usize, default_plan: SignalPlan, timings: FixedTimings) -> Self {
        let plan = default_plan.assigned(intersection, PhasePair::AB);
        let mut c = SignalController {
            intersection,
            timings,
            schedule: VecDeque::new(),
            remaining: 0,
            interval_start: 0,
            pair: PhasePair::AB,
            half_elapsed: 0,
            awaiting_plan: true,
            last_plan: plan,
            pending_plan: None,
        };
        c.load(plan);
        c
    }

    fn load(&mut self, plan: SignalPlan) {
        self.schedule = plan.intervals(&self.timings).into_iter().filter(|i| i.duration > 0).collect();
        self.remaining = self.schedule.front().map_or(0, |i| i.duration);
        self.pair = plan.phase_pair;
        self.last_plan = plan;
        self.half_elapsed = 0;
    }

    fn current(&self) -> Interval {
        *self.schedule.front().expect("schedule is never empty between ticks")
    }

    pub fn current_phase(&self) -> Phase {
        self.current().phase
    }

    pub fn interval_kind(&self) -> IntervalKind {
        self.current().kind
    }

    /// Seconds left in the current interval.
    pub fn remaining(&self) -> u32 {
        self.remaining
    }

    pub fn phase_pair(&self) -> PhasePair {
        self.pair
    }

    pub fn pending_plan(&self) -> Option<&SignalPlan> {
        self.pending_plan.as_ref()
    }

    pub fn current_plan(&self) -> &SignalPlan {
        &self.last_plan
    }

    /// No second of the current half cycle has been displayed yet.
    pub fn at_boundary(&self) -> bool {
        self.half_elapsed == 0
    }

    pub fn awaiting_plan(&self) -> bool {
        self.awaiting_plan
    }

    /// Installs the plan for the current half cycle (at a boundary) or queues
    /// it for the next one.
    pub fn install_plan(&mut self, plan: SignalPlan) -> Result<()> {
        if !plan.is_valid(&self.timings) {
            return Err(Error::InfeasibleDuration {
                total: plan.total,
                required: self.timings.min_half_cycle(),
            });
        }
        if self.at_boundary() {
            let plan = plan.assigned(self.intersection, self.pair);
            self.load(plan);
            self.awaiting_plan = false;
        } else {
            self.pending_plan = Some(plan.assigned(self.intersection, self.pair.other()));
        }
        Ok(())
    }

    /// Phases showing green this second, indexed A..D.
    pub fn green_phases(&self) -> [bool; 4] {
        let mut g = [false; 4];
        let cur = self.current();
        if cur.kind == IntervalKind::Green {
            g[cur.phase.index()] = true;
        }
        g
    }

    pub fn is_green(&self, phase: Phase) -> bool {
        self.green_phases()[phase.index()]
    }

    /// Indication shown to `movement` arriving from `approach`.
    pub fn signal_for(&self, approach: Side, movement: Movement) -> SignalAhead {
        let cur = self.current();
        if !phase_serves(cur.phase, approach, movement) {
            return SignalAhead::Red;
        }
        match cur.kind {
            IntervalKind::Green => SignalAhead::Green,
            IntervalKind::Amber => SignalAhead::Amber,
            IntervalKind::AllRed => SignalAhead::Red,
        }
    }

    /// Ends one displayed second at time `now` (the start of that second).
    /// Returns the interval that finished, if any.
    pub(crate) fn tick(&mut self, now: u32) -> Option<IntervalRecord> {
        self.half_elapsed += 1;
        self.remaining -= 1;
        if self.remaining > 0 {
            return None;
        }
        let done = self.schedule.pop_front().expect("current interval");
        let record = IntervalRecord {
            intersection: self.intersection,
            phase: done.phase,
            kind: done.kind,
            start: self.interval_start,
            end: now + 1,
        };
        self.interval_start = now + 1;
        if let Some(next) = self.schedule.front() {
            self.remaining = next.duration;
        } else {
            let next_pair = self.pair.other();
            let plan = match self.pending_plan.take() {
                Some(p) => p,
                None => self.last_plan.assigned(self.intersection, next_pair),
            };
            self.load(plan.assigned(self.intersection, next_pair));
            self.awaiting_plan = true;
        }
        Some(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_control::decode_plan;

    fn controller() -> SignalController {
        let t = FixedTimings::default();
        SignalController::new(0, decode_plan(0.5, 50, &t).unwrap(), t)
    }

    #[test]
    fn starts_in_phase_a_green() {
        let c = controller();
        assert_eq!(c.current_phase(), Phase::A);
        assert_eq!(c.interval_kind(), IntervalKind::Green);
        assert!(c.at_boundary() && c.awaiting_plan());
    }

    #[test]
    fn half_cycle_rolls_over_to_cd() {
        let mut c = controller();
        let mut records = alloc::vec::Vec::new();
        for t in 0..50 {
            records.extend(c.tick(t));
        }
        assert_eq!(records.len(), 6);
        assert_eq!(records.last().unwrap().end, 50);
        assert_eq!(c.phase_pair(), PhasePair::CD);
        assert_eq!(c.current_phase(), Phase::C);
        assert!(c.at_boundary() && c.awaiting_plan());
    }

    #[test]
    fn install_at_boundary_replaces_schedule() {
        let t = FixedTimings::default();
        let mut c = controller();
        c.install_plan(decode_plan(0.36, 51, &t).unwrap()).unwrap();
        assert!(!c.awaiting_plan());
        assert_eq!(c.remaining(), 15);
    }

    #[test]
    fn install_mid_cycle_is_pending() {
        let t = FixedTimings::default();
        let mut c = controller();
        c.tick(0);
        c.install_plan(decode_plan(0.5, 40, &t).unwrap()).unwrap();
        assert_eq!(c.pending_plan().unwrap().phase_pair, PhasePair::CD);
        for now in 1..50 {
            c.tick(now);
        }
        assert_eq!(c.current_plan().total, 40);
        assert_eq!(c.current_phase(), Phase::C);
    }

    #[test]
    fn signal_for_movements() {
        let c = controller();
        assert_eq!(c.signal_for(Side::West, Movement::Through), SignalAhead::Green);
        assert_eq!(c.signal_for(Side::West, Movement::Right), SignalAhead::Red);
        assert_eq!(c.signal_for(Side::North, Movement::Through), SignalAhead::Red);
    }

    #[test]
    fn rejects_invalid_plan() {
        let mut c = controller();
        let bad = SignalPlan {
            intersection: 0,
            phase_pair: PhasePair::AB,
            green_1: 5,
            green_2: 25,
            total: 40,
        };
        assert!(c.install_plan(bad).is_err());
    }
}
