use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ActionDecoder, Environment};
use crate::encoder::{encode_state, StateVector};
use crate::error::{Error, Result};
use crate::metrics::{DelaySnapshot, MetricsAccumulator, MetricsReport};
use crate::qnet::{greedy, BranchAction, QNetwork};
use crate::signal_control::{FixedTimePlan, FixedTimings, SignalPlan};
use crate::sim::{CorridorState, IntervalRecord, TripRecord};

/// Chooses plans for intersections that have just started a half cycle.
pub trait Policy {
    /// `due` lists the intersections waiting for a plan; returns one plan
    /// per entry, in order.
    fn plans(&mut self, sim: &CorridorState, due: &[usize]) -> Result<Vec<SignalPlan>>;
}

/// Picks one branch action for all agents from an observation.
pub trait BranchPolicy {
    fn act(&mut self, state: &StateVector) -> Result<BranchAction>;
}

/// Noise-free argmax of every head.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    pub net: QNetwork,
}

impl BranchPolicy for GreedyPolicy {
    fn act(&mut self, state: &StateVector) -> Result<BranchAction> {
        let q = self.net.forward(&state.normalized())?;
        Ok(BranchAction::from_heads(&q.iter().map(|h| greedy(h)).collect::<Vec<_>>()))
    }
}

/// Uniformly random branch actions.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    decoder: ActionDecoder,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(decoder: ActionDecoder, seed: u64) -> Self {
        RandomPolicy {
            decoder,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl BranchPolicy for RandomPolicy {
    fn act(&mut self, _state: &StateVector) -> Result<BranchAction> {
        Ok(self.decoder.random(&mut self.rng))
    }
}

/// Runs a [`BranchPolicy`] in lockstep rounds over all intersections.
pub struct LockstepPolicy<P> {
    pub inner: P,
    pub decoder: ActionDecoder,
}

impl<P: BranchPolicy> Policy for LockstepPolicy<P> {
    fn plans(&mut self, sim: &CorridorState, due: &[usize]) -> Result<Vec<SignalPlan>> {
        if let Some(i) = (0..self.decoder.agents).find(|i| !due.contains(i)) {
            return Err(Error::NotAtBoundary { intersection: i });
        }
        let action = self.inner.act(&encode_state(sim))?;
        let plans = self.decoder.decode(&action)?;
        Ok(due.iter().map(|&i| plans[i]).collect())
    }
}

/// FS-WF / FS-GW: replays each intersection's fixed timing.
#[derive(Debug, Clone)]
pub struct FixedTimePolicy {
    plans: Vec<FixedTimePlan>,
    timings: FixedTimings,
    halves: Vec<usize>,
}

impl FixedTimePolicy {
    pub fn new(plans: Vec<FixedTimePlan>, timings: FixedTimings) -> Self {
        let halves = vec![0; plans.len()];
        FixedTimePolicy { plans, timings, halves }
    }
}

impl Policy for FixedTimePolicy {
    fn plans(&mut self, _sim: &CorridorState, due: &[usize]) -> Result<Vec<SignalPlan>> {
        due.iter()
            .map(|&i| {
                let plan = self.plans[i].half_cycle(self.halves[i], &self.timings)?;
                self.halves[i] += 1;
                Ok(plan)
            })
            .collect()
    }
}

fn due(sim: &CorridorState) -> Vec<usize> {
    sim.controllers()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.awaiting_plan() && c.at_boundary())
        .map(|(i, _)| i)
        .collect()
}

/// Outcome of one lockstep half cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionCycle {
    /// Observation the action was chosen from.
    pub state: StateVector,
    pub action: BranchAction,
    pub plans: Vec<SignalPlan>,
    /// Σ_t of the per-second reward over the cycle (unit weights).
    pub reward: f64,
    pub snapshots: Vec<DelaySnapshot>,
    /// Clock when the next decision is due (or the horizon was reached).
    pub next_decision: u32,
}

/// Encodes the state, asks `policy` for an action and runs the resulting
/// half cycle at every intersection.
pub fn run_decision_cycle(
    sim: &mut CorridorState,
    policy: &mut dyn BranchPolicy,
    decoder: &ActionDecoder,
) -> Result<DecisionCycle> {
    let state = encode_state(sim);
    let action = policy.act(&state)?;
    execute_action(sim, state, action, decoder)
}

/// Runs the half cycle given by `action`; `state` is recorded as the
/// observation it was chosen from.
pub fn execute_action(
    sim: &mut CorridorState,
    state: StateVector,
    action: BranchAction,
    decoder: &ActionDecoder,
) -> Result<DecisionCycle> {
    let waiting = due(sim);
    if let Some(i) = (0..decoder.agents).find(|i| !waiting.contains(i)) {
        return Err(Error::NotAtBoundary { intersection: i });
    }
    let plans = decoder.decode(&action)?;
    for (i, plan) in plans.iter().enumerate() {
        sim.install_plan(i, *plan)?;
    }
    let mut snapshots = Vec::with_capacity(plans[0].total as usize);
    let mut reward = 0.0;
    loop {
        let snap = sim.step();
        reward -= snap.delayed_persons() as f64;
        snapshots.push(snap);
        if sim.finished() || due(sim).len() == decoder.agents {
            break;
        }
    }
    Ok(DecisionCycle {
        state,
        action,
        plans,
        reward,
        snapshots,
        next_decision: sim.clock(),
    })
}

/// Everything recorded from one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRun {
    pub seed: u64,
    pub report: MetricsReport,
    pub cumulative_reward: f64,
    pub decisions: usize,
    pub trips: Vec<TripRecord>,
    pub signal_log: Vec<IntervalRecord>,
    /// Delayed-vehicle seconds per encoded cell:
    /// `[intersection][4 * approach + lane][cell]`.
    pub delay_grid: Vec<Vec<Vec<u64>>>,
    /// Instantaneous delayed-vehicle grids `(t, grid)` taken every
    /// `grid_every` seconds; empty unless sampling was requested.
    pub grid_samples: Vec<(u32, Vec<Vec<Vec<u32>>>)>,
}

/// Simulates the full horizon under `policy`.
pub fn run_episode(env: &Environment, policy: &mut dyn Policy, seed: u64) -> Result<EpisodeRun> {
    run_episode_sampled(env, policy, seed, None)
}

/// [`run_episode`] that also snapshots the delay grid every `grid_every`
/// seconds of simulated time.
pub fn run_episode_sampled(
    env: &Environment,
    policy: &mut dyn Policy,
    seed: u64,
    grid_every: Option<u32>,
) -> Result<EpisodeRun> {
    let mut sim = env.simulation(seed)?;
    let mut acc = MetricsAccumulator::default();
    let mut reward = 0.0;
    let mut decisions = 0;
    let cells = env.corridor.cells_per_lane;
    let mut grid = vec![vec![vec![0u64; cells]; 16]; env.corridor.num_intersections];
    let mut samples = Vec::new();
    while !sim.finished() {
        let waiting = due(&sim);
        if !waiting.is_empty() {
            let plans = policy.plans(&sim, &waiting)?;
            for (&i, plan) in waiting.iter().zip(plans) {
                sim.install_plan(i, plan)?;
            }
            decisions += 1;
        }
        let snap = sim.step();
        reward -= snap.delayed_persons() as f64;
        acc.push(&snap);
        let now = sim.delay_grid();
        if grid_every.is_some_and(|k| k > 0 && snap.t % k == 0) {
            samples.push((snap.t, now.clone()));
        }
        for (g, s) in grid.iter_mut().zip(now) {
            for (row, srow) in g.iter_mut().zip(s) {
                for (c, n) in row.iter_mut().zip(srow) {
                    *c += u64::from(n);
                }
            }
        }
    }
    // zero-demand runs still report (with PCD = 0)
    let report = acc.finish(sim.trips(), sim.counters().demand_persons.max(1))?;
    Ok(EpisodeRun {
        seed,
        report,
        cumulative_reward: reward,
        decisions,
        trips: sim.trips().to_vec(),
        signal_log: sim.signal_log().to_vec(),
        delay_grid: grid,
        grid_samples: samples,
    })
}

/// Boxes a lockstep branch policy.
pub fn lockstep<P: BranchPolicy + 'static>(inner: P, decoder: ActionDecoder) -> Box<dyn Policy> {
    Box::new(LockstepPolicy { inner, decoder })
}

#[cfg(test)]
mod tests {
    use super::super::BranchMode;
    use super::*;
    use crate::qnet::NetShape;
    use crate::signal_control::{FixedTimeVariant, IntervalKind};
    use crate::sim::{CorridorConfig, DemandConfig, PedestrianFlow, VehicleFlow};

    fn env(horizon: u32) -> Environment {
        let mut d = DemandConfig::empty(horizon);
        d.vehicle_flows = vec![
            VehicleFlow {
                origin: 0,
                destination: 1,
                vehicles_per_hour: 500.0,
                bus_share: 0.1,
            },
            VehicleFlow {
                origin: 3,
                destination: 2,
                vehicles_per_hour: 200.0,
                bus_share: 0.0,
            },
        ];
        d.pedestrian_flows = vec![PedestrianFlow {
            intersection: 2,
            zone: 1,
            peds_per_hour: 200.0,
        }];
        Environment::new(CorridorConfig::default(), d)
    }

    struct Fixed(BranchAction);

    impl BranchPolicy for Fixed {
        fn act(&mut self, _state: &StateVector) -> Result<BranchAction> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn fig6_cycle_lasts_51_seconds() {
        let e = env(600);
        let d = ActionDecoder::new(&e, BranchMode::PerAgent);
        let mut sim = e.simulation(1).unwrap();
        let mut p = Fixed(BranchAction::new(vec![17, 17, 17], 21));
        let c = run_decision_cycle(&mut sim, &mut p, &d).unwrap();
        assert_eq!((c.plans[0].green_1, c.plans[0].green_2, c.plans[0].total), (15, 26, 51));
        assert_eq!(c.next_decision, 51);
        assert_eq!(c.snapshots.len(), 51);
        let r: f64 = c.snapshots.iter().map(|s| -(s.delayed_persons() as f64)).sum();
        assert_eq!(c.reward, r);
        // the next half cycle serves C and D
        let c2 = run_decision_cycle(&mut sim, &mut p, &d).unwrap();
        assert_eq!(c2.next_decision, 102);
        let log = sim.signal_log();
        let greens: Vec<_> = log.iter().filter(|r| r.intersection == 0 && r.kind == IntervalKind::Green).collect();
        assert_eq!(greens.iter().map(|r| r.end - r.start).collect::<Vec<_>>(), [15, 26, 15, 26]);
    }

    #[test]
    fn zero_demand_cycle_has_zero_reward() {
        let e = Environment::new(CorridorConfig::default(), DemandConfig::empty(300));
        let d = ActionDecoder::new(&e, BranchMode::PerAgent);
        let mut sim = e.simulation(0).unwrap();
        let mut p = RandomPolicy::new(d.clone(), 3);
        while !sim.finished() {
            assert_eq!(run_decision_cycle(&mut sim, &mut p, &d).unwrap().reward, 0.0);
        }
    }

    #[test]
    fn decision_requires_boundary() {
        let e = env(300);
        let d = ActionDecoder::new(&e, BranchMode::PerAgent);
        let mut sim = e.simulation(0).unwrap();
        sim.step();
        let mut p = RandomPolicy::new(d.clone(), 3);
        assert!(matches!(run_decision_cycle(&mut sim, &mut p, &d), Err(Error::NotAtBoundary { .. })));
    }

    #[test]
    fn episode_reward_is_minus_aid() {
        let e = env(900);
        let d = ActionDecoder::new(&e, BranchMode::PerAgent);
        let mut policy = lockstep(RandomPolicy::new(d.clone(), 9), d);
        let run = run_episode(&e, policy.as_mut(), 5).unwrap();
        assert_eq!(-run.cumulative_reward, run.report.aid as f64);
        assert!(run.report.aid > 0);
        assert_eq!(run.report.t, 900);
    }

    #[test]
    fn per_second_samples_sum_to_the_grid() {
        let e = env(300);
        let d = ActionDecoder::new(&e, BranchMode::PerAgent);
        let mut policy = lockstep(RandomPolicy::new(d.clone(), 1), d.clone());
        let run = run_episode_sampled(&e, policy.as_mut(), 3, Some(1)).unwrap();
        assert_eq!(run.grid_samples.len(), 300);
        let mut sum = vec![vec![vec![0u64; e.corridor.cells_per_lane]; 16]; 3];
        for (_, g) in &run.grid_samples {
            for (i, rows) in g.iter().enumerate() {
                for (r, cells) in rows.iter().enumerate() {
                    for (c, n) in cells.iter().enumerate() {
                        sum[i][r][c] += u64::from(*n);
                    }
                }
            }
        }
        assert_eq!(sum, run.delay_grid);
        let mut policy = lockstep(RandomPolicy::new(d.clone(), 1), d);
        let sparse = run_episode_sampled(&e, policy.as_mut(), 3, Some(60)).unwrap();
        assert_eq!(sparse.grid_samples.len(), 5);
        assert!(sparse.grid_samples.iter().all(|(t, _)| t % 60 == 0));
        assert_eq!(sparse.delay_grid, run.delay_grid);
    }

    #[test]
    fn lockstep_and_cycle_runner_agree() {
        let e = env(600);
        let d = ActionDecoder::new(&e, BranchMode::PerAgent);
        let mut sim = e.simulation(4).unwrap();
        let mut p = RandomPolicy::new(d.clone(), 2);
        let mut total = 0.0;
        while !sim.finished() {
            total += run_decision_cycle(&mut sim, &mut p, &d).unwrap().reward;
        }
        let mut policy = lockstep(RandomPolicy::new(d.clone(), 2), d);
        let run = run_episode(&e, policy.as_mut(), 4).unwrap();
        assert_eq!(total, run.cumulative_reward);
        assert_eq!(sim.trips(), &run.trips[..]);
    }

    #[test]
    fn fixed_time_runs_its_cycle() {
        let e = env(600);
        let plans = e.fixed_time_plans(FixedTimeVariant::WebsterFormula).unwrap();
        let cycle = plans[0].cycle;
        let mut p = FixedTimePolicy::new(plans.clone(), e.timings);
        let run = run_episode(&e, &mut p, 1).unwrap();
        let a_starts: Vec<u32> = run
            .signal_log
            .iter()
            .filter(|r| r.intersection == 1 && r.kind == IntervalKind::Green && r.phase == crate::signal_control::Phase::A)
            .map(|r| r.start)
            .collect();
        assert!(a_starts.len() >= 2);
        assert!(a_starts.windows(2).all(|w| w[1] - w[0] == cycle));
        let greens: u32 = plans[1].greens.iter().sum();
        assert_eq!(greens + 4 * e.timings.clearance(), cycle);
    }

    #[test]
    fn green_wave_offsets_shift_phase_a() {
        let e = env(900);
        let plans = e.fixed_time_plans(FixedTimeVariant::GreenWave).unwrap();
        let mut p = FixedTimePolicy::new(plans.clone(), e.timings);
        let run = run_episode(&e, &mut p, 1).unwrap();
        let cycle = plans[0].cycle;
        for (i, plan) in plans.iter().enumerate() {
            let later: Vec<u32> = run
                .signal_log
                .iter()
                .filter(|r| r.intersection == i && r.kind == IntervalKind::Green && r.phase == crate::signal_control::Phase::A)
                .map(|r| r.start)
                .filter(|&s| s > 0)
                .collect();
            assert!(later.iter().all(|s| s % cycle == plan.offset), "intersection {i}: {later:?}");
        }
    }

    #[test]
    fn greedy_policy_is_deterministic() {
        let e = env(400);
        let d = ActionDecoder::new(&e, BranchMode::PerAgent);
        let input = crate::encoder::StateLayout::new(3, e.corridor.cells_per_lane).len();
        let net = QNetwork::new(NetShape::new(input, 8, d.head_sizes()).unwrap(), 1);
        let run = |seed| {
            let mut policy = lockstep(GreedyPolicy { net: net.clone() }, d.clone());
            run_episode(&e, policy.as_mut(), seed).unwrap()
        };
        assert_eq!(run(3), run(3));
    }
}
