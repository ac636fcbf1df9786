//! Episodes, policies, training and multi-seed evaluation.

mod episode;
mod learner;

pub use episode::{
    execute_action, lockstep, run_decision_cycle, run_episode, BranchPolicy, DecisionCycle, EpisodeRun, FixedTimePolicy,
    GreedyPolicy, LockstepPolicy, Policy, RandomPolicy, run_episode_sampled,
};
pub use learner::{train, CurvePoint, DecisionRecord, EpisodeLog, TrainOutcome, Trainer};

use alloc::format;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qnet::BranchAction;
use crate::signal_control::{
    decode_plan, fixed_time_plans, ActionSpaceSpec, FixedTimePlan, FixedTimeVariant, FixedTimings, SignalPlan,
};
use crate::sim::{phase_flow_ratios, CorridorConfig, CorridorState, DemandConfig};

/// Everything needed to build a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    #[serde(default)]
    pub corridor: CorridorConfig,
    pub demand: DemandConfig,
    #[serde(default)]
    pub timings: FixedTimings,
    #[serde(default)]
    pub action_space: ActionSpaceSpec,
    /// Lost time per cycle used by the Webster baselines, s.
    #[serde(default = "default_lost_time")]
    pub webster_lost_time: f64,
}

fn default_lost_time() -> f64 {
    // four phase changes of amber plus all-red
    20.0
}

impl Environment {
    pub fn new(corridor: CorridorConfig, demand: DemandConfig) -> Self {
        Environment {
            corridor,
            demand,
            timings: FixedTimings::default(),
            action_space: ActionSpaceSpec::default(),
            webster_lost_time: default_lost_time(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.corridor.validate()?;
        self.demand.validate(&self.corridor)?;
        self.timings.validate()?;
        self.action_space.validate(&self.timings)?;
        if !(self.webster_lost_time >= 0.0) || !self.webster_lost_time.is_finite() {
            return Err(Error::config("webster_lost_time", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn simulation(&self, seed: u64) -> Result<CorridorState> {
        CorridorState::new(self.corridor.clone(), self.demand.clone(), self.timings, seed)
    }

    /// FS-WF or FS-GW timing derived from the mean demand.
    pub fn fixed_time_plans(&self, variant: FixedTimeVariant) -> Result<Vec<FixedTimePlan>> {
        let ratios = phase_flow_ratios(&self.corridor, &self.demand)?;
        fixed_time_plans(
            variant,
            &ratios,
            &self.corridor.link_lengths,
            self.corridor.design_speed,
            self.webster_lost_time,
            &self.timings,
        )
    }
}

/// How local branches map onto agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchMode {
    /// One split head per intersection plus the shared duration head.
    #[default]
    PerAgent,
    /// A single split head shared by every intersection (no branching over
    /// agents).
    SharedSplit,
}

/// Maps branch actions to per-intersection plans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDecoder {
    pub space: ActionSpaceSpec,
    pub timings: FixedTimings,
    pub agents: usize,
    pub mode: BranchMode,
}

impl ActionDecoder {
    pub fn new(env: &Environment, mode: BranchMode) -> Self {
        ActionDecoder {
            space: env.action_space,
            timings: env.timings,
            agents: env.corridor.num_intersections,
            mode,
        }
    }

    pub fn local_branches(&self) -> usize {
        match self.mode {
            BranchMode::PerAgent => self.agents,
            BranchMode::SharedSplit => 1,
        }
    }

    pub fn head_sizes(&self) -> Vec<usize> {
        self.space.branch_sizes(self.local_branches())
    }

    /// One plan per intersection, all with the same total.
    pub fn decode(&self, action: &BranchAction) -> Result<Vec<SignalPlan>> {
        let sizes = self.head_sizes();
        if action.local_indices.len() + 1 != sizes.len() {
            return Err(Error::Shape {
                expected: sizes.len(),
                found: action.local_indices.len() + 1,
            });
        }
        for (j, a) in action.heads().enumerate() {
            if a >= sizes[j] {
                return Err(Error::config(
                    format!("action.branch[{j}]"),
                    format!("index {a} outside [0, {})", sizes[j]),
                ));
            }
        }
        let total = self.space.global_value(action.global_index);
        (0..self.agents)
            .map(|i| {
                let k = match self.mode {
                    BranchMode::PerAgent => action.local_indices[i],
                    BranchMode::SharedSplit => action.local_indices[0],
                };
                let mut plan = decode_plan(self.space.local_value(k), total, &self.timings)?;
                plan.intersection = i;
                Ok(plan)
            })
            .collect()
    }

    /// Uniform over every head.
    pub fn random<R: Rng>(&self, rng: &mut R) -> BranchAction {
        let heads: Vec<usize> = self.head_sizes().iter().map(|&n| rng.random_range(0..n)).collect();
        BranchAction::from_heads(&heads)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: u32,
    /// Leading episodes with uniformly random actions.
    pub warmup_episodes: u32,
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Gradient steps between hard target copies; 1 gives the single-network
    /// ablation.
    pub sync_interval: u64,
    pub hidden_width: usize,
    /// Multiplies per-cycle rewards before they enter the replay buffer.
    pub reward_scale: f64,
    /// Seconds per discount period. When unset, gamma applies once per
    /// decision whatever the half-cycle length.
    pub discount_period: Option<u32>,
    /// Exploration noise as a fraction of the running Q spread per branch.
    pub exploration_sigma: f64,
    /// Minibatch updates per recorded transition.
    pub updates_per_decision: u32,
    pub branch_mode: BranchMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 500,
            warmup_episodes: 5,
            gamma: 0.95,
            lr: 1e-4,
            batch_size: 128,
            buffer_capacity: 100_000,
            sync_interval: 200,
            hidden_width: 256,
            reward_scale: 1e-3,
            discount_period: None,
            exploration_sigma: 0.2,
            updates_per_decision: 1,
            branch_mode: BranchMode::PerAgent,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |ok: bool, field: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!("train.{field}"), "must be > 0"))
            }
        };
        positive(self.episodes > 0, "episodes")?;
        positive(self.batch_size > 0, "batch_size")?;
        positive(self.buffer_capacity > 0, "buffer_capacity")?;
        positive(self.sync_interval > 0, "sync_interval")?;
        positive(self.hidden_width > 0, "hidden_width")?;
        positive(self.updates_per_decision > 0, "updates_per_decision")?;
        positive(self.lr > 0.0 && self.lr.is_finite(), "lr")?;
        positive(self.reward_scale > 0.0 && self.reward_scale.is_finite(), "reward_scale")?;
        if self.discount_period == Some(0) {
            return Err(Error::config("train.discount_period", "must be > 0"));
        }
        if self.warmup_episodes > self.episodes {
            return Err(Error::config("train.warmup_episodes", "must be <= episodes"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("train.gamma", "must be in [0, 1]"));
        }
        if !(self.exploration_sigma >= 0.0) || !self.exploration_sigma.is_finite() {
            return Err(Error::config("train.exploration_sigma", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub seeds: usize,
    /// Simulation seed of the first evaluation run; run k uses
    /// `first_seed + k`.
    pub first_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seeds: 20,
            first_seed: 1_000_000,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::config("eval.seeds", "must be >= 1"));
        }
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|k| self.first_seed + k).collect()
    }
}

/// Simulation seed of training episode `episode`.
pub fn episode_seed(seed: u64, episode: u32) -> u64 {
    splitmix64(splitmix64(seed) ^ u64::from(episode))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env() -> Environment {
        Environment::new(CorridorConfig::default(), DemandConfig::empty(100))
    }

    #[test]
    fn decoder_shares_the_duration() {
        let d = ActionDecoder::new(&env(), BranchMode::PerAgent);
        assert_eq!(d.head_sizes(), [49, 49, 49, 41]);
        // C = 51 is index 21; p1 = 0.36 is index 17
        let plans = d.decode(&BranchAction::new(alloc::vec![17, 0, 48], 21)).unwrap();
        assert_eq!((plans[0].green_1, plans[0].green_2, plans[0].total), (15, 26, 51));
        assert_eq!((plans[1].green_1, plans[1].green_2), (10, 31));
        assert_eq!((plans[2].green_1, plans[2].green_2), (31, 10));
        assert!(plans.iter().enumerate().all(|(i, p)| p.intersection == i && p.total == 51));
    }

    #[test]
    fn shared_split_broadcasts() {
        let d = ActionDecoder::new(&env(), BranchMode::SharedSplit);
        assert_eq!(d.head_sizes(), [49, 41]);
        let plans = d.decode(&BranchAction::new(alloc::vec![24], 0)).unwrap();
        assert_eq!(plans.len(), 3);
        assert!(plans.windows(2).all(|w| w[0].green_1 == w[1].green_1));
    }

    #[test]
    fn decoder_rejects_bad_actions() {
        let d = ActionDecoder::new(&env(), BranchMode::PerAgent);
        assert!(d.decode(&BranchAction::new(alloc::vec![0, 0], 0)).is_err());
        assert!(d.decode(&BranchAction::new(alloc::vec![0, 49, 0], 0)).is_err());
        assert!(d.decode(&BranchAction::new(alloc::vec![0, 0, 0], 41)).is_err());
    }

    #[test]
    fn random_actions_stay_in_range() {
        let d = ActionDecoder::new(&env(), BranchMode::PerAgent);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            assert!(d.decode(&d.random(&mut rng)).is_ok());
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            lr: -1.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "train.lr"));
        let warm_only = TrainConfig {
            episodes: 5,
            warmup_episodes: 5,
            ..Default::default()
        };
        assert!(warm_only.validate().is_ok());
        let gamma = TrainConfig {
            gamma: 1.5,
            ..Default::default()
        };
        assert!(gamma.validate().is_err());
    }

    #[test]
    fn episode_seeds_differ() {
        let s: Vec<u64> = (0..50).map(|e| episode_seed(7, e)).collect();
        let mut d = s.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), s.len());
        assert_eq!(episode_seed(7, 3), episode_seed(7, 3));
    }
}
