use alloc::vec;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::episode::execute_action;
use super::{episode_seed, ActionDecoder, Environment, TrainConfig};
use crate::encoder::{encode_state, SparseInput, StateLayout};
use crate::error::Result;
use crate::qnet::{backward, select_action, sync_target, Adam, BranchAction, NetShape, QNetwork, ReplayBuffer, Transition};
use crate::signal_control::SignalPlan;

/// Weight of a new sample in the running Q spread.
const SPREAD_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t: u32,
    /// FNV-1a over the normalized observation.
    pub state_hash: u64,
    pub action: BranchAction,
    /// Unscaled cycle reward.
    pub reward: f64,
    pub plans: Vec<SignalPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: u32,
    pub sim_seed: u64,
    pub warmup: bool,
    pub cumulative_reward: f64,
    pub decisions: Vec<DecisionRecord>,
    /// Mean loss over the gradient steps of the episode.
    pub loss_mean: Option<f64>,
    /// Noise multiplier in effect (1 at the start of learning, 0 at the end).
    pub noise_decay: f64,
}

/// One row of the training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: u32,
    pub cumulative_reward: f64,
    pub loss_mean: Option<f64>,
    pub decisions: usize,
    pub gradient_steps: u64,
}

/// Full learner state; serializing it allows an exact resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    env: Environment,
    config: TrainConfig,
    decoder: ActionDecoder,
    primary: QNetwork,
    target: QNetwork,
    adam: Adam,
    replay: ReplayBuffer,
    rng: ChaCha8Rng,
    episode: u32,
    gradient_steps: u64,
    q_spread: Vec<Option<f64>>,
    best: Option<(f64, QNetwork)>,
    curve: Vec<CurvePoint>,
}

pub struct TrainOutcome {
    pub final_net: QNetwork,
    /// Highest-reward learning episode's network, if any learning episode ran.
    pub best: Option<(f64, QNetwork)>,
    pub curve: Vec<CurvePoint>,
}

impl TrainOutcome {
    /// Network to deploy: the best checkpoint, else the final one.
    pub fn policy(&self) -> &QNetwork {
        self.best.as_ref().map_or(&self.final_net, |(_, n)| n)
    }
}

fn hash_input(x: &SparseInput) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for (k, v) in x.iter() {
        eat(&(k as u64).to_le_bytes());
        eat(&v.to_bits().to_le_bytes());
    }
    h
}

fn spread(q: &[f64]) -> f64 {
    let n = q.len() as f64;
    let mean = q.iter().sum::<f64>() / n;
    libm::sqrt(q.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n)
}

impl Trainer {
    pub fn new(env: Environment, config: TrainConfig) -> Result<Self> {
        env.validate()?;
        config.validate()?;
        let decoder = ActionDecoder::new(&env, config.branch_mode);
        let input = StateLayout::new(env.corridor.num_intersections, env.corridor.cells_per_lane).len();
        let shape = NetShape::new(input, config.hidden_width, decoder.head_sizes())?;
        let primary = QNetwork::new(shape.clone(), config.seed);
        let heads = shape.heads.len();
        Ok(Trainer {
            target: primary.clone(),
            adam: Adam::new(shape.num_params(), config.lr),
            replay: ReplayBuffer::new(config.buffer_capacity),
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed),
            episode: 0,
            gradient_steps: 0,
            q_spread: vec![None; heads],
            best: None,
            curve: Vec::new(),
            primary,
            decoder,
            config,
            env,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn decoder(&self) -> &ActionDecoder {
        &self.decoder
    }

    pub fn primary(&self) -> &QNetwork {
        &self.primary
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn best(&self) -> Option<&(f64, QNetwork)> {
        self.best.as_ref()
    }

    pub fn curve(&self) -> &[CurvePoint] {
        &self.curve
    }

    pub fn episodes_done(&self) -> u32 {
        self.episode
    }

    pub fn gradient_steps(&self) -> u64 {
        self.gradient_steps
    }

    pub fn is_done(&self) -> bool {
        self.episode >= self.config.episodes
    }

    fn noise_decay(&self) -> f64 {
        let c = &self.config;
        let learning = (c.episodes - c.warmup_episodes).saturating_sub(1).max(1) as f64;
        let into = self.episode.saturating_sub(c.warmup_episodes) as f64;
        (1.0 - into / learning).max(0.0)
    }

    fn choose(&mut self, x: &SparseInput, warmup: bool, decay: f64) -> Result<BranchAction> {
        if warmup {
            return Ok(self.decoder.random(&mut self.rng));
        }
        let q = self.primary.forward(x)?;
        let mut noise = Vec::with_capacity(q.len());
        for (j, head) in q.iter().enumerate() {
            let s = spread(head);
            let ema = match self.q_spread[j] {
                Some(prev) => prev + SPREAD_RATE * (s - prev),
                None => s,
            };
            self.q_spread[j] = Some(ema);
            noise.push(self.config.exploration_sigma * ema * decay);
        }
        Ok(select_action(&q, &noise, &mut self.rng))
    }

    /// One minibatch update once the buffer holds a full batch.
    fn learn(&mut self) -> Result<Option<f64>> {
        if self.replay.len() < self.config.batch_size {
            return Ok(None);
        }
        let batch = self.replay.sample(self.config.batch_size, &mut self.rng);
        let (loss, grads) = backward(&batch, &self.primary, &self.target, self.config.gamma)?;
        self.adam.step(self.primary.params_mut(), &grads)?;
        self.gradient_steps += 1;
        sync_target(&self.primary, &mut self.target, self.gradient_steps, self.config.sync_interval);
        Ok(Some(loss))
    }

    /// Runs the next training episode. On error the trainer may be partway
    /// through the episode and should be discarded.
    pub fn run_episode(&mut self) -> Result<EpisodeLog> {
        let episode = self.episode;
        let warmup = episode < self.config.warmup_episodes;
        let decay = if warmup { 1.0 } else { self.noise_decay() };
        let sim_seed = episode_seed(self.config.seed, episode);
        let mut sim = self.env.simulation(sim_seed)?;
        let decoder = self.decoder.clone();
        let scale = self.config.reward_scale;

        let mut decisions = Vec::new();
        let mut losses = (0.0, 0u32);
        let mut cumulative = 0.0;
        let mut pending: Option<(SparseInput, BranchAction, f64, u32)> = None;
        loop {
            let obs = encode_state(&sim);
            let x = obs.normalized();
            if let Some((s, a, r, seconds)) = pending.take() {
                self.replay.push(Transition {
                    state: s,
                    action: a,
                    reward: r * scale,
                    next_state: x.clone(),
                    // running out of horizon is a truncation, not a terminal state
                    terminal: false,
                    periods: self.config.discount_period.map_or(1.0, |p| f64::from(seconds) / f64::from(p)),
                });
                for _ in 0..self.config.updates_per_decision {
                    if let Some(l) = self.learn()? {
                        losses.0 += l;
                        losses.1 += 1;
                    }
                }
            }
            if sim.finished() {
                break;
            }
            let action = self.choose(&x, warmup, decay)?;
            let t = sim.clock();
            let cycle = execute_action(&mut sim, obs, action.clone(), &decoder)?;
            cumulative += cycle.reward;
            decisions.push(DecisionRecord {
                t,
                state_hash: hash_input(&x),
                action: action.clone(),
                reward: cycle.reward,
                plans: cycle.plans,
            });
            pending = Some((x, action, cycle.reward, cycle.next_decision - t));
        }

        if !warmup && self.best.as_ref().map_or(true, |(r, _)| cumulative > *r) {
            self.best = Some((cumulative, self.primary.clone()));
        }
        let loss_mean = (losses.1 > 0).then(|| losses.0 / f64::from(losses.1));
        self.curve.push(CurvePoint {
            episode,
            cumulative_reward: cumulative,
            loss_mean,
            decisions: decisions.len(),
            gradient_steps: self.gradient_steps,
        });
        self.episode += 1;
        Ok(EpisodeLog {
            episode,
            sim_seed,
            warmup,
            cumulative_reward: cumulative,
            decisions,
            loss_mean,
            noise_decay: decay,
        })
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            final_net: self.primary,
            best: self.best,
            curve: self.curve,
        }
    }
}

/// Runs every configured episode.
pub fn train(env: Environment, config: TrainConfig) -> Result<TrainOutcome> {
    let mut t = Trainer::new(env, config)?;
    while !t.is_done() {
        t.run_episode()?;
    }
    Ok(t.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{CorridorConfig, DemandConfig, VehicleFlow};

    fn small_env() -> Environment {
        let mut d = DemandConfig::empty(400);
        d.vehicle_flows.push(VehicleFlow {
            origin: 0,
            destination: 1,
            vehicles_per_hour: 600.0,
            bus_share: 0.0,
        });
        d.vehicle_flows.push(VehicleFlow {
            origin: 2,
            destination: 3,
            vehicles_per_hour: 300.0,
            bus_share: 0.0,
        });
        let corridor = CorridorConfig {
            num_intersections: 1,
            link_lengths: vec![],
            ..CorridorConfig::default()
        };
        Environment::new(corridor, d)
    }

    fn small_config(episodes: u32, warmup: u32) -> TrainConfig {
        TrainConfig {
            episodes,
            warmup_episodes: warmup,
            hidden_width: 8,
            batch_size: 4,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn warmup_only_fills_buffer_without_best() {
        let mut t = Trainer::new(small_env(), small_config(2, 2)).unwrap();
        let mut decisions = 0;
        while !t.is_done() {
            let log = t.run_episode().unwrap();
            assert!(log.warmup);
            let sum: f64 = log.decisions.iter().map(|d| d.reward).sum();
            assert_eq!(sum, log.cumulative_reward);
            decisions += log.decisions.len();
        }
        assert_eq!(t.replay().len(), decisions);
        assert!(t.best().is_none());
        assert!(t.gradient_steps() > 0);
    }

    #[test]
    fn same_seed_same_curve() {
        let a = train(small_env(), small_config(4, 1)).unwrap();
        let b = train(small_env(), small_config(4, 1)).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.final_net, b.final_net);
        assert!(a.best.is_some());
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let mut t = Trainer::new(small_env(), small_config(4, 1)).unwrap();
        t.run_episode().unwrap();
        t.run_episode().unwrap();
        let mut resumed = t.clone();
        while !t.is_done() {
            t.run_episode().unwrap();
        }
        while !resumed.is_done() {
            resumed.run_episode().unwrap();
        }
        assert_eq!(t, resumed);
    }

    #[test]
    fn single_network_sync_keeps_target_equal() {
        let mut cfg = small_config(2, 0);
        cfg.sync_interval = 1;
        let mut t = Trainer::new(small_env(), cfg).unwrap();
        t.run_episode().unwrap();
        assert!(t.gradient_steps() > 0);
        assert_eq!(t.primary(), t.target());
    }

    #[test]
    fn noise_decays_to_zero() {
        let mut t = Trainer::new(small_env(), small_config(4, 1)).unwrap();
        let decays: Vec<f64> = (0..4).map(|_| t.run_episode().unwrap().noise_decay).collect();
        assert_eq!(decays, [1.0, 1.0, 0.5, 0.0]);
    }
}
