//! Train, evaluate, sweep and ablation drivers shared by the binary and tests.

use std::path::{Path, PathBuf};

use corridor_core::metrics::seed_sweep_stats;
use corridor_core::qnet::QNetwork;
use corridor_core::signal_control::FixedTimeVariant;
use corridor_core::trainer::{
    lockstep, run_episode_sampled, ActionDecoder, BranchMode, EpisodeRun, FixedTimePolicy, GreedyPolicy, Policy,
    RandomPolicy, Trainer,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, FORMAT};
use crate::error::CliError;
use crate::report::{self, Comparison, EvalSummary, PolicyRuns, PolicySummary};
use crate::scenario::ResolvedConfig;
use crate::stats::paired_one_sided;

/// Environment variable capping evaluation threads.
pub const THREADS_VAR: &str = "CORRIDOR_RL_THREADS";

/// Serialized trainer plus the configuration it was started from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainState {
    pub config: ResolvedConfig,
    pub trainer: Trainer,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub save_state: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    /// Stop once this many episodes (in total) have run.
    pub stop_after: Option<u32>,
    pub quiet: bool,
}

/// Result of a training command.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub finished: bool,
    pub episodes: u32,
    pub gradient_steps: u64,
    pub best: Option<Checkpoint>,
    pub last: Checkpoint,
}

impl TrainResult {
    /// The checkpoint evaluation should use: best if one was kept.
    pub fn policy(&self) -> &Checkpoint {
        self.best.as_ref().unwrap_or(&self.last)
    }
}

pub const CURVE_FILE: &str = "training_curve.csv";
pub const BEST_FILE: &str = "checkpoint_best.json";
pub const FINAL_FILE: &str = "checkpoint_final.json";
pub const CONFIG_FILE: &str = "config.json";

fn checkpoint(cfg: &ResolvedConfig, kind: &str, episode: u32, reward: Option<f64>, net: &QNetwork) -> Checkpoint {
    Checkpoint {
        format: FORMAT.to_owned(),
        scenario: cfg.scenario.clone(),
        kind: kind.to_owned(),
        episode,
        cumulative_reward: reward,
        branch_mode: cfg.train.branch_mode,
        action_space: cfg.environment.action_space,
        num_intersections: cfg.environment.corridor.num_intersections,
        cells_per_lane: cfg.environment.corridor.cells_per_lane,
        network: net.clone(),
    }
}

/// Echoes the resolved config to stdout and `out/config.json`.
pub fn echo_config(cfg: &ResolvedConfig, out: &Path) -> Result<(), CliError> {
    println!("{}", cfg.to_json());
    std::fs::create_dir_all(out)?;
    report::write_json(&out.join(CONFIG_FILE), cfg)
}

pub fn run_train(cfg: &ResolvedConfig, out: &Path, opts: &TrainOptions) -> Result<TrainResult, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let mut trainer = match &opts.resume {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read training state {}: {e}", path.display())))?;
            let state: TrainState = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("malformed training state {}: {e}", path.display())))?;
            if state.config != *cfg {
                return Err(CliError::Validation(format!(
                    "training state {} was started from a different configuration",
                    path.display()
                )));
            }
            state.trainer
        }
        None => Trainer::new(cfg.environment.clone(), cfg.train.clone())?,
    };

    let mut diverged = None;
    while !trainer.is_done() && opts.stop_after.is_none_or(|n| trainer.episodes_done() < n) {
        match trainer.run_episode() {
            Ok(log) => {
                if !opts.quiet {
                    eprintln!(
                        "episode {:>4}{} reward {:>12.0} loss {}",
                        log.episode,
                        if log.warmup { " (warm-up)" } else { "" },
                        log.cumulative_reward,
                        log.loss_mean.map_or("-".to_owned(), |l| format!("{l:.5}"))
                    );
                }
            }
            Err(e) => {
                diverged = Some(CliError::from(e));
                break;
            }
        }
    }

    report::write_curve(&out.join(CURVE_FILE), trainer.curve(), cfg.train.warmup_episodes)?;
    let best = trainer
        .best()
        .map(|(reward, net)| checkpoint(cfg, "best", trainer.episodes_done(), Some(*reward), net));
    let last = checkpoint(cfg, "final", trainer.episodes_done(), None, trainer.primary());
    if let Some(b) = &best {
        b.save(&out.join(BEST_FILE))?;
    }
    last.save(&out.join(FINAL_FILE))?;
    if let Some(path) = &opts.save_state {
        let state = TrainState {
            config: cfg.clone(),
            trainer: trainer.clone(),
        };
        std::fs::write(path, serde_json::to_string(&state)?)?;
    }
    if let Some(e) = diverged {
        return Err(e);
    }
    Ok(TrainResult {
        finished: trainer.is_done(),
        episodes: trainer.episodes_done(),
        gradient_steps: trainer.gradient_steps(),
        best,
        last,
    })
}

/// A policy named on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    FsWf,
    FsGw,
    Random,
    Checkpoint(PathBuf),
}

impl PolicySpec {
    pub fn parse(s: &str) -> Self {
        match s {
            "fs-wf" => PolicySpec::FsWf,
            "fs-gw" => PolicySpec::FsGw,
            "random" => PolicySpec::Random,
            path => PolicySpec::Checkpoint(PathBuf::from(path)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PolicySpec::FsWf => "fs-wf".into(),
            PolicySpec::FsGw => "fs-gw".into(),
            PolicySpec::Random => "random".into(),
            PolicySpec::Checkpoint(p) => p
                .file_stem()
                .map_or_else(|| "checkpoint".into(), |s| s.to_string_lossy().into_owned()),
        }
    }
}

/// A policy ready to instantiate once per seed.
#[derive(Debug, Clone)]
pub enum Resolved {
    Fixed(FixedTimeVariant),
    Random(ActionDecoder),
    Greedy(QNetwork, ActionDecoder),
}

const RANDOM_STREAM: u64 = 0x7261_6e64_6f6d;

impl Resolved {
    pub fn from_spec(spec: &PolicySpec, cfg: &ResolvedConfig) -> Result<Self, CliError> {
        let env = &cfg.environment;
        Ok(match spec {
            PolicySpec::FsWf => Resolved::Fixed(FixedTimeVariant::WebsterFormula),
            PolicySpec::FsGw => Resolved::Fixed(FixedTimeVariant::GreenWave),
            PolicySpec::Random => Resolved::Random(ActionDecoder::new(env, BranchMode::PerAgent)),
            PolicySpec::Checkpoint(path) => Resolved::from_checkpoint(&Checkpoint::load(path)?, cfg)?,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, cfg: &ResolvedConfig) -> Result<Self, CliError> {
        let decoder = ckpt.decoder_for(&cfg.environment)?;
        Ok(Resolved::Greedy(ckpt.network.clone(), decoder))
    }

    fn instantiate(&self, cfg: &ResolvedConfig, seed: u64) -> Result<Box<dyn Policy>, CliError> {
        let env = &cfg.environment;
        Ok(match self {
            Resolved::Fixed(v) => Box::new(FixedTimePolicy::new(env.fixed_time_plans(*v)?, env.timings)),
            Resolved::Random(d) => lockstep(RandomPolicy::new(d.clone(), seed ^ RANDOM_STREAM), d.clone()),
            Resolved::Greedy(net, d) => lockstep(GreedyPolicy { net: net.clone() }, d.clone()),
        })
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let threads = match std::env::var(THREADS_VAR) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Validation(format!("{THREADS_VAR} must be a non-negative integer, got `{v}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

/// Runs `policy` once per evaluation seed, in parallel; results stay in
/// seed order. Delay grids are sampled for the first seed only.
pub fn evaluate(
    cfg: &ResolvedConfig,
    label: &str,
    policy: &Resolved,
    grid_every: Option<u32>,
) -> Result<PolicyRuns, CliError> {
    let seeds = cfg.eval.seed_list();
    let pool = thread_pool()?;
    let runs: Result<Vec<EpisodeRun>, CliError> = pool.install(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(k, &seed)| {
                let mut p = policy.instantiate(cfg, seed)?;
                let every = if k == 0 { grid_every } else { None };
                Ok(run_episode_sampled(&cfg.environment, p.as_mut(), seed, every)?)
            })
            .collect()
    });
    Ok(PolicyRuns {
        label: label.to_owned(),
        runs: runs?,
    })
}

pub fn summarize(runs: &PolicyRuns) -> Result<PolicySummary, CliError> {
    let reports: Vec<_> = runs.runs.iter().map(|r| r.report).collect();
    let stats = if reports.len() >= 2 {
        Some(seed_sweep_stats(&reports)?)
    } else {
        None
    };
    Ok(PolicySummary {
        policy: runs.label.clone(),
        seeds: reports.len(),
        stats,
    })
}

pub fn compare(policy: &PolicyRuns, baseline: &PolicyRuns) -> Result<Comparison, CliError> {
    let ours = policy.mean_aid();
    let base = baseline.mean_aid();
    let imp = corridor_core::metrics::improvement(base, ours)?;
    Ok(Comparison {
        policy: policy.label.clone(),
        baseline: baseline.label.clone(),
        policy_mean_aid: ours,
        baseline_mean_aid: base,
        imp_percent: imp,
        paired_test: paired_one_sided(&baseline.aids(), &policy.aids()),
    })
}

/// Evaluates `policy` and `baselines` on the same seeds and writes every
/// evaluation artifact into `out`.
pub fn run_eval(
    cfg: &ResolvedConfig,
    out: &Path,
    policy: &PolicySpec,
    baselines: &[PolicySpec],
    grid_every: Option<u32>,
) -> Result<EvalSummary, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let mut specs = vec![policy.clone()];
    specs.extend(baselines.iter().filter(|b| *b != policy).cloned());
    let resolved: Vec<Resolved> = specs.iter().map(|s| Resolved::from_spec(s, cfg)).collect::<Result<_, _>>()?;
    let mut labels: Vec<String> = Vec::new();
    for s in &specs {
        let l = s.label();
        if labels.contains(&l) {
            return Err(CliError::Validation(format!("two policies share the label `{l}`")));
        }
        labels.push(l);
    }
    let mut all = Vec::new();
    for (label, r) in labels.iter().zip(&resolved) {
        all.push(evaluate(cfg, label, r, grid_every)?);
    }
    let summary = EvalSummary {
        scenario: cfg.scenario.clone(),
        preset: cfg.preset.clone(),
        seeds: cfg.eval.seed_list(),
        policies: all.iter().map(summarize).collect::<Result<_, _>>()?,
        comparisons: all[1..].iter().map(|b| compare(&all[0], b)).collect::<Result<_, _>>()?,
    };
    report::write_metrics(&out.join("metrics.csv"), &all)?;
    report::write_trips(&out.join("trips.csv"), &all)?;
    report::write_signal_trace(&out.join("signal_trace.csv"), &all)?;
    report::write_delay_grid(&out.join("delay_grid.csv"), &all)?;
    report::write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Sensitivity sweep parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    CRange,
    Gamma,
    Lr,
}

impl SweepParameter {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "c-range" => Ok(SweepParameter::CRange),
            "gamma" => Ok(SweepParameter::Gamma),
            "lr" => Ok(SweepParameter::Lr),
            other => Err(CliError::Validation(format!(
                "unknown sweep parameter `{other}` (expected c-range, gamma or lr)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::CRange => "c-range",
            SweepParameter::Gamma => "gamma",
            SweepParameter::Lr => "lr",
        }
    }

    /// Applies one sweep value. A c-range value is either the upper bound
    /// (`80`) or `min:max`.
    pub fn apply(self, cfg: &mut ResolvedConfig, value: &str) -> Result<(), CliError> {
        let bad = || CliError::Validation(format!("cannot parse {} value `{value}`", self.name()));
        match self {
            SweepParameter::CRange => {
                let space = &mut cfg.environment.action_space;
                match value.split_once(':') {
                    Some((lo, hi)) => {
                        space.c_min = lo.trim().parse().map_err(|_| bad())?;
                        space.c_max = hi.trim().parse().map_err(|_| bad())?;
                    }
                    None => space.c_max = value.trim().parse().map_err(|_| bad())?,
                }
            }
            SweepParameter::Gamma => cfg.train.gamma = value.trim().parse().map_err(|_| bad())?,
            SweepParameter::Lr => cfg.train.lr = value.trim().parse().map_err(|_| bad())?,
        }
        cfg.validate()
    }
}

/// Trains on `cfg` into `out` and evaluates the kept policy greedily.
pub fn train_and_evaluate(cfg: &ResolvedConfig, out: &Path, quiet: bool) -> Result<(TrainResult, PolicyRuns), CliError> {
    let opts = TrainOptions {
        quiet,
        ..TrainOptions::default()
    };
    let trained = run_train(cfg, out, &opts)?;
    let resolved = Resolved::from_checkpoint(trained.policy(), cfg)?;
    let runs = evaluate(cfg, "learned", &resolved, None)?;
    Ok((trained, runs))
}

fn mean_std(s: &Option<corridor_core::metrics::SweepStats>, f: impl Fn(&corridor_core::metrics::SweepStats) -> corridor_core::metrics::Stat) -> [String; 2] {
    match s {
        Some(s) => {
            let st = f(s);
            [st.mean.to_string(), st.std.to_string()]
        }
        None => [String::new(), String::new()],
    }
}

pub fn run_sweep(cfg: &ResolvedConfig, out: &Path, parameter: SweepParameter, values: &[String], quiet: bool) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Validation("sweep needs at least one value".into()));
    }
    let mut variants = Vec::new();
    for v in values {
        let mut c = cfg.clone();
        parameter.apply(&mut c, v)?;
        variants.push(c);
    }
    std::fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    w.write_record([
        "parameter", "value", "c_min", "c_max", "gamma", "lr", "aid_mean", "aid_std", "pcd_mean", "pcd_std", "avds_mean",
        "avds_std", "apds_mean", "apds_std",
    ])?;
    for (k, (v, c)) in values.iter().zip(&variants).enumerate() {
        let dir = out.join(format!("{}_{k}", parameter.name()));
        let (_, runs) = train_and_evaluate(c, &dir, quiet)?;
        let s = summarize(&runs)?.stats;
        let mut row = vec![
            parameter.name().to_owned(),
            v.clone(),
            c.environment.action_space.c_min.to_string(),
            c.environment.action_space.c_max.to_string(),
            c.train.gamma.to_string(),
            c.train.lr.to_string(),
        ];
        row.extend(mean_std(&s, |s| s.aid));
        row.extend(mean_std(&s, |s| s.pcd));
        row.extend(mean_std(&s, |s| s.avds));
        row.extend(mean_std(&s, |s| s.apds));
        w.write_record(&row)?;
        w.flush()?;
    }
    Ok(())
}

/// One arm of the branching ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationArm {
    pub name: &'static str,
    pub branch_mode: BranchMode,
    /// Overrides the target sync interval (1 collapses the double target
    /// onto the primary network).
    pub sync_interval: Option<u64>,
}

pub fn ablation_arms(include_single_network: bool) -> Vec<AblationArm> {
    let mut arms = vec![
        AblationArm {
            name: "per-agent-branches",
            branch_mode: BranchMode::PerAgent,
            sync_interval: None,
        },
        AblationArm {
            name: "shared-split",
            branch_mode: BranchMode::SharedSplit,
            sync_interval: None,
        },
    ];
    if include_single_network {
        arms.push(AblationArm {
            name: "single-network-target",
            branch_mode: BranchMode::PerAgent,
            sync_interval: Some(1),
        });
    }
    arms
}

pub fn run_ablation(cfg: &ResolvedConfig, out: &Path, arms: &[AblationArm], quiet: bool) -> Result<(), CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let baseline = evaluate(cfg, "fs-wf", &Resolved::Fixed(FixedTimeVariant::WebsterFormula), None)?;
    let mut w = csv::Writer::from_path(out.join("ablation.csv"))?;
    w.write_record([
        "arm",
        "branch_mode",
        "sync_interval",
        "episodes",
        "gradient_steps",
        "aid_mean",
        "aid_std",
        "pcd_mean",
        "pcd_std",
        "avds_mean",
        "apds_mean",
        "imp_vs_fs_wf_percent",
    ])?;
    w.write_record([
        "fs-wf".to_owned(),
        String::new(),
        String::new(),
        "0".into(),
        "0".into(),
        baseline.mean_aid().to_string(),
    ]
    .into_iter()
    .chain(summary_tail(&baseline, &baseline)?))?;
    for arm in arms {
        let mut c = cfg.clone();
        c.train.branch_mode = arm.branch_mode;
        if let Some(k) = arm.sync_interval {
            c.train.sync_interval = k;
        }
        let (trained, runs) = train_and_evaluate(&c, &out.join(arm.name), quiet)?;
        w.write_record(
            [
                arm.name.to_owned(),
                match arm.branch_mode {
                    BranchMode::PerAgent => "per-agent".to_owned(),
                    BranchMode::SharedSplit => "shared-split".to_owned(),
                },
                c.train.sync_interval.to_string(),
                trained.episodes.to_string(),
                trained.gradient_steps.to_string(),
                runs.mean_aid().to_string(),
            ]
            .into_iter()
            .chain(summary_tail(&runs, &baseline)?),
        )?;
        w.flush()?;
    }
    Ok(())
}

fn summary_tail(runs: &PolicyRuns, baseline: &PolicyRuns) -> Result<Vec<String>, CliError> {
    let s = summarize(runs)?.stats;
    let mut v = Vec::new();
    v.push(s.map_or(String::new(), |s| s.aid.std.to_string()));
    v.extend(mean_std(&s, |s| s.pcd));
    v.push(s.map_or(String::new(), |s| s.avds.mean.to_string()));
    v.push(s.map_or(String::new(), |s| s.apds.mean.to_string()));
    v.push(compare(runs, baseline)?.imp_percent.to_string());
    Ok(v)
}
