use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use corridor_core::trainer::BranchMode;

use crate::commands::{self, PolicySpec, SweepParameter, TrainOptions};
use crate::error::CliError;
use crate::scenario::{ResolvedConfig, ScenarioFile};

#[derive(Debug, Parser)]
#[command(name = "corridor-rl", version, about = "Train and evaluate multi-agent signal controllers on a simulated corridor")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a controller and write checkpoints plus the training curve.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a baseline over several seeds.
    Eval(EvalArgs),
    /// Train and evaluate once per value of one hyperparameter.
    Sweep(SweepArgs),
    /// Compare per-agent branches against a single shared split head.
    Ablation(AblationArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario JSON file.
    pub scenario: PathBuf,
    /// Demand preset defined in the scenario file.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub c_min: Option<u32>,
    #[arg(long, allow_negative_numbers = true)]
    pub c_max: Option<u32>,
    /// Number of evaluation seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub first_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BranchArg {
    PerAgent,
    SharedSplit,
}

#[derive(Debug, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub episodes: Option<u32>,
    #[arg(long)]
    pub warmup: Option<u32>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub sync_interval: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub branch_mode: Option<BranchArg>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    /// Write the full trainer state here when the run stops.
    #[arg(long)]
    pub save_state: Option<PathBuf>,
    /// Continue from a state written by --save-state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after this many episodes in total (use with --save-state).
    #[arg(long)]
    pub stop_after: Option<u32>,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Checkpoint path, or one of fs-wf, fs-gw, random.
    #[arg(long)]
    pub policy: String,
    /// Baselines evaluated on the same seeds; IMP is reported against each.
    #[arg(long)]
    pub baseline: Vec<String>,
    /// Sample the delay grid of the first seed every N seconds (0 = off).
    #[arg(long, default_value_t = 60)]
    pub grid_every: u32,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    /// c-range, gamma or lr.
    #[arg(long)]
    pub parameter: String,
    /// Comma-separated values; c-range takes `max` or `min:max`.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub values: Vec<String>,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    /// Add an arm whose target network is synced every step.
    #[arg(long)]
    pub single_network_arm: bool,
    #[arg(long, short)]
    pub quiet: bool,
}

fn resolve(s: &ScenarioArgs, o: Option<&TrainOverrides>) -> Result<ResolvedConfig, CliError> {
    let file = ScenarioFile::load(&s.scenario)?;
    let mut cfg = file.resolve(s.preset.as_deref())?;
    if let Some(v) = s.c_min {
        cfg.environment.action_space.c_min = v;
    }
    if let Some(v) = s.c_max {
        cfg.environment.action_space.c_max = v;
    }
    if let Some(v) = s.seeds {
        cfg.eval.seeds = v;
    }
    if let Some(v) = s.first_seed {
        cfg.eval.first_seed = v;
    }
    if let Some(o) = o {
        let t = &mut cfg.train;
        if let Some(v) = o.seed {
            t.seed = v;
        }
        if let Some(v) = o.episodes {
            t.episodes = v;
        }
        if let Some(v) = o.warmup {
            t.warmup_episodes = v;
        }
        if let Some(v) = o.gamma {
            t.gamma = v;
        }
        if let Some(v) = o.lr {
            t.lr = v;
        }
        if let Some(v) = o.sync_interval {
            t.sync_interval = v;
        }
        if let Some(v) = o.hidden {
            t.hidden_width = v;
        }
        if let Some(v) = o.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = o.branch_mode {
            t.branch_mode = match v {
                BranchArg::PerAgent => BranchMode::PerAgent,
                BranchArg::SharedSplit => BranchMode::SharedSplit,
            };
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => {
            let cfg = resolve(&a.scenario, Some(&a.overrides))?;
            commands::echo_config(&cfg, &a.scenario.out)?;
            let opts = TrainOptions {
                save_state: a.save_state,
                resume: a.resume,
                stop_after: a.stop_after,
                quiet: a.quiet,
            };
            commands::run_train(&cfg, &a.scenario.out, &opts)?;
        }
        Command::Eval(a) => {
            let cfg = resolve(&a.scenario, None)?;
            commands::echo_config(&cfg, &a.scenario.out)?;
            let policy = PolicySpec::parse(&a.policy);
            let baselines: Vec<_> = a.baseline.iter().map(|b| PolicySpec::parse(b)).collect();
            let every = (a.grid_every > 0).then_some(a.grid_every);
            let summary = commands::run_eval(&cfg, &a.scenario.out, &policy, &baselines, every)?;
            for c in &summary.comparisons {
                eprintln!(
                    "{} vs {}: mean AID {:.1} vs {:.1}, IMP {:.2}%{}",
                    c.policy,
                    c.baseline,
                    c.policy_mean_aid,
                    c.baseline_mean_aid,
                    c.imp_percent,
                    c.paired_test.map_or(String::new(), |t| format!(", one-sided p = {:.4}", t.p_value))
                );
            }
        }
        Command::Sweep(a) => {
            let parameter = SweepParameter::parse(&a.parameter)?;
            let cfg = resolve(&a.scenario, Some(&a.overrides))?;
            commands::echo_config(&cfg, &a.scenario.out)?;
            commands::run_sweep(&cfg, &a.scenario.out, parameter, &a.values, a.quiet)?;
        }
        Command::Ablation(a) => {
            let cfg = resolve(&a.scenario, Some(&a.overrides))?;
            commands::echo_config(&cfg, &a.scenario.out)?;
            let arms = commands::ablation_arms(a.single_network_arm);
            commands::run_ablation(&cfg, &a.scenario.out, &arms, a.quiet)?;
        }
    }
    Ok(())
}
