//! CSV and JSON artifacts.

use std::path::Path;

use corridor_core::metrics::{MetricsReport, SweepStats};
use corridor_core::sim::Side;
use corridor_core::trainer::{CurvePoint, EpisodeRun};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::stats::PairedTest;

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_curve(path: &Path, curve: &[CurvePoint], warmup_episodes: u32) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", "cumulative_reward", "loss_mean", "decisions", "gradient_steps", "warmup"])?;
    for p in curve {
        w.write_record([
            p.episode.to_string(),
            p.cumulative_reward.to_string(),
            opt(p.loss_mean),
            p.decisions.to_string(),
            p.gradient_steps.to_string(),
            (p.episode < warmup_episodes).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const METRICS_HEADER: [&str; 15] = [
    "policy",
    "seed",
    "aid",
    "pcd",
    "avds",
    "apds",
    "adv",
    "adv_freeflow",
    "awtp",
    "t",
    "d",
    "n_v",
    "n_p",
    "cumulative_reward",
    "decisions",
];

fn metrics_row(policy: &str, run: &EpisodeRun) -> Vec<String> {
    let r: &MetricsReport = &run.report;
    vec![
        policy.to_owned(),
        run.seed.to_string(),
        r.aid.to_string(),
        r.pcd.to_string(),
        r.avds.to_string(),
        r.apds.to_string(),
        opt(r.adv),
        opt(r.adv_freeflow),
        opt(r.awtp),
        r.t.to_string(),
        r.d.to_string(),
        r.n_v.to_string(),
        r.n_p.to_string(),
        run.cumulative_reward.to_string(),
        run.decisions.to_string(),
    ]
}

/// One evaluated policy: a label and one run per seed, in seed order.
#[derive(Debug, Clone)]
pub struct PolicyRuns {
    pub label: String,
    pub runs: Vec<EpisodeRun>,
}

impl PolicyRuns {
    pub fn aids(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.report.aid as f64).collect()
    }

    pub fn mean_aid(&self) -> f64 {
        let a = self.aids();
        a.iter().sum::<f64>() / a.len() as f64
    }
}

pub fn write_metrics(path: &Path, all: &[PolicyRuns]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for p in all {
        for run in &p.runs {
            w.write_record(metrics_row(&p.label, run))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_trips(path: &Path, all: &[PolicyRuns]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["policy", "seed", "mode", "occupants", "entry_s", "exit_s", "delay_s", "freeflow_delay_s"])?;
    for p in all {
        for run in &p.runs {
            for t in &run.trips {
                w.write_record([
                    p.label.clone(),
                    run.seed.to_string(),
                    t.mode.label().to_owned(),
                    t.occupants.to_string(),
                    t.entry_s.to_string(),
                    t.exit_s.to_string(),
                    t.delay_s.to_string(),
                    t.freeflow_delay_s.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_signal_trace(path: &Path, all: &[PolicyRuns]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["policy", "seed", "intersection", "phase", "interval", "start_s", "end_s"])?;
    for p in all {
        for run in &p.runs {
            for r in &run.signal_log {
                w.write_record([
                    p.label.clone(),
                    run.seed.to_string(),
                    r.intersection.to_string(),
                    r.phase.label().to_owned(),
                    r.kind.label().to_owned(),
                    r.start.to_string(),
                    r.end.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Sparse sampled grids: one row per non-empty cell per sampled second.
/// `t = total` rows carry the delayed-vehicle seconds over the whole run.
pub fn write_delay_grid(path: &Path, all: &[PolicyRuns]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["policy", "seed", "t", "intersection", "approach", "lane", "cell", "delayed"])?;
    for p in all {
        for run in &p.runs {
            for (t, grid) in &run.grid_samples {
                let t = t.to_string();
                for (i, rows) in grid.iter().enumerate() {
                    for (row, cells) in rows.iter().enumerate() {
                        for (c, n) in cells.iter().enumerate().filter(|(_, n)| **n > 0) {
                            w.write_record(grid_row(&p.label, run.seed, &t, i, row, c, u64::from(*n)))?;
                        }
                    }
                }
            }
            if run.grid_samples.is_empty() {
                continue;
            }
            for (i, rows) in run.delay_grid.iter().enumerate() {
                for (row, cells) in rows.iter().enumerate() {
                    for (c, n) in cells.iter().enumerate().filter(|(_, n)| **n > 0) {
                        w.write_record(grid_row(&p.label, run.seed, "total", i, row, c, *n))?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn grid_row(policy: &str, seed: u64, t: &str, i: usize, row: usize, cell: usize, n: u64) -> [String; 8] {
    [
        policy.to_owned(),
        seed.to_string(),
        t.to_owned(),
        i.to_string(),
        side_label(Side::ALL[row / 4]).to_owned(),
        (row % 4).to_string(),
        cell.to_string(),
        n.to_string(),
    ]
}

fn side_label(s: Side) -> &'static str {
    match s {
        Side::North => "N",
        Side::East => "E",
        Side::South => "S",
        Side::West => "W",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub seeds: usize,
    /// Absent with fewer than two seeds.
    pub stats: Option<SweepStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub policy: String,
    pub baseline: String,
    pub policy_mean_aid: f64,
    pub baseline_mean_aid: f64,
    /// Relative AID reduction against the baseline, percent.
    pub imp_percent: f64,
    /// One-sided paired t-test over seeds that the policy has lower AID.
    pub paired_test: Option<PairedTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub scenario: String,
    pub preset: Option<String>,
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicySummary>,
    pub comparisons: Vec<Comparison>,
}
