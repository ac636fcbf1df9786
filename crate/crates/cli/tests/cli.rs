use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/toy.json")
}

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corridor-rl"))
        .args(args)
        .env("CORRIDOR_RL_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = bin(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Copy of the toy scenario with `edit` applied.
fn edited_toy(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(toy()).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join("edited.json");
    std::fs::write(&path, v.to_string()).unwrap();
    path
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn train_writes_curve_checkpoints_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    ok(&["train", s(&toy()), "--out", s(&out), "-q"]);
    let curve = csv_rows(&out.join("training_curve.csv"));
    assert_eq!(curve.len(), 50);
    assert!(out.join("checkpoint_final.json").exists());
    assert!(out.join("checkpoint_best.json").exists());
    assert!(out.join("config.json").exists());
}

#[test]
fn overrides_are_echoed_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = ok(&["train", s(&toy()), "--gamma", "0.99", "--episodes", "1", "--warmup", "1", "--out", s(&out), "-q"]);
    let echoed: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(echoed["train"]["gamma"], 0.99);
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed, saved);
}

#[test]
fn invalid_values_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(bin(&["train", s(&toy()), "--lr", "-1", "--out", s(&out)]).status.code(), Some(2));
    let bad = edited_toy(dir.path(), |v| v["train"]["learning_rate"] = 0.1.into());
    assert_eq!(bin(&["train", s(&bad), "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(bin(&["eval", s(&toy()), "--preset", "rush", "--policy", "fs-wf", "--out", s(&out)]).status.code(), Some(2));
}

#[test]
fn fixed_time_eval_reports_one_row_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval");
    ok(&["eval", s(&toy()), "--policy", "fs-wf", "--out", s(&out)]);
    let rows = csv_rows(&out.join("metrics.csv"));
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| &r[0] == "fs-wf"));
    for f in ["trips.csv", "signal_trace.csv", "delay_grid.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn empty_preset_gives_zero_delay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval");
    ok(&["eval", s(&toy()), "--preset", "empty", "--policy", "random", "--seeds", "3", "--out", s(&out)]);
    for r in csv_rows(&out.join("metrics.csv")) {
        assert_eq!(&r[2], "0");
    }
}

#[test]
fn checkpoint_eval_reports_improvement_against_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    ok(&["train", s(&toy()), "--episodes", "6", "--out", s(&run), "-q"]);
    let eval = dir.path().join("eval");
    let ckpt = run.join("checkpoint_final.json");
    ok(&["eval", s(&toy()), "--policy", s(&ckpt), "--baseline", "fs-wf", "--seeds", "4", "--out", s(&eval)]);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(eval.join("summary.json")).unwrap()).unwrap();
    let c = &summary["comparisons"][0];
    assert_eq!(c["policy"], "checkpoint_final");
    assert_eq!(c["baseline"], "fs-wf");
    assert!(c["imp_percent"].is_number());
    assert!(c["paired_test"]["p_value"].is_number());
}

#[test]
fn bad_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval");
    let missing = dir.path().join("nope.json");
    assert_eq!(bin(&["eval", s(&toy()), "--policy", s(&missing), "--out", s(&out)]).status.code(), Some(2));

    // a one-intersection checkpoint does not fit the three-intersection corridor
    let run = dir.path().join("run");
    ok(&["train", s(&toy()), "--episodes", "1", "--warmup", "1", "--out", s(&run), "-q"]);
    let corridor = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/corridor3.json");
    let ckpt = run.join("checkpoint_final.json");
    assert_eq!(bin(&["eval", s(&corridor), "--policy", s(&ckpt), "--out", s(&out)]).status.code(), Some(2));
}

#[test]
fn unknown_sweep_parameter_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = bin(&["sweep", s(&toy()), "--parameter", "momentum", "--values", "0.9", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gamma_sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let sc = toy();
    ok(&["sweep", s(&sc), "--parameter", "gamma", "--values", "0.9,0.99", "--episodes", "4", "--seeds", "3", "--out", s(&out), "-q"]);
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][1], "0.9");
    assert_eq!(&rows[1][1], "0.99");
}

#[test]
fn single_value_sweep_matches_train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep");
    ok(&["sweep", s(&toy()), "--parameter", "lr", "--values", "0.0005", "--episodes", "5", "--seeds", "3", "--out", s(&sweep), "-q"]);
    let run = dir.path().join("run");
    ok(&["train", s(&toy()), "--episodes", "5", "--out", s(&run), "-q"]);
    let eval = dir.path().join("eval");
    let ckpt = run.join("checkpoint_best.json");
    ok(&["eval", s(&toy()), "--policy", s(&ckpt), "--seeds", "3", "--out", s(&eval)]);

    let sweep_row = &csv_rows(&sweep.join("sweep.csv"))[0];
    let aids: Vec<f64> = csv_rows(&eval.join("metrics.csv")).iter().map(|r| r[2].parse().unwrap()).collect();
    let mean = aids.iter().sum::<f64>() / aids.len() as f64;
    let swept: f64 = sweep_row[6].parse().unwrap();
    assert!((swept - mean).abs() < 1e-9, "sweep {swept} vs train+eval {mean}");
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full");
    ok(&["train", s(&toy()), "--episodes", "8", "--out", s(&full), "-q"]);

    let part = dir.path().join("part");
    let state = dir.path().join("state.json");
    ok(&["train", s(&toy()), "--episodes", "8", "--stop-after", "5", "--save-state", s(&state), "--out", s(&part), "-q"]);
    assert_eq!(csv_rows(&part.join("training_curve.csv")).len(), 5);
    ok(&["train", s(&toy()), "--episodes", "8", "--resume", s(&state), "--out", s(&part), "-q"]);

    for f in ["training_curve.csv", "checkpoint_final.json", "checkpoint_best.json"] {
        assert_eq!(std::fs::read(full.join(f)).unwrap(), std::fs::read(part.join(f)).unwrap(), "{f}");
    }

    // a state started from other settings is refused
    let other = dir.path().join("other");
    let o = bin(&["train", s(&toy()), "--episodes", "9", "--resume", s(&state), "--out", s(&other), "-q"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numeric_blow_up_exits_with_divergence_code() {
    let dir = tempfile::tempdir().unwrap();
    let sc = edited_toy(dir.path(), |v| v["train"]["reward_scale"] = 1e300.into());
    let out = dir.path().join("run");
    let o = bin(&["train", s(&sc), "--episodes", "6", "--out", s(&out), "-q"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    // the partial curve is still written
    assert!(out.join("training_curve.csv").exists());
}
