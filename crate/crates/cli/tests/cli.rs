use jointplan::harness::io::{load_checkpoint, load_dataset, load_plan};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn jointplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jointplan"))
        .args(args)
        .env_remove("JOINTPLAN_CONFIG")
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn plan_writes_the_plan_and_figure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plan.json");
    let svg = dir.path().join("plan.svg");
    let r = jointplan(&[
        "plan",
        s(&fixture("stalled_lane-00103.json")),
        "--out",
        s(&out),
        "--emit-plot",
        s(&svg),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let p = load_plan(&out).unwrap();
    assert_eq!(p.refined.states.len(), 21);
    assert!(p.cost_final <= p.cost_initial);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let r = jointplan(&["plan", "x.json", "--no-such-flag"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn missing_scenario_is_a_runtime_error() {
    let r = jointplan(&["plan", "/nonexistent/scenario.json"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("error"));
}

#[test]
fn gen_writes_one_file_per_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let r = jointplan(&[
        "gen",
        "--template",
        "all",
        "--count",
        "7",
        "--seed",
        "3",
        "--out",
        s(dir.path()),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 7);
    let bad = jointplan(&["gen", "--template", "roundabout", "--out", s(dir.path())]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn train_then_eval_on_generated_demonstrations() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("demos");
    let small_grid =
        r#""grid": {"t1": [2.5], "speed_count": 3, "d1": [-1.0, 0.0, 1.0], "s1_offsets": [25.0]}"#;
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        format!(r#"{{"schema": 1, "planner": {{{small_grid}}}}}"#),
    )
    .unwrap();
    let r = jointplan(&[
        "--config",
        s(&config),
        "gen",
        "--template",
        "all",
        "--count",
        "50",
        "--out",
        s(&data),
        "--expert",
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(load_dataset(&data).unwrap().len(), 50);

    let train_cfg = dir.path().join("train.json");
    std::fs::write(
        &train_cfg,
        format!(
            r#"{{"schema": 1, "planner": {{{small_grid}}},
                "learn": {{"adaptive": true, "alpha": 0.05, "total_steps": 500, "pretrain_steps": 490, "batch_imitation": 1, "validate_every": 100}}}}"#
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let r = jointplan(&["train", s(&data), s(&train_cfg), "--out-dir", s(&out_dir)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let ck = load_checkpoint(&out_dir.join("checkpoint.json")).unwrap();
    assert!(ck.step <= 500);
    assert!(ck.weights.weights.iter().all(|w| *w > 0.0));
    let log = std::fs::read_to_string(out_dir.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 500);

    let report = dir.path().join("report.json");
    let r = jointplan(&[
        "--config",
        s(&config),
        "eval",
        s(&data),
        "--weights",
        s(&out_dir.join("checkpoint.json")),
        "--out",
        s(&report),
        "--mode",
        "discrete",
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(std::fs::read_to_string(&report)
        .unwrap()
        .contains("\"l2_at\""));
    assert!(report.with_extension("txt").exists());
}
