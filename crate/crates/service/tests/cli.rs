use std::path::Path;
use std::process::{Command, Output};

use handover_core::kinematics::{JointState, Pose};
use handover_core::scenario::{ObjectKind, ScenarioScript, Workspace};
use nalgebra::Vector3;

fn handover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_handover"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("HANDOVER_PROFILE")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn static_script(hand: Pose, timeout: f64) -> ScenarioScript {
    let ws = Workspace::default();
    ScenarioScript {
        id: "static".into(),
        condition: "cardboard_box/static".into(),
        object: ObjectKind::CardboardBox,
        robot_start: JointState::at_rest(ws.robot_ready.clone()),
        hand_start: hand,
        segments: vec![],
        seed: 1,
        timeout,
    }
}

fn write_script(dir: &Path, script: &ScenarioScript) -> String {
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_string_pretty(script).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn static_scenario_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_script(dir.path(), &static_script(Workspace::default().hand_nominal, 30.0));
    let out_dir = dir.path().join("out");
    let out = handover(&["run", "--scenario", &scenario, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["trajectory.ndjson", "metrics.csv", "outcome.json"] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let outcome: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("outcome.json")).unwrap()).unwrap();
    assert_eq!(outcome["success"], true);

    // Recomputing from the saved log reproduces the written metrics.
    let recomputed = handover(&["metrics", "--log", out_dir.join("trajectory.ndjson").to_str().unwrap()]);
    assert_eq!(code(&recomputed), 0, "{}", stderr(&recomputed));
    assert_eq!(
        String::from_utf8(recomputed.stdout).unwrap(),
        std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap()
    );
}

#[test]
fn unreachable_object_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let mut hand = Workspace::default().hand_nominal;
    hand.position += Vector3::new(2.0, 0.0, 0.0);
    let scenario = write_script(dir.path(), &static_script(hand, 2.0));
    let out_dir = dir.path().join("out");
    let out = handover(&["run", "--scenario", &scenario, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let outcome: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("outcome.json")).unwrap()).unwrap();
    assert_eq!(outcome["success"], false);
    assert_eq!(outcome["failure_reason"]["kind"], "timeout");
    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let row: Vec<&str> = metrics.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "0");
}

#[test]
fn invalid_inputs_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_script(dir.path(), &static_script(Workspace::default().hand_nominal, 1.0));
    let out_dir = dir.path().join("out");
    let out_dir = out_dir.to_str().unwrap();

    let out = handover(&["--chain", "/nonexistent/chain.json", "run", "--scenario", &scenario, "--out", out_dir]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("chain"), "{}", stderr(&out));

    let out = handover(&["run", "--scenario", "/nonexistent/scenario.json", "--out", out_dir]);
    assert_eq!(code(&out), 4);

    let mut cfg: serde_json::Value =
        serde_json::from_str(handover_core::config::DEFAULT_CONTROLLER_CONFIG).unwrap();
    cfg["controller"]["spring1"]["k"] = serde_json::json!(-5.0);
    let cfg_path = dir.path().join("controller.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out = handover(&[
        "--controller-config",
        cfg_path.to_str().unwrap(),
        "run",
        "--scenario",
        &scenario,
        "--out",
        out_dir,
    ]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("spring1"), "{}", stderr(&out));

    let out = handover(&["batch", "--experiment", "exp1", "--runs", "0", "--out", out_dir]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("runs"), "{}", stderr(&out));

    let out = handover(&["batch", "--experiment", "exp3", "--out", out_dir]);
    assert_eq!(code(&out), 4);
    let out = handover(&["serve", "--stream-hz", "500"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("stream_hz"), "{}", stderr(&out));
    let out = handover(&["no-such-command"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn env_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_handover"))
        .args(["batch", "--experiment", "exp1", "--runs", "1"])
        .env("HANDOVER_PROFILE", "timid")
        .env("HANDOVER_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("profile"), "{}", stderr(&out));
}

#[test]
fn unwritable_output_is_a_system_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_script(dir.path(), &static_script(Workspace::default().hand_nominal, 1.0));
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = handover(&["run", "--scenario", &scenario, "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn batch_writes_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = handover(&[
            "batch",
            "--experiment",
            "exp1",
            "--object",
            "cardboard_box",
            "--motion",
            "translation",
            "--runs",
            "20",
            "--seed",
            "7",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        out_dir
    };
    let a = run("a");
    let runs = std::fs::read_to_string(a.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 21);
    let summary = std::fs::read_to_string(a.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "condition,runs,t_a,SR,d_i,L_r,L_o,e_d,theta_i,theta_r,theta_o,e_theta");
    assert!(lines[1].starts_with("cardboard_box/translation,20,"));

    let b = run("b");
    assert_eq!(std::fs::read(a.join("summary.csv")).unwrap(), std::fs::read(b.join("summary.csv")).unwrap());
    assert_eq!(runs, std::fs::read_to_string(b.join("runs.csv")).unwrap());

    let scripts: Vec<ScenarioScript> =
        serde_json::from_str(&std::fs::read_to_string(a.join("scripts.json")).unwrap()).unwrap();
    assert_eq!(scripts.len(), 20);
}
