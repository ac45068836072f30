//! Black-box tests of the `draco` binary: exit codes, file outputs, and
//! determinism across reruns.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn draco(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_draco"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to launch binary")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("killed by signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("cfg.json");
    fs::write(
        &path,
        r#"{
            "name": "cli-grid",
            "env": {"type": "gridworld", "width": 5, "height": 5},
            "goals": [
                {"id": "east", "target": [4.0, 0.0], "tolerance": 0.0},
                {"id": "north", "target": [0.0, 4.0], "tolerance": 0.0}
            ],
            "learner": {"kind": "tabular", "episodes": 2000, "alpha": 0.2},
            "metrics": ["wasserstein", "kl"],
            "observability": [50.0, 100.0],
            "noise": [0.0],
            "seeds": 3,
            "master_seed": 0,
            "out_dir": "out"
        }"#,
    )
    .unwrap();
    path
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = draco(dir.path(), &["recognize", "--policies", "p", "--trajectory", "t"]);
    assert_eq!(code(&out), 1, "missing required --metric should be a usage error");

    let out = draco(
        dir.path(),
        &["recognize", "--policies", "p", "--trajectory", "t", "--metric", "nope"],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("unknown metric"));

    let out = draco(dir.path(), &["frobnicate"]);
    assert_eq!(code(&out), 1);

    let out = draco(dir.path(), &["--help"]);
    assert_eq!(code(&out), 0, "--help is not an error");
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = draco(dir.path(), &["train", "--config", "missing.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("missing.json"));

    // Invalid config: duplicate goal ids. Nothing may be written.
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{
            "env": {"type": "gridworld", "width": 4, "height": 4},
            "goals": [
                {"id": "same", "target": [3.0, 0.0], "tolerance": 0.0},
                {"id": "same", "target": [0.0, 3.0], "tolerance": 0.0}
            ],
            "out_dir": "out"
        }"#,
    )
    .unwrap();
    let out = draco(dir.path(), &["train", "--config", "bad.json"]);
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("out").exists(), "failed train must not leave files");
}

#[test]
fn missing_policy_names_the_goal() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    draco(dir.path(), &["train", "--config", "cfg.json"]);
    let ok = draco(
        dir.path(),
        &["observe", "--config", "cfg.json", "--goal", "north", "--out", "t.jsonl"],
    );
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    fs::remove_file(dir.path().join("out/policies/north.policy.json")).unwrap();
    let out = draco(
        dir.path(),
        &[
            "recognize", "--policies", "out/policies", "--trajectory", "t.jsonl",
            "--metric", "kl",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("north"), "stderr: {}", stderr(&out));
}

#[test]
fn pipeline_recognizes_the_pursued_goal() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let out = draco(dir.path(), &["train", "--config", "cfg.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = draco(
        dir.path(),
        &["observe", "--config", "cfg.json", "--goal", "east", "--out", "east.jsonl"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = draco(
        dir.path(),
        &[
            "recognize", "--policies", "out/policies", "--trajectory", "east.jsonl",
            "--metric", "wasserstein",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let result: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(result["ranking"][0], "east");
    let posterior = result["posterior"].as_object().unwrap();
    let total: f64 = posterior.values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn empty_trajectory_gives_a_uniform_posterior() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    draco(dir.path(), &["train", "--config", "cfg.json"]);
    draco(
        dir.path(),
        &["observe", "--config", "cfg.json", "--goal", "east", "--out", "east.jsonl"],
    );
    let out = draco(
        dir.path(),
        &[
            "degrade", "--in", "east.jsonl", "--observability", "0", "--out", "none.jsonl",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = draco(
        dir.path(),
        &[
            "recognize", "--policies", "out/policies", "--trajectory", "none.jsonl",
            "--metric", "wasserstein",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let result: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(result["posterior"]["east"], 0.5);
    assert_eq!(result["posterior"]["north"], 0.5);
    assert_eq!(result["confidence"], 0.0);
}

#[test]
fn full_observability_degrade_keeps_content() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    draco(
        dir.path(),
        &["observe", "--config", "cfg.json", "--goal", "east", "--out", "east.jsonl"],
    );
    let out = draco(
        dir.path(),
        &["degrade", "--in", "east.jsonl", "--observability", "100", "--out", "same.jsonl"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        fs::read(dir.path().join("east.jsonl")).unwrap(),
        fs::read(dir.path().join("same.jsonl")).unwrap()
    );
}

#[test]
fn degrade_with_noise_needs_a_config() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    draco(
        dir.path(),
        &["observe", "--config", "cfg.json", "--goal", "east", "--out", "east.jsonl"],
    );
    let out = draco(
        dir.path(),
        &["degrade", "--in", "east.jsonl", "--observability", "100", "--noise", "20",
          "--out", "noisy.jsonl"],
    );
    assert_eq!(code(&out), 2);
    let out = draco(
        dir.path(),
        &["degrade", "--in", "east.jsonl", "--observability", "100", "--noise", "20",
          "--config", "cfg.json", "--out", "noisy.jsonl"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("noisy.jsonl").exists());
}

#[test]
fn evaluate_row_count_matches_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let out = draco(dir.path(), &["evaluate", "--config", "cfg.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    // Header + 2 metrics x 2 observability x 1 noise x 3 seeds.
    assert_eq!(csv.lines().count(), 1 + 12);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/results.json")).unwrap())
            .unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 12);
    assert_eq!(json["aggregates"].as_array().unwrap().len(), 4);
    assert_eq!(json["format_version"], 1);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    for round in ["a", "b"] {
        let out = draco(
            dir.path(),
            &["train", "--config", "cfg.json", "--out", round],
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for goal in ["east", "north"] {
        let name = format!("{goal}.policy.json");
        assert_eq!(
            fs::read(dir.path().join("a").join(&name)).unwrap(),
            fs::read(dir.path().join("b").join(&name)).unwrap(),
            "policy files differ between identical train runs"
        );
    }
    for round in ["ea", "eb"] {
        let out = draco(
            dir.path(),
            &["evaluate", "--config", "cfg.json", "--policies", "a", "--out", round],
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for name in ["results.csv", "results.json"] {
        assert_eq!(
            fs::read(dir.path().join("ea").join(name)).unwrap(),
            fs::read(dir.path().join("eb").join(name)).unwrap(),
            "{name} differs between identical evaluate runs"
        );
    }
}

#[test]
fn wcd_reports_the_fixture_value() {
    let dir = tempfile::tempdir().unwrap();
    // Start facing north into a 2-cell corridor, goals branching east/west:
    // both optimal plans begin with the same two forward moves.
    fs::write(
        dir.path().join("wcd.json"),
        r#"{
            "name": "corridor",
            "env": {"type": "gridworld", "width": 3, "height": 3,
                    "start": [1, 0, "N"]},
            "goals": [
                {"id": "west", "target": [0.0, 2.0], "tolerance": 0.0},
                {"id": "east", "target": [2.0, 2.0], "tolerance": 0.0}
            ],
            "out_dir": "out"
        }"#,
    )
    .unwrap();
    let out = draco(dir.path(), &["wcd", "--config", "wcd.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["wcd"], 2);
    assert_eq!(report["optimal_plan_length_per_goal"]["west"], 4);
    assert_eq!(report["ratio"], 0.5);
}
