//! End-to-end checks of the `fedairaoi` binary: artifact layout, exit
//! codes, and determinism through the process boundary.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fedairaoi"))
}

#[test]
fn run_writes_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let status = bin()
            .args(["run", "--seed", "3", "--rounds", "5", "--devices", "6", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["rounds.csv", "paoi.csv", "devices.csv", "summary.json"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["policy"], "fedairaoi");
    assert_eq!(summary["config"]["rounds"], 5);
}

#[test]
fn run_requires_a_seed() {
    let output = bin().args(["run"]).output().unwrap();
    assert!(!output.status.success());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "devices = 4\nnot_a_key = 1\n").unwrap();
    let output = bin().args(["run", "--seed", "1", "--config"]).arg(&cfg).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("error"));
}

#[test]
fn bound_prints_a_json_report() {
    let output =
        bin().args(["bound", "--mse", "0.1", "--rounds", "10"]).output().unwrap();
    assert!(output.status.success());
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert!(report["total"].as_f64().unwrap().is_finite());
    assert_eq!(report["mean_mse"].as_f64().unwrap(), 0.1);
}
