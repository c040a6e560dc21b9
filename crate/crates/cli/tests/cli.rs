use std::process::Command;

fn fincut() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fincut"))
}

#[test]
fn lists_builtins() {
    let out = fincut().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.contains("torus-point"));
}

#[test]
fn validate_reports_pointer_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"name": "bad", "manifold": {"type": "flat", "dim": 2},
            "metric": {"family": "riemannian", "model": "euclidean"},
            "submanifold": {"family": "point", "point": [0, 0]},
            "grids": {"theta_cuont": 3}, "seed": 1}"#,
    )
    .unwrap();
    let out = fincut().arg("validate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/grids/theta_cuont"));
}

#[test]
fn unknown_scenario_is_a_config_error() {
    let out = fincut().args(["run", "no-such-scenario"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_writes_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let out = fincut()
        .args(["run", "randers-plane-point", "--seed", "5", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["exit_code"], 0);
    assert!(dir.path().join("cutlocus.csv").exists());
}

#[test]
fn golden_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let golden = dir.path().join("g.json");
    std::fs::write(&golden, r#"{"scenario": "randers-plane-point", "seed": 0, "tasks": {}}"#).unwrap();
    let out = fincut().args(["golden", "randers-plane-point", "--golden"]).arg(&golden).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("mismatch"));
}
