//! Output bundles written to disk: hashes, determinism, exit status.

use finsler_cut::scenario::{builtin_scenario, parse_scenario, run_scenario, RunOptions, RunStatus, Task};
use sha2::{Digest, Sha256};

fn quick() -> finsler_cut::scenario::Scenario {
    let mut s = builtin_scenario("plane-circle").unwrap();
    s.tasks = vec![Task::Validate, Task::Cutlocus, Task::Classify];
    s.grids.theta_count = 4;
    s
}

#[test]
fn manifest_hashes_match_written_files() {
    let bundle = run_scenario(&quick(), &RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    bundle.write(dir.path()).unwrap();
    let hashes = bundle.manifest["files"].as_object().unwrap();
    for (name, h) in hashes {
        let bytes = std::fs::read(dir.path().join(name)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), h.as_str().unwrap(), "{name}");
    }
    for f in ["summary.json", "manifest.json", "cutlocus.json", "cutlocus.csv", "cutlocus.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("cutlocus.csv")).unwrap();
    assert!(csv.starts_with("theta,psi,rho,lambda,x1,x2,class"));
    assert_eq!(csv.lines().count(), 1 + 8);
}

#[test]
fn runs_are_deterministic() {
    let a = run_scenario(&quick(), &RunOptions::default()).unwrap();
    let b = run_scenario(&quick(), &RunOptions { jobs: Some(2), ..Default::default() }).unwrap();
    assert_eq!(a.status, RunStatus::Success);
    assert_eq!(a.manifest["digest"], b.manifest["digest"]);
    let strip = |b: &finsler_cut::scenario::OutputBundle| {
        b.files.iter().filter(|(k, _)| *k != "manifest.json").map(|(k, v)| (k.clone(), v.clone())).collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn seed_override_is_recorded() {
    let b = run_scenario(&quick(), &RunOptions { seed: Some(99), ..Default::default() }).unwrap();
    assert_eq!(b.summary["seed"], 99);
    assert_eq!(b.manifest["seed"], 99);
}

#[test]
fn formats_limit_emitted_files() {
    let mut s = quick();
    s.output.formats = vec![finsler_cut::scenario::Format::Csv];
    let b = run_scenario(&s, &RunOptions::default()).unwrap();
    let names: Vec<&str> = b.files.keys().map(String::as_str).collect();
    assert_eq!(names, ["cutlocus.csv", "manifest.json", "summary.json"]);
}

#[test]
fn missing_seed_is_rejected() {
    let text = r#"{"name": "x", "manifold": {"type": "flat", "dim": 2},
        "metric": {"family": "riemannian", "model": "euclidean"},
        "submanifold": {"family": "point", "point": [0, 0]}}"#;
    let e = parse_scenario(text).unwrap_err();
    assert!(e.to_string().contains("seed"), "{e}");
}
