use super::*;

const MINIMAL: &str = r#"{
  "name": "minimal",
  "manifold": {"type": "flat", "dim": 2},
  "metric": {"family": "riemannian", "model": "euclidean"},
  "submanifold": {"family": "point", "point": [0.0, 0.0]},
  "seed": 1
}"#;

fn with(edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
    edit(&mut v);
    v.to_string()
}

fn pointer_of_err(text: &str) -> (String, String) {
    match parse_scenario(text) {
        Err(Error::Config { pointer, message }) => (pointer, message),
        other => panic!("expected a configuration error, got {other:?}"),
    }
}

#[test]
fn minimal_document_gets_defaults() {
    let s = parse_scenario(MINIMAL).unwrap();
    assert_eq!(s.version, SCHEMA_VERSION);
    assert_eq!(s.grids, Grids::default());
    assert_eq!(s.tolerances, Tolerances::default());
    assert_eq!(s.tasks, vec![Task::Cutlocus]);
    assert_eq!(s.output.formats, vec![Format::Json, Format::Csv, Format::Svg]);
    assert_eq!(s.checks, Checks::default());
}

#[test]
fn misspelled_family_lists_the_options() {
    let text = with(|v| v["metric"] = serde_json::json!({"family": "randres", "b": [0.5, 0.0]}));
    let (pointer, message) = pointer_of_err(&text);
    assert!(pointer.starts_with("/metric"), "{pointer}");
    for family in ["riemannian", "randers", "minkowski-quartic"] {
        assert!(message.contains(family), "{message}");
    }
    let text = with(|v| v["submanifold"] = serde_json::json!({"family": "sphere", "point": [0.0]}));
    let (_, message) = pointer_of_err(&text);
    assert!(message.contains("axis-line") && message.contains("sampled-curve"), "{message}");
    let text = with(|v| v["metric"] = serde_json::json!({"family": "custom"}));
    assert!(pointer_of_err(&text).1.contains("library API"));
}

#[test]
fn validation_errors_name_their_pointer() {
    let text = with(|v| v["tolerances"] = serde_json::json!({"newton": -1e-10}));
    assert_eq!(pointer_of_err(&text).0, "/tolerances/newton");
    let text = with(|v| v["grids"] = serde_json::json!({"psi_count": 0}));
    assert_eq!(pointer_of_err(&text).0, "/grids/psi_count");
    let text = with(|v| v["manifold"] = serde_json::json!({"type": "torus", "dim": 2}));
    assert_eq!(pointer_of_err(&text).0, "/manifold/periods");
    let text = with(|v| v["metric"] = serde_json::json!({"family": "randers", "b": [0.5]}));
    assert_eq!(pointer_of_err(&text).0, "/metric/b");
    let text = with(|v| v["submanifold"] = serde_json::json!({"family": "circle", "center": [0.0, 0.0], "radius": 0.0}));
    assert_eq!(pointer_of_err(&text).0, "/submanifold/radius");
    let text = with(|v| v["tasks"] = serde_json::json!([]));
    assert_eq!(pointer_of_err(&text).0, "/tasks");
}

#[test]
fn unknown_keys_and_missing_seed_are_rejected() {
    let text = with(|v| v["grids"] = serde_json::json!({"theta_cuont": 3}));
    let (pointer, message) = pointer_of_err(&text);
    assert_eq!(pointer, "/grids/theta_cuont");
    assert!(message.contains("theta_cuont"), "{message}");
    let text = with(|v| {
        v.as_object_mut().unwrap().remove("seed");
    });
    assert!(pointer_of_err(&text).1.contains("seed"));
    assert!(matches!(parse_scenario("{"), Err(Error::Config { .. })));
}

#[test]
fn builtins_round_trip() {
    let list = list_builtin_scenarios();
    assert_eq!(list.len(), 8);
    for (name, description) in list {
        assert!(!description.is_empty());
        let s = builtin_scenario(name).unwrap();
        assert_eq!(s.name, name);
        assert!(s.tasks.contains(&Task::Theorems), "{name}");
        let again = parse_scenario(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(again, s);
        assert!(builtin_golden(name).is_some());
    }
    assert!(matches!(builtin_scenario("nowhere"), Err(Error::Config { .. })));
}

#[test]
fn schema_is_json_and_covers_the_top_level_keys() {
    let schema: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
    let props = schema["properties"].as_object().unwrap();
    let s = builtin_scenario("torus-point").unwrap();
    let v = serde_json::to_value(&s).unwrap();
    for key in v.as_object().unwrap().keys() {
        assert!(props.contains_key(key), "{key} missing from schema");
    }
}

#[test]
fn configuration_errors_from_construction() {
    let text = with(|v| v["metric"] = serde_json::json!({"family": "randers", "b": [1.2, 0.0]}));
    let s = parse_scenario(&text).unwrap();
    match run_scenario(&s, &RunOptions::default()) {
        Err(Error::Config { pointer, .. }) => assert_eq!(pointer, "/metric/b"),
        other => panic!("{other:?}"),
    }
    let text = with(|v| {
        v["manifold"] = serde_json::json!({"type": "sphere-stereo", "dim": 2});
    });
    let s = parse_scenario(&text).unwrap();
    assert!(matches!(run_scenario(&s, &RunOptions::default()), Err(Error::Config { .. })));
}

#[test]
fn small_run_is_deterministic() {
    let text = with(|v| {
        v["grids"] = serde_json::json!({"psi_count": 8, "horizon": 2.0, "fan_psi_count": 16});
        v["tasks"] = serde_json::json!(["validate", "cutlocus", "theorems"]);
    });
    let s = parse_scenario(&text).unwrap();
    let a = run_scenario(&s, &RunOptions::default()).unwrap();
    let b = run_scenario(&s, &RunOptions { jobs: Some(1), ..RunOptions::default() }).unwrap();
    assert_eq!(a.status, RunStatus::Success, "{}", a.manifest);
    assert_eq!(a.summary, b.summary);
    assert_eq!(a.file("cutlocus.json"), b.file("cutlocus.json"));
    assert_eq!(a.manifest["digest"], b.manifest["digest"]);
    let doc = a.document("cutlocus").unwrap();
    let recs = doc["records"].as_array().unwrap();
    assert_eq!(recs.len(), 8);
    assert!(recs.iter().all(|r| r["rho"] == "inf" && r["competitor"].is_null()));
    assert!(a.file("cutlocus.csv").unwrap().starts_with("theta,psi,rho,lambda,x1,x2,class\n"));
    assert!(a.file("cutlocus.svg").is_some());
    let c = run_scenario(&s, &RunOptions { seed: Some(99), ..RunOptions::default() }).unwrap();
    assert_eq!(c.summary["seed"], 99);
}
