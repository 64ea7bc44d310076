use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_wxverify"));
    c.env_remove("RB_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn crate_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// One synthesized dataset shared by the tests in this binary.
fn dataset() -> &'static (TempDir, PathBuf) {
    static DATA: OnceLock<(TempDir, PathBuf)> = OnceLock::new();
    DATA.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let scenario = crate_file("scenarios/demo.json");
        let out = ok(&["synth", "--scenario", s(&scenario), "--out", s(&data)]);
        let manifest = PathBuf::from(String::from_utf8(out.stdout).unwrap().trim());
        assert!(manifest.is_file());
        (dir, manifest)
    })
}

fn validate(card: &Path) -> Value {
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(crate_file("schema/scorecard.schema.json")).unwrap()).unwrap();
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(card).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(&doc).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{}: {errors:#?}", card.display());
    doc
}

#[test]
fn evaluate_twice_is_byte_identical_and_valid() {
    let (dir, manifest) = dataset();
    let a = dir.path().join("a/card.json");
    let b = dir.path().join("b/card.json");
    ok(&["evaluate", "--manifest", s(manifest), "--out", s(&a)]);
    ok(&["--workers", "1", "evaluate", "--manifest", s(manifest), "--out", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let doc = validate(&a);
    let metrics = doc["metrics"].as_array().unwrap();
    let lead0: Vec<&Value> = metrics
        .iter()
        .filter(|m| m["model"] == "persistence" && m["lead_hours"] == 0 && m["metric"] == "WRMSE")
        .collect();
    assert_eq!(lead0.len(), 4);
    assert!(lead0.iter().all(|m| m["value"] == 0.0), "{lead0:?}");
    assert!(!doc["spectra"].as_array().unwrap().is_empty());
}

#[test]
fn workers_env_fallback_gives_same_bytes() {
    let (dir, manifest) = dataset();
    let a = dir.path().join("env_a.json");
    let b = dir.path().join("env_b.json");
    ok(&["evaluate", "--manifest", s(manifest), "--out", s(&a), "--leads", "0,24"]);
    let out = bin()
        .env("RB_WORKERS", "2")
        .args(["evaluate", "--manifest", s(manifest), "--out", s(&b), "--leads", "0,24"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn side_commands_write_valid_scorecards() {
    let (dir, manifest) = dataset();
    let ex = dir.path().join("side/extremes.json");
    ok(&["extremes", "--manifest", s(manifest), "--out", s(&ex), "--leads", "1,3", "--gamma", "0.5"]);
    let doc = validate(&ex);
    assert!(doc["extremes"].as_array().unwrap().iter().any(|e| e["region"] == "north"));
    assert!(dir.path().join("side/extremes_events.csv").is_file());

    let cy = dir.path().join("side/cyclones.json");
    ok(&["cyclones", "--manifest", s(manifest), "--out", s(&cy)]);
    let doc = validate(&cy);
    let smoothed: Vec<&Value> = doc["cyclones"].as_array().unwrap().iter().filter(|c| c["model"] == "smoothed").collect();
    assert!(smoothed.iter().all(|c| c["n_cases"] == 0 || c["bias_p_hpa"].as_f64().unwrap() > 0.0));
    assert!(dir.path().join("side/cyclones_tracks.csv").is_file());

    let st = dir.path().join("side/stations.json");
    ok(&["stations", "--manifest", s(manifest), "--out", s(&st), "--leads", "0,24"]);
    let doc = validate(&st);
    assert_eq!(doc["qc"]["WS10"]["replaced"], 1);

    let tables = dir.path().join("tables");
    let out = ok(&["report", "--scorecard", s(&st), "--out", s(&tables)]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("QC WS10"));
    for f in ["stations.csv", "qc.csv"] {
        assert!(tables.join(f).is_file(), "{f}");
    }
}

/// The shared manifest with every path made absolute.
fn absolute_manifest(manifest: &Path) -> Value {
    let base = manifest.parent().unwrap();
    let abs = |v: &mut Value| {
        let p = base.join(v.as_str().unwrap());
        *v = Value::String(p.to_string_lossy().into_owned());
    };
    let mut m: Value = serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
    let obj = m.as_object_mut().unwrap();
    for key in ["truth", "climatology", "thresholds", "best_track"] {
        if let Some(v) = obj.get_mut(key) {
            abs(v);
        }
    }
    obj["models"].as_object_mut().unwrap().values_mut().for_each(abs);
    abs(&mut obj["history"]["pattern"]);
    abs(&mut obj["stations"]["meta"]);
    abs(&mut obj["stations"]["obs"]);
    m
}

#[test]
fn missing_model_file_exits_two_and_names_it() {
    let (dir, manifest) = dataset();
    let copy = dir.path().join("broken");
    copy_tree(&manifest.parent().unwrap().join("models/perfect"), &copy.join("perfect"));
    let victim = copy.join("perfect/2024080200/T2M_048.rbg");
    std::fs::remove_file(&victim).unwrap();
    let mut m = absolute_manifest(manifest);
    m["models"]["perfect"] = Value::String(format!("{}/{{model}}/{{init}}/{{var}}_{{lead}}.rbg", copy.display()));
    let path = copy.join("manifest.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&m).unwrap()).unwrap();
    let out = run(&["evaluate", "--manifest", s(&path), "--out", s(&dir.path().join("x.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("T2M_048.rbg"), "{err}");
}

#[test]
fn missing_history_for_extremes_exits_three() {
    let (dir, manifest) = dataset();
    let mut m = absolute_manifest(manifest);
    let obj = m.as_object_mut().unwrap();
    obj.remove("history");
    obj.remove("thresholds");
    let path = dir.path().join("no_history.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&m).unwrap()).unwrap();
    let out = run(&["extremes", "--manifest", s(&path), "--out", s(&dir.path().join("nh.json"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("history"));
}

#[test]
fn rebuilt_climatology_matches_synthesized_stores() {
    let (dir, manifest) = dataset();
    let rebuilt = dir.path().join("rebuilt");
    let out = ok(&["build-climatology", "--manifest", s(manifest), "--out", s(&rebuilt)]);
    let new_manifest = PathBuf::from(String::from_utf8(out.stdout).unwrap().trim());
    let a = dir.path().join("clim_a.json");
    let b = dir.path().join("clim_b.json");
    ok(&["evaluate", "--manifest", s(manifest), "--out", s(&a), "--leads", "24"]);
    ok(&["evaluate", "--manifest", s(&new_manifest), "--out", s(&b), "--leads", "24"]);
    let (a, b) = (validate(&a), validate(&b));
    assert_eq!(a["provenance"]["thresholds_sha256"], b["provenance"]["thresholds_sha256"]);
    assert_eq!(a["provenance"]["climatology_sha256"], b["provenance"]["climatology_sha256"]);
    assert_eq!(a["metrics"], b["metrics"]);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["evaluate"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let (dir, manifest) = dataset();
    let out = run(&["extremes", "--manifest", s(manifest), "--out", s(&dir.path().join("g.json")), "--gamma", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["evaluate", "--manifest", "/nonexistent/manifest.json", "--out", "/tmp/never.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("/nonexistent/manifest.json"));
}

fn copy_tree(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), &target).unwrap();
        }
    }
}
