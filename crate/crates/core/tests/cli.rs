use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn infosel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infosel"))
        .args(args)
        .env("INFOSEL_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Nineteen confident correct calibration rows, one confident error, and
/// test rows of varying confidence.
fn fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let mut probs = String::from("x_id,p_1,p_2,p_3\n");
    let mut labels = String::from("x_id,y\n");
    for i in 0..20 {
        probs.push_str(&format!("c{i},0.9,0.06,0.04\n"));
        labels.push_str(&format!("c{i},{}\n", if i == 7 { 2 } else { 1 }));
    }
    let mut test = String::from("x_id,p_1,p_2,p_3\n");
    for (i, row) in ["0.9,0.06,0.04", "0.5,0.45,0.05", "0.34,0.33,0.33", "0.1,0.8,0.1"]
        .iter()
        .enumerate()
    {
        test.push_str(&format!("t{i},{row}\n"));
    }
    (
        write(dir, "cal.csv", &probs),
        write(dir, "labels.csv", &labels),
        write(dir, "test.csv", &test),
    )
}

fn select(dir: &Path, files: &(PathBuf, PathBuf, PathBuf), extra: &[&str]) -> Output {
    let (cal, labels, test) = files;
    let mut args = vec![
        "select",
        "--cal-probs",
        cal.to_str().unwrap(),
        "--cal-labels",
        labels.to_str().unwrap(),
        "--test-probs",
        test.to_str().unwrap(),
        "--alpha",
        "0.2",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    infosel(&args)
}

#[test]
fn select_writes_selection_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let files = fixture(dir.path());
    let out = select(dir.path(), &files, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let selection = read_json(&dir.path().join("selection.json"));
    assert_eq!(selection["mu_alpha"], 0.0);
    assert_eq!(selection["method"], "threshold-form");
    let ids: Vec<&str> = selection["selected"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["x_id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["t0", "t1", "t2", "t3"]);
    assert_eq!(selection["selected"][3]["set"], serde_json::json!([2]));

    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "select");
    assert!(manifest["versions"]["infosel"].is_string());
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn methods_write_identical_selections() {
    let dir = tempfile::tempdir().unwrap();
    let files = fixture(dir.path());
    let mut payloads = Vec::new();
    for method in ["all-intersections", "envelope-traversal", "threshold-form"] {
        let out = select(dir.path(), &files, &["--method", method]);
        assert_eq!(out.status.code(), Some(0));
        let mut selection = read_json(&dir.path().join("selection.json"));
        assert_eq!(selection["method"], method);
        selection.as_object_mut().unwrap().remove("method");
        payloads.push(selection);
    }
    assert_eq!(payloads[0], payloads[1]);
    assert_eq!(payloads[1], payloads[2]);
}

#[test]
fn malformed_row_is_reported_with_its_id() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = fixture(dir.path());
    files.2 = write(
        dir.path(),
        "bad.csv",
        "x_id,p_1,p_2,p_3\nt0,0.9,0.06,0.04\nbroken-row,0.6,0.4,0.2\n",
    );
    let out = select(dir.path(), &files, &[]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("broken-row") && stderr.contains("line 3"), "{stderr}");
}

#[test]
fn no_qualifying_multiplier_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut probs = String::from("x_id,p_1,p_2,p_3\n");
    let mut labels = String::from("x_id,y\n");
    for i in 0..10 {
        probs.push_str(&format!("c{i},0.9,0.05,0.05\n"));
        labels.push_str(&format!("c{i},3\n"));
    }
    let files = (
        write(dir.path(), "cal.csv", &probs),
        write(dir.path(), "labels.csv", &labels),
        write(dir.path(), "test.csv", "x_id,p_1,p_2,p_3\nt0,0.9,0.05,0.05\n"),
    );
    let out = select(dir.path(), &files, &["--family", "singletons"]);
    assert_eq!(out.status.code(), Some(3));
    let selection = read_json(&dir.path().join("selection.json"));
    assert_eq!(selection["mu_alpha"], "inf");
    assert!(selection["selected"].as_array().unwrap().is_empty());
}

#[test]
fn non_nested_family_names_the_offending_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = fixture(dir.path());
    files.2 = write(dir.path(), "test.csv", "x_id,p_1,p_2,p_3\nodd-one,0.4,0.35,0.25\n");
    let family = write(
        dir.path(),
        "family.json",
        r#"{"kind": "explicit", "sets": [[1], [2], [3], [2, 3]]}"#,
    );
    let out = select(dir.path(), &files, &["--family", family.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("odd-one") && stderr.contains("nestedness"), "{stderr}");
}

#[test]
fn calibration_rule_applies_to_new_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (cal, labels, test) = fixture(dir.path());
    let out = infosel(&[
        "cal-rule",
        "--cal-probs",
        cal.to_str().unwrap(),
        "--cal-labels",
        labels.to_str().unwrap(),
        "--alpha",
        "0.2",
        "--apply",
        test.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rule = read_json(&dir.path().join("rule.json"));
    assert_eq!(rule["mu_alpha"], 0.0);
    let applied = read_json(&dir.path().join("applied.json"));
    assert_eq!(applied["selected"].as_array().unwrap().len(), 4);
}

#[test]
fn oracle_reports_both_regimes() {
    let dir = tempfile::tempdir().unwrap();
    let atoms = write(dir.path(), "atoms.csv", "mass,p_1,p_2\n0.5,0.95,0.05\n0.5,0.6,0.4\n");
    let report = dir.path().join("report.json");
    let out = infosel(&[
        "oracle",
        "--atoms",
        atoms.to_str().unwrap(),
        "--family",
        "singletons",
        "--alpha",
        "0.1",
        "--test-size",
        "10",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let value = read_json(&report);
    assert_eq!(value["regime"], "regular");
    assert!(value["report"]["mfcr"].as_f64().unwrap() <= 0.1);

    let flat = write(dir.path(), "flat.csv", "mass,p_1,p_2\n1,0.6,0.4\n");
    let out = infosel(&[
        "oracle",
        "--atoms",
        flat.to_str().unwrap(),
        "--family",
        "singletons",
        "--alpha",
        "0.1",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let value = read_json(&report);
    assert_eq!(value["regime"], "degenerate");
    assert_eq!(value["trivial_policy"][0]["selected"], false);
}

#[test]
fn envelope_and_shift_fit_write_json() {
    let dir = tempfile::tempdir().unwrap();
    let (cal, labels, _) = fixture(dir.path());
    let envelopes = dir.path().join("env.json");
    let out = infosel(&[
        "envelope",
        "--probs",
        cal.to_str().unwrap(),
        "--alpha",
        "0.1",
        "--out",
        envelopes.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let dump = read_json(&envelopes);
    assert_eq!(dump.as_array().unwrap().len(), 20);
    assert_eq!(dump[0]["nested"], true);

    let shift = dir.path().join("shift.json");
    let out = infosel(&[
        "shift-fit",
        "--probs",
        cal.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--out",
        shift.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let coeffs = read_json(&shift);
    let b: Vec<f64> = coeffs["b"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(b.len(), 3);
    assert!(b.iter().sum::<f64>().abs() < 1e-9);
}

#[test]
fn simulate_writes_metrics_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "config.json",
        r#"{
  "scenarios": [
    {"id": "small", "snr": 2.0, "pi": [0.25, 0.25, 0.25, 0.25], "goal": "nontrivial", "n": 50, "m": 50}
  ],
  "methods": ["og_infosp", "classic"],
  "reps": 3,
  "alpha": 0.1,
  "seed": 7
}"#,
    );
    let out = infosel(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("scenario,method,rep,fcp,tcp,n_selected,error"));
    assert_eq!(lines.count(), 6);
    let aggregate = read_json(&dir.path().join("aggregate.json"));
    assert_eq!(aggregate["generator"], "ChaCha8");
    assert_eq!(aggregate["aggregates"].as_array().unwrap().len(), 2);
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["seed"], 7);
}

#[test]
fn bad_arguments_exit_two() {
    let out = infosel(&["select", "--alpha", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
}
