//! End-to-end tests of the `photonet` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use approx::assert_abs_diff_eq;
use serde_json::Value;

use photonet_core::distribution::closed_form_ideal;
use photonet_core::OutcomeDistribution;

fn photonet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_photonet"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Data rows of a CSV output: comment lines and the header stripped.
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn herald_reports_reference_values() {
    let out = photonet(&["herald"]);
    assert!(out.status.success());
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 3);

    let value = |name: &str| -> f64 {
        rows.iter()
            .find(|r| r[0] == name)
            .unwrap_or_else(|| panic!("row {name}"))[1]
            .parse()
            .unwrap()
    };
    assert_abs_diff_eq!(value("impurity_number_resolved"), 0.006875, epsilon = 1e-15);
    assert_abs_diff_eq!(value("impurity_threshold"), 0.013, epsilon = 1e-15);
    assert_abs_diff_eq!(value("repetition_rate_hz"), 3.43, epsilon = 1e-12);
}

#[test]
fn dist_json_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dist.json");
    let out = photonet(&[
        "dist",
        "--t",
        "0.3",
        "--format",
        "json",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let doc: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["meta"]["command"], "dist");
    assert_eq!(doc["meta"]["params"]["t"], 0.3);

    let parsed: OutcomeDistribution =
        serde_json::from_value(doc["data"]["distribution"].clone()).unwrap();
    let reference = closed_form_ideal(0.3, 0.0).unwrap();
    assert_eq!(parsed.party_count(), 3);
    // Serialization must preserve every probability exactly.
    assert!(parsed.max_abs_diff(&reference).unwrap() <= 1e-10);
}

#[test]
fn csv_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| -> Vec<u8> {
        let path = dir.path().join(name);
        let out = photonet(&[
            "lp-scan",
            "--t-min",
            "0.1",
            "--t-max",
            "0.9",
            "--t-step",
            "0.4",
            "--output",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(path).unwrap()
    };
    // Distinct output paths so the second run cannot replay the first's
    // sidecar.
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn lp_scan_flags_the_nonlocal_windows() {
    let out = photonet(&["lp-scan", "--t-min", "0.05", "--t-max", "0.95", "--t-step", "0.15"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for row in csv_rows(&text) {
        let t: f64 = row[0].parse().unwrap();
        let feasible: bool = row[1].parse().unwrap();
        let local = (0.215..=0.785).contains(&t);
        assert_eq!(feasible, local, "t = {t}");
    }
    // Boundary brackets are reported in the metadata.
    assert_eq!(text.lines().filter(|l| l.starts_with("# boundary:")).count(), 2);
}

#[test]
fn validation_error_is_machine_readable_and_exits_2() {
    let out = photonet(&["dist", "--t", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value =
        serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(err["kind"], "validation");
    assert!(err["error"].as_str().unwrap().contains("t"));
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"spec": {"pair_emission": 0.01, "detector_efficiency": 0.7, "pixel_count": 8, "pulse_rate": 1e7}, "bogus": 1}"#).unwrap();
    let out = photonet(&["herald", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value =
        serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(err["kind"], "validation");
}

#[test]
fn flags_override_config_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("herald.json");
    fs::write(
        &path,
        r#"{"spec": {"pair_emission": 0.01, "detector_efficiency": 0.5, "pixel_count": 8, "pulse_rate": 1e7}}"#,
    )
    .unwrap();
    let out = photonet(&[
        "herald",
        "--config",
        path.to_str().unwrap(),
        "--detector-efficiency",
        "0.7",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = csv_rows(&text);
    let q: f64 = rows.iter().find(|r| r[0] == "impurity_number_resolved").unwrap()[1]
        .parse()
        .unwrap();
    assert_abs_diff_eq!(q, 0.006875, epsilon = 1e-15);
}

fn run_small_scan(dir: &Path) -> Output {
    photonet(&[
        "lp-scan",
        "--t-min",
        "0.1",
        "--t-max",
        "0.5",
        "--t-step",
        "0.2",
        "--output",
        dir.join("scan.csv").to_str().unwrap(),
    ])
}

#[test]
fn resume_sidecar_replays_completed_points() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_small_scan(dir.path()).status.success());

    let sidecar = dir.path().join("scan.csv.resume.json");
    let mut state: Value =
        serde_json::from_str(&fs::read_to_string(&sidecar).unwrap()).unwrap();

    // Grid point 0.1 + 1 * 0.2, keyed exactly as the sweep formats it.
    let key = format!("t={:.16e}", 0.1f64 + 0.2f64);
    assert!(state["completed"].get(&key).is_some(), "key {key} missing");

    // Plant a sentinel row; a resumed run must replay it verbatim.
    state["completed"][&key] =
        serde_json::json!([0.1f64 + 0.2f64, true, 12345.0, 7]);
    fs::write(&sidecar, serde_json::to_string(&state).unwrap()).unwrap();
    assert!(run_small_scan(dir.path()).status.success());
    let text = fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert!(text.contains("1.2345000000000000e4"), "sentinel not replayed:\n{text}");

    // A config change invalidates the sidecar and the point is recomputed.
    state["config"]["params"]["tolerance"] = serde_json::json!(1e-8);
    fs::write(&sidecar, serde_json::to_string(&state).unwrap()).unwrap();
    assert!(run_small_scan(dir.path()).status.success());
    let text = fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert!(!text.contains("1.2345000000000000e4"), "stale sidecar reused:\n{text}");
}

#[test]
fn ring_distribution_mode_reports_exact_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ring.json");
    let out = photonet(&[
        "ring",
        "--parties",
        "3",
        "--t",
        "0.5",
        "--format",
        "json",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let doc: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let dist: OutcomeDistribution =
        serde_json::from_value(doc["data"]["distributions"]["3"].clone()).unwrap();
    assert_abs_diff_eq!(dist.total(), 1.0, epsilon = 1e-10);
    // Balanced splitters at zero phase: every allowed outcome has weight
    // 1/16.
    assert_abs_diff_eq!(dist.probability(&['0', 'L', 'L']).unwrap(), 1.0 / 16.0, epsilon = 1e-10);
}

#[test]
fn run_executes_a_job_description() {
    let dir = tempfile::tempdir().unwrap();
    let job = dir.path().join("job.json");
    fs::write(
        &job,
        r#"{
            "command": "fit",
            "params": {
                "t_min": 1.0, "t_max": 1.0, "t_step": 1.0,
                "visibilities": [1.0],
                "training": {
                    "batch_size": 64, "steps": 40, "restarts": 2,
                    "eval_samples": 5000, "seed": 7
                }
            }
        }"#,
    )
    .unwrap();
    let out = photonet(&["run", "--config", job.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 1);
    let distance: f64 = rows[0][2].parse().unwrap();
    assert!(distance.is_finite() && distance >= 0.0 && distance < 1.0);
}

#[test]
fn worker_pool_size_env_is_accepted() {
    let out = Command::new(env!("CARGO_BIN_EXE_photonet"))
        .env("PHOTONET_WORKERS", "1")
        .args(["herald"])
        .output()
        .expect("binary runs");
    assert!(out.status.success());
}
