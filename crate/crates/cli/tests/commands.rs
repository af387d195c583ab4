use std::fs;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_decopt");

const SWEEP: &str = r#"{
    "version": 1,
    "base": {
        "version": 1,
        "seed": 3,
        "problem": {"generator": {"family": "quadratic", "nodes": 1, "dim": 4, "mu": 0.1, "l": 1.0}},
        "algorithm": {"name": "accelerated_gradient"},
        "budget": {"max_rounds": 2000, "target_eps": 1e-8}
    },
    "axes": [{"pointer": "/problem/generator/mu", "values": [0.1, 0.01, 0.001, 0.0001]}],
    "fits": [{"x": {"source": "axis", "pointer": "/problem/generator/mu"}, "y": {"source": "last", "column": "round"}}]
}"#;

#[test]
fn sweep_then_report_prints_the_slope_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.config.json");
    fs::write(&config, SWEEP).unwrap();
    let out = dir.path().join("sweep");
    let status = Command::new(BIN)
        .args(["sweep", "--assert", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("sweep.json").exists());

    let report = Command::new(BIN).arg("report").arg("--in").arg(&out).output().unwrap();
    assert!(report.status.success());
    let text = String::from_utf8(report.stdout).unwrap();
    let row = text.lines().find(|l| l.starts_with("last:round")).expect("fit row");
    let slope: f64 = row.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!((slope + 0.5).abs() < 0.15, "rounds should grow as mu^-1/2, got {slope}");
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"version": 99}"#).unwrap();
    let status = Command::new(BIN).args(["run", "--config"]).arg(&config).status().unwrap();
    assert!(!status.success());
    let status = Command::new(BIN).arg("report").status().unwrap();
    assert!(!status.success());
}

#[test]
fn assert_mode_runs_selected_criteria() {
    let out = Command::new(BIN).args(["report", "--assert", "--only", "8"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert!(text.contains("[PASS]  8"));
    assert!(text.contains("acceptance: 1 passed, 0 failed"));
}

#[test]
fn sample_configs_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let text = fs::read_to_string(entry.unwrap().path()).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        if value.get("base").is_some() {
            decopt::harness::SweepConfig::from_json(&text).unwrap();
        } else {
            decopt::harness::ExperimentConfig::from_json(&text).unwrap().validate().unwrap();
        }
        seen += 1;
    }
    assert!(seen >= 2);
}
