//! Command-line contract: exit codes and machine-readable errors.

use std::process::Command;

use plumecal::pipeline::{Pipeline, PipelineConfig};

fn plumecal() -> Command {
    Command::new(env!("CARGO_BIN_EXE_plumecal"))
}

fn error_json(out: &std::process::Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let last = text.lines().last().unwrap_or_default();
    serde_json::from_str(last).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

#[test]
fn bundled_config_loads() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/pipeline.toml");
    let cfg = PipelineConfig::read(path).unwrap();
    cfg.validate().unwrap();
    let p = Pipeline::new(cfg).unwrap();
    assert_eq!(p.site.n_receptors(), 9);
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = plumecal().args(["--out"]).arg(dir.path()).arg("design").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "config");
}

#[test]
fn truth_outside_the_prior_is_a_contract_violation() {
    let dir = tempfile::tempdir().unwrap();
    let out = plumecal()
        .args(["--seed", "1", "--out"])
        .arg(dir.path())
        .args(["synthesize", "--theta", "0.9,0.1,-300"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_json(&out)["error"], "contract_violation");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = plumecal().arg("--frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "usage");
}

#[test]
fn missing_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = plumecal().args(["--seed", "1", "--out"]).arg(dir.path()).arg("train").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "io");
}

#[test]
fn design_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "seed = 5\n[design]\nk = 8\niterations = 50\n").unwrap();
    let out = plumecal()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("run"))
        .arg("design")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["k"], 8);
    assert!(dir.path().join("run/design.csv").is_file());
    assert!(dir.path().join("run/design.json").is_file());
}
