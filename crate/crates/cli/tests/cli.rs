use std::path::PathBuf;
use std::process::{Command, Output};

fn out_dir(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("polaron-cli-{tag}-{}", std::process::id()))
}

fn polaron(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polaron")).args(args).output().unwrap()
}

#[test]
fn empty_alpha_grid_is_a_config_error() {
    let dir = out_dir("empty");
    let out = polaron(&["recursion", "--out", dir.to_str().unwrap(), "--override", "recursion.alpha_count=0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.join("manifest.json").exists());
}

#[test]
fn unknown_override_key_is_rejected() {
    let dir = out_dir("unknown");
    let out = polaron(&["spectral", "--out", dir.to_str().unwrap(), "--override", "spectral.beta=3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn breached_tolerance_exits_with_two() {
    let dir = out_dir("breach");
    let out = polaron(&["spectral", "--out", dir.to_str().unwrap(), "--override", "spectral.max_diff=1e-9"]);
    assert_eq!(out.status.code(), Some(2));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["checks"].as_array().unwrap().iter().any(|c| c["passed"] == false));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn clean_run_writes_hashed_artifacts() {
    let dir = out_dir("clean");
    let out = polaron(&["recursion", "--seed", "5", "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["command"], "recursion");
    for a in manifest["artifacts"].as_array().unwrap() {
        let bytes = std::fs::read(dir.join(a["name"].as_str().unwrap())).unwrap();
        assert_eq!(a["sha256"].as_str().unwrap(), polaron_cli::output::sha256_hex(&bytes));
    }
    std::fs::remove_dir_all(dir).unwrap();
}
