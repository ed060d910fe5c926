use std::process::{Command, Output};

use bitb::exit;

fn bitb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bitb")).args(args).output().unwrap()
}

#[test]
fn depth_above_the_cap_is_a_usage_error() {
    let out = bitb(&["--depth", "9x4", "--emit-config"]);
    assert_eq!(out.status.code(), Some(exit::USAGE));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    std::fs::write(&path, "suite = properties\ncolour = blue\n").unwrap();
    let out = bitb(&["--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(exit::USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn properties_with_unit_weights_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = bitb(&["--suite", "properties", "--weights", "one", "--trials", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(exit::OK), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("PASS parseval"), "{stdout}");
    assert!(!stdout.contains("FAIL"));
    for file in ["metrics.json", "summary.json", "properties.csv", "coefficients.json", "weights.json"] {
        assert!(dir.path().join(file).is_file(), "{file} missing");
    }
    let metrics: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["passed"], true);
    assert!(metrics["config"].get("out").is_none());
}

#[test]
fn failing_invariant_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = bitb(&["--suite", "decay", "--depth", "5x5", "--r", "6", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(exit::INVARIANT_FAILED));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL decay_slope"));
}

#[test]
fn emitted_config_round_trips_through_the_binary() {
    let first = bitb(&["--suite", "wbp", "--depth", "3x4", "--seed", "12", "--weights", "random:0.4,3", "--emit-config"]);
    assert_eq!(first.status.code(), Some(exit::OK));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.conf");
    std::fs::write(&path, &first.stdout).unwrap();
    let second = bitb(&["--config", path.to_str().unwrap(), "--emit-config"]);
    assert_eq!(second.status.code(), Some(exit::OK));
    assert_eq!(first.stdout, second.stdout);
}
