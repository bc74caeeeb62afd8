use std::path::Path;
use std::process::{Command, Output};

fn sgdlab(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sgdlab"));
    cmd.args(args).env_remove("SGDLAB_OUT_DIR");
    if let Some(d) = out_dir {
        cmd.env("SGDLAB_OUT_DIR", d);
    }
    cmd.output().unwrap()
}

const GD: &str = r#"
[objective]
kind = "least-squares"
M = 32
d = 4
seed = 2
noise = 0.1

[trainer]
algorithm = "gd"
T = 10

[experiment]
output_dir = "results"
"#;

#[test]
fn run_writes_into_the_configured_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gd.toml");
    std::fs::write(&cfg, GD).unwrap();
    let out = sgdlab(&["run", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("results/run-00-seed0.csv").exists());
    assert!(dir.path().join("results/summary.json").exists());
}

#[test]
fn environment_overrides_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gd.toml");
    std::fs::write(&cfg, GD).unwrap();
    let target = dir.path().join("elsewhere");
    let out = sgdlab(&["run", cfg.to_str().unwrap()], Some(&target));
    assert_eq!(out.status.code(), Some(0));
    assert!(target.join("run-00-seed0.csv").exists());
    assert!(!dir.path().join("results").exists());
}

#[test]
fn invalid_config_exits_one_with_a_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, GD.replace("T = 10", "T = 10\nN = 2")).unwrap();
    let out = sgdlab(&["run", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 9"));
    let missing = sgdlab(&["run", "/nonexistent/x.toml"], None);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gd.toml");
    std::fs::write(&cfg, GD).unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = sgdlab(&["run", cfg.to_str().unwrap()], Some(&blocker.join("sub")));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_costs_reports_json() {
    let out = sgdlab(&["verify", "costs"], None);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["suite"], "costs");
    assert_eq!(report["passed"], true);
    assert_eq!(report["checks"][0]["name"], "example-full");
}

#[test]
fn unknown_suite_exits_one() {
    let out = sgdlab(&["verify", "speed"], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown suite"));
}

#[test]
fn costs_prints_the_table() {
    let out = sgdlab(&["costs", "--N", "2,4", "--lat", "3/2", "--tr", "1/4", "--sizes", "4"], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.starts_with("ps-single") && l.contains(" 20 ")));
    let json = sgdlab(&["costs", "--N", "8", "--lat", "1", "--tr", "0", "--json"], None);
    let rows: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert!(rows.as_array().unwrap().iter().all(|r| r["exact_match"] == true));
}
