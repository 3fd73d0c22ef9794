use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mppi-ipddp")).args(args).output().unwrap()
}

fn run_into(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn mobile_robot_run_writes_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(dir.path(), &["--scenario", "mobile_robot", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trajectory.csv", "corridors.csv", "trace.jsonl", "metadata.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,x0,x1,x2,u0,u1\n"));
    assert_eq!(traj.lines().count(), 1 + 51);
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("metadata.json")).unwrap()).unwrap();
    assert!(meta["iteration_seconds"].as_array().is_some_and(|a| !a.is_empty()));
    assert!(String::from_utf8_lossy(&o.stdout).contains("status: Converged"));
}

#[test]
fn missing_scenario_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(dir.path(), &["--scenario", "/nonexistent/plan.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no scenario file"));
    let o = run(&["run"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_scenario_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    fs::write(&file, "model = \"diff_drive\"\nhorizon = \"long\"\n").unwrap();
    let o = run_into(&dir.path().join("out"), &["--scenario", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn one_outer_iteration_exits_with_max_iters() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(dir.path(), &["--scenario", "quadrotor", "--max-outer", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("trajectory.csv").is_file());
}

#[test]
fn trace_none_skips_the_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(dir.path(), &["--scenario", "mobile_robot", "--trace", "none"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!dir.path().join("trace.jsonl").exists());
    assert!(dir.path().join("trajectory.csv").is_file());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run_into(a.path(), &["--scenario", "quadrotor", "--threads", "1"]).status.code(), Some(0));
    assert_eq!(run_into(b.path(), &["--scenario", "quadrotor", "--threads", "3"]).status.code(), Some(0));
    for f in ["trajectory.csv", "corridors.csv", "trace.jsonl"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn show_prints_a_loadable_scenario() {
    let o = run(&["show", "mobile_robot"]);
    assert_eq!(o.status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("copy.toml");
    fs::write(&file, &o.stdout).unwrap();
    let o = run_into(&dir.path().join("out"), &["--scenario", file.to_str().unwrap(), "--max-outer", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(run(&["show", "submarine"]).status.code(), Some(1));
}
