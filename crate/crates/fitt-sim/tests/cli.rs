//! Binary-level behaviour: exit codes, file output, determinism of the
//! exported CSV, and TOML scenario ingestion.

use std::process::Command;

fn run(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fitt-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let out = run(&["--scenario", "no_such_scenario"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("fake_attack"), "usage should list builtins");
}

#[test]
fn duration_override_is_validated() {
    // A two-second run cannot contain an attack that starts at second 3.
    let out = run(&["--scenario", "fake_attack", "--duration", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn same_flags_produce_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, _) in [(&a, 0), (&b, 1)] {
        let out = run(&[
            "--scenario",
            "fake_attack",
            "--seed",
            "7",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let first = std::fs::read(&a).unwrap();
    let second = std::fs::read(&b).unwrap();
    assert!(!first.is_empty());
    assert_eq!(first, second);
}

#[test]
fn check_flag_gates_the_exit_code() {
    let out = run(&["--scenario", "fake_attack", "--check"]);
    assert_eq!(out.status.code(), Some(0), "checks should pass");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[PASS]"));
    assert!(!stdout.contains("[FAIL]"));
}

#[test]
fn toml_scenario_files_load_and_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.toml");
    std::fs::write(
        &path,
        r#"
duration = 3.0
seed = 5

[topology]
kind = "custom"

[[topology.routers]]
id = "gw"
edge = true

[[producers]]
id = "srv"
attach = "node:gw"
prefix = "/svc/data"
capacity = 50.0

[[consumers]]
id = "cli"
attach = "node:gw"
prefix = "/svc/data"
rate = 10.0
class = "i3"
"#,
    )
    .unwrap();
    let csv = dir.path().join("out.csv");
    let out = run(&[
        "--scenario",
        path.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("time_bin,node,prefix,metric,value\n"));
    assert!(text.contains(",srv,/svc/data,received,"));
}

#[test]
fn malformed_scenario_files_are_rejected_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "duration = -3.0\nproducers = []\n").unwrap();
    let out = run(&["--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("duration"), "stderr: {stderr}");
}
