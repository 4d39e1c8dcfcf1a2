use std::path::Path;
use std::process::{Command, Output};

use gbsde::experiments::report::{read_checks_csv, RunReport};

fn gbsde(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gbsde")).args(args).arg("--out").arg(out).output().expect("spawn gbsde")
}

#[test]
fn passing_run_writes_report_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = gbsde(&["qv-bound", "--steps", "5"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = RunReport::from_json_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.command, "qv-bound");
    assert_eq!(report.environment.tree_steps, 5);
    let csv = read_checks_csv(&std::fs::read_to_string(dir.path().join("checks.csv")).unwrap()).unwrap();
    assert_eq!(csv.len(), report.checks.len());
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS qv.saturated_equality"));
}

#[test]
fn invalid_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_config = dir.path().join("bad.json");
    std::fs::write(&bad_config, r#"{"solver": {"n_tiem": 10}}"#).unwrap();
    let cases: [&[&str]; 6] = [
        &["expect", "--problem", "nope"],
        &["sandwich", "--n", "4,2"],
        &["sandwich", "--n", "1,2"],
        &["gap", "--space", "4"],
        &["not-a-command"],
        &["expect", "--config", bad_config.to_str().unwrap()],
    ];
    for args in cases {
        let out = gbsde(args, &dir.path().join("out"));
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let missing = gbsde(&["expect", "--config", "/nonexistent/config.json"], &dir.path().join("out"));
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn failing_check_exits_one() {
    // an impossible tolerance on the lattice closed forms
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.json");
    std::fs::write(&cfg, r#"{"tolerances": {"expect_lattice_rel": 1e-9}}"#).unwrap();
    let out = gbsde(&["expect", "--config", cfg.to_str().unwrap(), "--steps", "20", "--space", "201"], dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL expect.lattice"));
}

#[test]
fn runs_are_reproducible_across_thread_counts() {
    let args = ["compare", "--seed", "7", "--steps", "40", "--space", "201"];
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let dir = tempfile::tempdir().unwrap();
        let mut a = args.to_vec();
        a.extend(["--threads", threads]);
        let out = gbsde(&a, dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(dir.path().join("checks.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
