//! End-to-end tests of the command-line binary: exit codes, file formats,
//! and report determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_delaynet")
}

fn networks_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("networks")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("delaynet_cli_{name}"));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn analyze_birth_death_exits_zero_with_thm1() {
    let net = networks_dir().join("birth_death.rn");
    let wit = networks_dir().join("birth_death.witness");
    let out = run(&[
        "analyze",
        "--network", net.to_str().unwrap(),
        "--witness", wit.to_str().unwrap(),
        "--history", "2",
        "--t-end", "40",
        "--no-meta",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["schema"], "delaynet/1");
    assert_eq!(report["certificate"]["theorem"], "thm1");
}

#[test]
fn analyze_kinase_chain_exits_zero_with_thm3() {
    let net = networks_dir().join("pak1.rn");
    let wit = networks_dir().join("pak1.witness");
    let dir = tmp_dir("pak1");
    let report_path = dir.join("report.json");
    let out = run(&[
        "analyze",
        "--network", net.to_str().unwrap(),
        "--witness", wit.to_str().unwrap(),
        "--history", "1.4,0.8,1.2",
        "--t-end", "60",
        "--no-meta",
        "--out", report_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["certificate"]["theorem"], "thm3");
    // The referenced Lyapunov trace file exists and has the CSV header.
    let trace = report["runs"][0]["v_trace_file"].as_str().unwrap();
    let body = std::fs::read_to_string(trace).unwrap();
    assert!(body.starts_with("t,V,dVdt"));
}

#[test]
fn malformed_input_exits_one_with_line_diagnostic() {
    let dir = tmp_dir("bad");
    let bad = dir.join("bad.rn");
    std::fs::write(&bad, "species A\nreaction A -> B : k=1 tau=0\n").unwrap();
    let out = run(&["structure", "--network", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "stderr: {err}");
}

#[test]
fn classification_failure_exits_two() {
    let net = networks_dir().join("birth_death.rn");
    let out = run(&["classify", "--network", net.to_str().unwrap(), "--no-meta"]);
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["theorem"], "none");
    assert!(!report["rejections"].as_array().unwrap().is_empty());
}

#[test]
fn structure_and_conjugacy_reports() {
    let net = networks_dir().join("cubic_branch.rn");
    let wit = networks_dir().join("cubic_branch.witness");
    let out = run(&["structure", "--network", net.to_str().unwrap(), "--no-meta"]);
    assert!(out.status.success());
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["p"], 6);
    assert_eq!(rep["s"], 2);
    let out2 = run(&[
        "conjugacy",
        "--network", net.to_str().unwrap(),
        "--witness", wit.to_str().unwrap(),
        "--no-meta",
    ]);
    assert!(out2.status.success());
    let rep2: serde_json::Value = serde_json::from_slice(&out2.stdout).unwrap();
    assert_eq!(rep2["kind"], "dynamically_equivalent");
}

#[test]
fn simulate_writes_trajectory_csv() {
    let net = networks_dir().join("kinase_degenerate.rn");
    let dir = tmp_dir("simulate");
    let csv_path = dir.join("run.csv");
    let out = run(&[
        "simulate",
        "--network", net.to_str().unwrap(),
        "--history", "0.1,0.9,11.2",
        "--t-end", "100",
        "--step", "0.01",
        "--out", csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let body = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next().unwrap(), "t,x_E,x_EP,x_EPP");
    let last = body.lines().last().unwrap();
    let fields: Vec<f64> = last.split(',').map(|f| f.parse().unwrap()).collect();
    assert!((fields[0] - 100.0).abs() < 1e-9);
    for (a, b) in fields[1..].iter().zip(&[1.62, 2.6245, 2.6245]) {
        assert!((a - b).abs() < 1e-2, "endpoint {fields:?}");
    }
}

#[test]
fn simulate_json_format() {
    let net = networks_dir().join("birth_death.rn");
    let out = run(&[
        "simulate",
        "--network", net.to_str().unwrap(),
        "--history", "2",
        "--t-end", "1",
        "--step", "0.01",
        "--format", "json",
    ]);
    assert!(out.status.success());
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["schema"], "delaynet/1");
    assert_eq!(rep["species"][0], "S1");
    assert!(rep["rows"].as_array().unwrap().len() > 100);
}

#[test]
fn simulate_zero_horizon_keeps_history_rows_only() {
    let net = networks_dir().join("birth_death.rn");
    let out = run(&[
        "simulate",
        "--network", net.to_str().unwrap(),
        "--history", "2",
        "--t-end", "0",
        "--step", "0.01",
    ]);
    assert!(out.status.success());
    let body = String::from_utf8_lossy(&out.stdout);
    assert_eq!(body.lines().count(), 3); // header + two history nodes
}

#[test]
fn reports_are_byte_identical_without_meta() {
    let net = networks_dir().join("birth_death.rn");
    let wit = networks_dir().join("birth_death.witness");
    let args = [
        "classify",
        "--network", net.to_str().unwrap(),
        "--witness", wit.to_str().unwrap(),
        "--no-meta",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn equilibrium_command_finds_level_set_point() {
    let net = networks_dir().join("kinase_degenerate.rn");
    let wit = networks_dir().join("kinase_degenerate.witness");
    let out = run(&[
        "equilibrium",
        "--network", net.to_str().unwrap(),
        "--witness", wit.to_str().unwrap(),
        "--history", "0.1,0.4,2.61",
        "--no-meta",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let x: Vec<f64> = rep["equilibrium"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (a, b) in x.iter().zip(&[0.8, 0.64, 0.64]) {
        assert!((a - b).abs() < 5e-3, "{x:?}");
    }
}

#[test]
fn repro_fig6_writes_artifacts_and_converges() {
    let dir = tmp_dir("fig6");
    let out = run(&["repro-fig6", "--out-dir", dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "run_theta1.csv",
        "run_theta2.csv",
        "run_theta3.csv",
        "run_theta4.csv",
        "level_1_grid.csv",
        "level_2_grid.csv",
        "summary.json",
    ] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["all_converged"], true);
    // Thread cap honored without changing results.
    let dir2 = tmp_dir("fig6_single_thread");
    let out2 = Command::new(bin())
        .args(["repro-fig6", "--out-dir", dir2.to_str().unwrap()])
        .env("DELAYNET_THREADS", "1")
        .output()
        .unwrap();
    assert!(out2.status.success());
    let a = std::fs::read_to_string(dir.join("run_theta1.csv")).unwrap();
    let b = std::fs::read_to_string(dir2.join("run_theta1.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bundled_files_match_programmatic_fixtures() {
    use delaynet::exact::{rat, rat_array, rat_i};
    let read = |name: &str| std::fs::read_to_string(networks_dir().join(name)).unwrap();
    let bd = delaynet::parse_network(&read("birth_death.rn")).unwrap();
    assert_eq!(bd, delaynet::fixtures::birth_death(rat_i(1), rat_i(2), rat_i(1)));
    let cb = delaynet::parse_network(&read("cubic_branch.rn")).unwrap();
    let taus = [rat(1, 2), rat(7, 10), rat(1, 2), rat(11, 10), rat(13, 10)];
    assert_eq!(cb, delaynet::fixtures::cubic_branch(rat_i(1), &taus));
    let cbw = delaynet::parse_witness(&read("cubic_branch.witness"), &cb).unwrap();
    assert_eq!(cbw.target, delaynet::fixtures::cubic_branch_witness(rat_i(1)).target);
    let kd = delaynet::parse_network(&read("kinase_degenerate.rn")).unwrap();
    assert_eq!(kd, delaynet::fixtures::kinase_degenerate(rat_i(1), &rat_array::<5>(1, 1)));
    let kdw = delaynet::parse_witness(&read("kinase_degenerate.witness"), &kd).unwrap();
    let expect = delaynet::fixtures::kinase_degenerate_witness(rat_i(1));
    assert_eq!(kdw.target, expect.target);
    assert_eq!(kdw.l, expect.l);
}
