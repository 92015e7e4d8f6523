use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nslice_core::model::fixtures::t1;
use nslice_core::solution::SolutionDoc;

fn nslice(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nslice")).args(args).output().expect("binary runs")
}

fn write_t1(dir: &Path) -> String {
    let p = dir.join("t1.json");
    fs::write(&p, t1().to_json()).unwrap();
    p.display().to_string()
}

#[test]
fn solve_t1_activates_a() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_t1(dir.path());
    let out = nslice(&["solve", &inst, "--method", "lprr"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = SolutionDoc::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(doc.activated, vec!["a".to_string()]);
    assert!((doc.objective.unwrap() - 1.005).abs() < 1e-9);
}

#[test]
fn validate_accepts_solution_and_rejects_tampered_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_t1(dir.path());
    let sol = dir.path().join("sol.json");
    let out = nslice(&["solve", &inst, "-o", sol.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(nslice(&["validate", &inst, sol.to_str().unwrap()]).status.code(), Some(0));

    let mut doc = SolutionDoc::from_json(&fs::read_to_string(&sol).unwrap()).unwrap();
    doc.routing.as_mut().unwrap().segments[0].paths[0].fraction = 0.9;
    fs::write(&sol, doc.to_json()).unwrap();
    let out = nslice(&["validate", &inst, sol.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("segment-fraction-sum"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_t1(dir.path());
    assert_eq!(nslice(&["solve", &inst, "--method", "greedy"]).status.code(), Some(2));
    assert_eq!(nslice(&["solve", "/nonexistent.json"]).status.code(), Some(2));
    assert_eq!(nslice(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn infeasible_instance_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let mut inst = t1();
    inst.services[0].delay_budget = 1.0;
    let p = dir.path().join("tight.json");
    fs::write(&p, inst.to_json()).unwrap();
    assert_eq!(nslice(&["solve", p.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn generate_is_seeded() {
    let a = nslice(&["generate", "--services", "2", "--seed", "5"]);
    let b = nslice(&["generate", "--services", "2", "--seed", "5"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn experiment_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"generator": {"node_count": 8, "link_count": 18, "cloud_count": 2},
            "service_counts": [1, 2], "seeds": 2, "methods": ["lprr", "lpr_baseline", "oracle"]}"#,
    )
    .unwrap();
    let mut csvs = Vec::new();
    for run in ["x", "y"] {
        let out_dir = dir.path().join(run);
        let out = nslice(&["experiment", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        csvs.push(fs::read(out_dir.join("metrics.csv")).unwrap());
        assert!(out_dir.join("records").join("k2_seed001.json").exists());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn export_mps_writes_name_table() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_t1(dir.path());
    let mps = dir.path().join("t1.mps");
    assert_eq!(nslice(&["export-mps", &inst, "-o", mps.to_str().unwrap()]).status.code(), Some(0));
    let text = fs::read_to_string(&mps).unwrap();
    assert!(text.starts_with("NAME"));
    assert!(text.trim_end().ends_with("ENDATA"));
    assert!(dir.path().join("t1.mps.names").exists());
}
