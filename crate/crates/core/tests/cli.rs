use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn relaxopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relaxopt")).args(args).output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn toy_solve_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = relaxopt(&["solve", "--out", s(dir.path()), "--set", "solver.grid_intervals=50"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["atoms.csv", "trajectory.csv", "weights.csv", "log.jsonl", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["termination"], "converged");
    assert!(summary["final_cost"].as_f64().unwrap() <= -0.99);
    assert_eq!(summary["config"]["solver"]["grid_intervals"], 50);
    assert_eq!(summary["config"]["atoms"]["per_axis"], serde_json::json!([15]));

    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("t,x_1"));
    assert_eq!(traj.lines().count(), 52);
    let weights = fs::read_to_string(dir.path().join("weights.csv")).unwrap();
    assert_eq!(weights.lines().count(), 51);
    assert_eq!(weights.lines().next().unwrap().split(',').count(), 16);
    let log = fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    let last: Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    assert!(last["theta_pure"].as_f64().unwrap() > -1e-5);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[problem]\nname = \"constrained_lqr\"\n[solver]\nmax_iters = 2\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = relaxopt(&["solve", "--config", s(&cfg), "--out", s(&out_dir), "--set", "solver.max_iters=3"]);
    assert_eq!(out.status.code(), Some(2));
    let summary = json(&out_dir.join("summary.json"));
    assert_eq!(summary["termination"], "max_iters");
    assert_eq!(summary["iterations"], 3);
    assert_eq!(summary["config"]["problem"]["name"], "constrained_lqr");
}

#[test]
fn typos_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = relaxopt(&["solve", "--out", s(dir.path()), "--set", "solver.max_iter=3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_iter"));
    let out = relaxopt(&["solve", "--out", s(dir.path()), "--set", "problem.name=pendulum"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solver_failure_still_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    // A one-point grid along an axis of a two-input box is rejected by the sampler.
    let out = relaxopt(&["solve", "--out", s(dir.path()), "--set", "atoms.per_axis=[3]", "--set", "problem.name=constrained_lqr"]);
    assert_eq!(out.status.code(), Some(1));
    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["termination"], "error");
    assert!(!summary["error"].as_str().unwrap().is_empty());
}

#[test]
fn synthesize_point_mass_weights() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("atoms.csv"), "index,u_1\n0,-1\n1,0\n2,1\n").unwrap();
    fs::write(d.join("weights.csv"), "t,w_1,w_2,w_3\n0,0,1,0\n0.5,1,0,0\n").unwrap();
    let out = relaxopt(&["synthesize", "--out", s(d), "--set", "solver.grid_intervals=2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let schedule = fs::read_to_string(d.join("schedule.csv")).unwrap();
    let rows: Vec<&str> = schedule.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",1,") && rows[1].contains(",0,"));
    let chatter = json(&d.join("chatter.json"));
    let levels = chatter["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 3);
    assert!(levels.iter().all(|l| l["error"].as_f64().unwrap() < 1e-12));
    let trace = fs::read_to_string(d.join("input_trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("t,u_1"));
}

#[test]
fn synthesize_rejects_malformed_weights() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("atoms.csv"), "index,u_1\n0,-1\n1,1\n").unwrap();
    for bad in ["t,w_1,w_2\n0,0.5,0.6\n", "t,w_1\n0,1\n", "t,w_1,w_2\n0,x,1\n", "t,w_1,w_2\n0.3,0.5,0.5\n"] {
        fs::write(d.join("weights.csv"), bad).unwrap();
        assert_eq!(relaxopt(&["synthesize", "--out", s(d)]).status.code(), Some(1), "{bad:?}");
    }
}

#[test]
fn gap_on_toy_schedules() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases = [
        ("0", None),
        ("5.759586531581287", Some(-2.0)),
    ];
    for (u, bound) in cases {
        let sched = d.join("s.csv");
        fs::write(&sched, format!("t_start,t_end,atom_index,u_1\n0,0.5,0,{u}\n0.5,1,0,{u}\n")).unwrap();
        let out = relaxopt(&["gap", "--out", s(d), "--schedule", s(&sched)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let report = json(&d.join("gap.json"));
        let gap = report["gap"].as_f64().unwrap();
        match bound {
            None => {
                assert!(gap.abs() < 1e-6);
                assert!(report["worst"].is_null());
            }
            Some(b) => {
                assert!(gap < b);
                assert_eq!(report["worst"]["input"], serde_json::json!([0.0]));
            }
        }
    }
    let sched = d.join("bad.csv");
    fs::write(&sched, "t_start,t_end,atom_index,u_1\n0,0.4,0,0\n0.5,1,0,0\n").unwrap();
    assert_eq!(relaxopt(&["gap", "--out", s(d), "--schedule", s(&sched)]).status.code(), Some(1));
}

#[test]
fn gap_with_single_atom_set_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sched = d.join("s.csv");
    fs::write(&sched, "t_start,t_end,atom_index,u_1\n0,1,0,0\n").unwrap();
    let out = relaxopt(&["gap", "--out", s(d), "--schedule", s(&sched), "--set", "atoms.per_axis=[1]"]);
    assert_eq!(out.status.code(), Some(0));
    let gap = json(&d.join("gap.json"))["gap"].as_f64().unwrap();
    assert!(gap.abs() < 1e-12);
}

#[test]
fn hull_command_emits_parabola_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = relaxopt(&["hull", "--out", s(dir.path()), "--point", "0,0"]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("hull.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x_1,x_2,point,f_1,f_2,on_hull,hull_order"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 101);
    let first: Vec<f64> = rows[0][4..6].iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(first, vec![2.0, -1.0]);
    assert_eq!(rows[50][4].parse::<f64>().unwrap(), 1.0);
    assert!(rows.iter().all(|r| r[6] == "1"));
}

#[test]
fn hull_of_a_larger_state_still_emits_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = relaxopt(&["hull", "--out", s(dir.path()), "--set", "hull.field=problem", "--set", "problem.name=constrained_lqr"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("hull.csv")).unwrap();
    assert_eq!(text.lines().count(), 82);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",,")));
}
