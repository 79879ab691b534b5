use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use riskmpc::mpc::{read_aggregate_csv, read_summary_csv, Metrics, TrajectoryLog};
use riskmpc::uncertainty::{write_tree_csv, ScenarioTree};
use tempfile::TempDir;

fn shipped() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/case_study.json")
}

fn riskmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskmpc"))
        .args(args)
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Shipped config edited through `edit`, written into `dir`.
fn edited(dir: &Path, name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(shipped()).unwrap()).unwrap();
    edit(&mut v);
    let p = dir.join(name);
    fs::write(&p, v.to_string()).unwrap();
    p
}

/// Shipped config with a small first-stage fan, for quick closed loops.
fn quick(dir: &Path) -> PathBuf {
    edited(dir, "quick.json", |v| {
        v["tree"]["branching"] = serde_json::json!([2, 1, 1, 1]);
        v["tree"]["scenarios"] = 40.into();
    })
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn shipped_config_validates() {
    let o = riskmpc(&["validate", "--config", path(&shipped())]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn invariant_failures_are_named() {
    let dir = TempDir::new().unwrap();
    let chi = edited(dir.path(), "chi.json", |v| v["microgrid"]["chi_t"] = serde_json::json!([0.0]));
    let o = riskmpc(&["validate", "--config", path(&chi)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("power_sharing_gain_positive"), "{}", stderr(&o));

    let soft = edited(dir.path(), "soft.json", |v| {
        v["microgrid"]["x_soft_max"] = serde_json::json!([8.0])
    });
    let o = riskmpc(&["validate", "--config", path(&soft)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("invariant"), "{}", stderr(&o));
}

#[test]
fn parse_errors_report_position() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("broken.json");
    fs::write(&p, "{\n  \"microgrid\": ,\n}").unwrap();
    let o = riskmpc(&["validate", "--config", path(&p)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2 column"), "{}", stderr(&o));
}

#[test]
fn solve_once_writes_report_and_decisions() {
    let dir = TempDir::new().unwrap();
    let cfg = quick(dir.path());
    let out = dir.path().join("out");
    let o = riskmpc(&["solve-once", "--config", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("solve.json")).unwrap()).unwrap();
    assert!(report["objective"].is_f64());
    let mut rd = csv::Reader::from_path(out.join("decisions.csv")).unwrap();
    assert_eq!(&rd.headers().unwrap()[0], "node");
    // Root, then 2 + 2 HELP chains of four stages each.
    assert_eq!(rd.records().count(), 1 + 4 * 4);
}

#[test]
fn solve_once_on_given_tree_orders_levels() {
    let dir = TempDir::new().unwrap();
    let tree = ScenarioTree::new(
        1,
        1,
        vec![None, Some(0), Some(0), Some(1), Some(2), Some(3), Some(4), Some(5), Some(6)],
        vec![1.0, 0.7, 0.3, 0.7, 0.3, 0.7, 0.3, 0.7, 0.3],
        vec![
            vec![],
            vec![1.2, 0.8],
            vec![0.1, 1.1],
            vec![1.0, 0.8],
            vec![0.2, 1.1],
            vec![1.1, 0.7],
            vec![0.0, 1.0],
            vec![1.3, 0.8],
            vec![0.1, 1.2],
        ],
    )
    .unwrap();
    let tree_path = dir.path().join("tree.csv");
    write_tree_csv(&tree, fs::File::create(&tree_path).unwrap()).unwrap();
    let cfg = quick(dir.path());
    let mut objective = Vec::new();
    for a in ["0", "1"] {
        let out = dir.path().join(format!("a{a}"));
        let o = riskmpc(&[
            "solve-once",
            "--config",
            path(&cfg),
            "--tree",
            path(&tree_path),
            "--alpha",
            a,
            "--out",
            path(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("solve.json")).unwrap()).unwrap();
        objective.push(r["objective"].as_f64().unwrap());
    }
    assert!(objective[0] >= objective[1] - 1e-6, "{objective:?}");
}

#[test]
fn infeasible_start_is_reported() {
    let dir = TempDir::new().unwrap();
    let cfg = edited(dir.path(), "x0.json", |v| v["simulation"]["x0"] = serde_json::json!([7.5]));
    let out = dir.path().join("out");
    let o = riskmpc(&["solve-once", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(3));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("solve.json")).unwrap()).unwrap();
    assert_eq!(r["status"], "Infeasible");
}

#[test]
fn single_step_simulation() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = quick(dir.path());
    let o = riskmpc(&["simulate", "--config", path(&cfg), "--steps", "1", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    let log = TrajectoryLog::read_csv(text.as_bytes()).unwrap();
    assert_eq!(log.rows.len(), 1);
    let mut again = Vec::new();
    log.write_csv(&mut again).unwrap();
    assert_eq!(String::from_utf8(again).unwrap(), text);
    let m: Metrics = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m.steps, 1);
}

#[test]
fn alpha_sweep_writes_one_directory_per_level() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = quick(dir.path());
    let o = riskmpc(&[
        "simulate", "--config", path(&cfg), "--steps", "1", "--alpha", "0,0.5,1", "--out", path(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for a in ["0", "0.5", "1"] {
        assert!(out.join(format!("alpha_{a}")).join("metrics.json").exists());
    }
}

#[test]
fn sensitivity_files_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = quick(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = riskmpc(&[
            "sensitivity", "--config", path(&cfg), "--steps", "1", "--replicas", "1", "--seed", "4",
            "--out", path(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let a = run("a");
    let b = run("b");
    for f in ["summary.csv", "aggregate.csv", "sensitivity.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let rows = read_summary_csv(fs::File::open(a.join("summary.csv")).unwrap()).unwrap();
    // One replica per configured level.
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.replica == 0));
    let agg = read_aggregate_csv(fs::File::open(a.join("aggregate.csv")).unwrap()).unwrap();
    assert_eq!(agg.len(), 6);
}

#[test]
fn tree_command_writes_tree() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = riskmpc(&["tree", "--config", path(&shipped()), "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tree = riskmpc::uncertainty::read_tree_csv(fs::File::open(out.join("tree.csv")).unwrap()).unwrap();
    assert_eq!(tree.scenario_count(), 14);
}

#[test]
fn round_trip_on_shipped_config() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let c = path(&shipped()).to_string();
    assert!(riskmpc(&["validate", "--config", &c]).status.success());
    let o = riskmpc(&["simulate", "--config", &c, "--steps", "2", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: Metrics = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m.steps, 2);
    assert_eq!(m.line_violations + m.state_violations, 0);
}
