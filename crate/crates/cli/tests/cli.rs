use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn cineplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cineplan"))
        .args(args)
        .output()
        .unwrap()
}

fn run_to(dir: &Path, scenario: &str, sets: &[&str]) -> Output {
    let path = scenarios().join(scenario);
    let mut args = vec!["run", path.to_str().unwrap(), "-o", dir.to_str().unwrap()];
    for s in sets {
        args.extend(["--set", s]);
    }
    cineplan(&args)
}

fn metrics(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap()
}

fn read_table(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    let mut rows = vec![header];
    rows.extend(r.records().map(|x| x.unwrap()));
    rows
}

fn column(rows: &[csv::StringRecord], name: &str) -> Vec<String> {
    let i = rows[0]
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    rows[1..].iter().map(|r| r[i].to_string()).collect()
}

fn write_sweep(dir: &Path, base: &str, axis: &str, values: &str) -> PathBuf {
    let spec = dir.join(format!("{axis}.json"));
    let base = scenarios().join(base);
    let text = format!(
        r#"{{"base": {:?}, "axis": "{axis}", "values": {values}, "output": {:?}}}"#,
        base.to_str().unwrap(),
        dir.join(format!("out_{axis}")).to_str().unwrap()
    );
    std::fs::write(&spec, text).unwrap();
    spec
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_to(dir.path(), "flyby.json", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["metrics.json", "trajectories.csv", "events.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert_eq!(metrics(dir.path())["status"], "completed");
}

#[test]
fn missing_scenario_exits_1() {
    assert_eq!(cineplan(&["run", "missing.json"]).status.code(), Some(1));
}

#[test]
fn malformed_scenario_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"schema_version\": 1,\n  \"duration\": ,\n}").unwrap();
    let out = cineplan(&["run", bad.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn pitch_weight_override_reduces_pitch_jerk() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run_to(a.path(), "flyby.json", &[]).status.code(), Some(0));
    assert_eq!(
        run_to(b.path(), "flyby.json", &["weights.w2=10000"]).status.code(),
        Some(0)
    );
    let jerk = |d: &Path| metrics(d)["uavs"][0]["avg_pitch_jerk"].as_f64().unwrap();
    assert!(jerk(b.path()) < jerk(a.path()));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert_eq!(run_to(d.path(), "multi_uav_eight.json", &[]).status.code(), Some(0));
    }
    for f in ["metrics.json", "trajectories.csv", "events.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn starting_inside_a_zone_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_to(dir.path(), "flyby.json", &["zones.0.center=[-20,3]"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(metrics(dir.path())["status"], "safety_violation");
}

#[test]
fn failure_cascade_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_to(dir.path(), "perf.json", &["deterministic=true", "faults.0.count=50"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(metrics(dir.path())["status"], "solver_failure");
}

#[test]
fn horizon_sweep_has_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_sweep(dir.path(), "lateral.json", "horizon", "[0.5, 2, 4, 8]");
    let out = cineplan(&["sweep", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_table(&dir.path().join("out_horizon/sweep.csv"));
    assert_eq!(column(&rows, "horizon"), ["0.5", "2", "4", "8"]);
    assert!(dir.path().join("out_horizon/horizon_0.5/metrics.json").exists());
}

#[test]
fn weight_sweep_pitch_jerk_is_non_increasing() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_sweep(dir.path(), "flyby.json", "w2", "[0, 100, 1000, 10000]");
    assert_eq!(cineplan(&["sweep", spec.to_str().unwrap()]).status.code(), Some(0));
    let rows = read_table(&dir.path().join("out_w2/sweep.csv"));
    let jerk: Vec<f64> = column(&rows, "uav1.avg_pitch_jerk")
        .iter()
        .map(|x| x.parse().unwrap())
        .collect();
    assert_eq!(jerk.len(), 4);
    assert!(jerk.windows(2).all(|w| w[1] <= w[0]), "{jerk:?}");
}

#[test]
fn empty_sweep_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_sweep(dir.path(), "flyby.json", "w2", "[]");
    assert_eq!(cineplan(&["sweep", spec.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn unknown_axis_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_sweep(dir.path(), "flyby.json", "w7", "[1]");
    assert_eq!(cineplan(&["sweep", spec.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn failed_child_keeps_partial_table() {
    let dir = tempfile::tempdir().unwrap();
    // 0.01 s is shorter than one planner step
    let spec = write_sweep(dir.path(), "lateral.json", "horizon", "[0.01, 2]");
    let out = cineplan(&["sweep", spec.to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
    let rows = read_table(&dir.path().join("out_horizon/sweep.csv"));
    assert_eq!(column(&rows, "status"), ["error", "completed"]);
}

#[test]
fn thread_cap_does_not_change_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_sweep(dir.path(), "flyby.json", "w2", "[0, 100, 1000]");
    let table = dir.path().join("out_w2/sweep.csv");
    let mut tables = Vec::new();
    for threads in ["1", "3"] {
        let status = Command::new(env!("CARGO_BIN_EXE_cineplan"))
            .args(["sweep", spec.to_str().unwrap()])
            .env("CINEPLAN_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        tables.push(std::fs::read(&table).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn check_passes() {
    let out = cineplan(&["check", "--points", "10"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 6);
}
