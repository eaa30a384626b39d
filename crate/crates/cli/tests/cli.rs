use std::path::PathBuf;
use std::process::{Command, Output};

fn arbmg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arbmg")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

#[test]
fn run_json_and_csv() {
    let o = arbmg(&["run", "n_agents=33", "alpha=1", "max_steps=20000", "convergence_tol=0.2", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["seed"], 3);
    assert_eq!(v["converged"], true);

    let o = arbmg(&["run", "n_agents=33", "alpha=1", "max_steps=20000", "convergence_tol=0.2", "--seed", "3", "--format", "csv"]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("seed,config_hash"));
}

#[test]
fn trace_file_has_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let o = arbmg(&["run", "n_agents=9", "n_patterns=4", "max_steps=2000", "--trace", trace.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = std::fs::read_to_string(&trace).unwrap().lines().count() as u64;
    assert_eq!(rows, v["steps_run"].as_u64().unwrap() + 1);
}

#[test]
fn exit_codes() {
    // unknown key
    assert_eq!(arbmg(&["run", "n_agents=9", "alpha=1", "bogus=1"]).status.code(), Some(2));
    // step cap below the first checkpoint
    assert_eq!(arbmg(&["run", "n_agents=9", "alpha=1", "max_steps=500"]).status.code(), Some(3));
    // a ladder far too small for nine agents at full bias
    let o = arbmg(&["run", "n_agents=9", "alpha=1", "price=merit:pos=1@10;neg=1@-10", "strategy_bias=1"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(arbmg(&["preset", "nope", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn ensemble_csv_row() {
    let o = arbmg(&["ensemble", "n_agents=17", "alpha=1", "max_steps=20000", "convergence_tol=0.2", "--samples", "3", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn sweep_rows_and_worker_independence() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("s.txt");
    std::fs::write(&spec, "n_agents = 17\nmax_steps = 20000\nsamples = 2\naxis.alpha = 0.5|1\naxis.risk_aversion = -inf|0\n")
        .unwrap();
    let a = arbmg(&["sweep", spec.to_str().unwrap(), "--format", "csv", "--workers", "1"]);
    let b = arbmg(&["sweep", spec.to_str().unwrap(), "--format", "csv", "--workers", "4"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a).lines().count(), 5);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn preset_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = arbmg(&["preset", "appA", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["preset"], "appA");
    for f in m["files"].as_array().unwrap() {
        assert!(dir.path().join(f.as_str().unwrap()).exists());
    }
    assert!(stdout(&arbmg(&["preset", "list"])).contains("fig10"));
}

#[test]
fn nash_reports_both_sides() {
    let o = arbmg(&[
        "nash", "n_agents=65", "alpha=2", "price=identity", "intraday_price=16", "strategy_bias=equilibrium",
        "max_steps=20000", "--samples", "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["predicted"]["a_star"].as_f64().unwrap() - 16.0).abs() < 1e-6);
    assert!(v["measured"]["sigma_a"]["mean"].as_f64().unwrap() > 0.0);
}

#[test]
fn price_analyze_and_ingest() {
    let o = arbmg(&["price", "analyze", "--points", "10", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1 + 2 * 9);

    let dir = tempfile::tempdir().unwrap();
    let csv = data("intraday_synthetic.csv");
    let o = arbmg(&["ingest", "intraday", csv.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["intervals"], 288);
    assert_eq!(s["skipped_rows"], 3);
}
