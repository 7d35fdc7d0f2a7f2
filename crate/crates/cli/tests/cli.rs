use std::path::Path;
use std::process::{Command, Output};

fn coldcharge(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coldcharge"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()));
    rows
}

#[test]
fn generate_then_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = coldcharge(&["generate", "--seed", "5", "--ev-count", "6", "--out", "scen"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = coldcharge(&["run", "--scenario", "scen", "--method", "b1", "--out", "res"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("res/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["method"], "b1");
    assert_eq!(metrics["ev_count"], 6);
    let trace = std::fs::read_to_string(dir.path().join("res/trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 288);
    for line in trace.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(rec["slot"].is_u64());
    }
    let traj = csv_rows(&dir.path().join("res/trajectories.csv"));
    assert_eq!(traj[0][..3], ["slot", "ev", "ambient"]);
    assert!(traj.len() > 1);
}

#[test]
fn compare_writes_five_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = coldcharge(&["compare", "--ev-count", "3", "--seed", "2", "--out", "cmp"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("cmp/compare.csv"));
    assert_eq!(rows[0], ["method", "total_cost", "fulfillment_pct", "cost_index", "heating_pct"]);
    let methods: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(methods, ["proposed", "b1", "b2", "noheat", "offline"]);
    for r in &rows[1..] {
        let ful: f64 = r[2].parse().unwrap();
        assert!((0.0..=100.0 + 1e-9).contains(&ful));
    }
}

#[test]
fn sweep_over_v_has_six_distinct_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = coldcharge(&["sweep", "--param", "v", "--ev-count", "5", "--out", "sw"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("sw/sweep.csv"));
    assert_eq!(rows.len(), 7);
    let mut vs: Vec<String> = rows[1..].iter().map(|r| r[1].clone()).collect();
    vs.dedup();
    assert_eq!(vs, ["100", "200", "300", "400", "500", "600"]);
}

#[test]
fn sweep_over_offset_shifts_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let out = coldcharge(
        &["sweep", "--param", "offset", "--values", "-12,4", "--method", "proposed,noheat", "--ev-count", "4", "--out", "o"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("o/sweep.csv"));
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[1][..3], ["offset", "-12", "proposed"]);
    assert_eq!(rows[4][..3], ["offset", "4", "noheat"]);
}

#[test]
fn validate_passes_on_fixture_suite() {
    let dir = tempfile::tempdir().unwrap();
    let out = coldcharge(&["validate", "--instances", "300", "--out", "checks.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS greedy_matches_simplex"));
    assert!(!stdout.contains("FAIL"));
    assert!(dir.path().join("checks.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(coldcharge(&["run", "--scenario", "missing.json"], dir.path()).status.code(), Some(1));
    assert_eq!(coldcharge(&["run", "--no-such-flag"], dir.path()).status.code(), Some(1));
    assert_eq!(coldcharge(&["run", "--method", "b7"], dir.path()).status.code(), Some(1));
    assert_eq!(coldcharge(&["--help"], dir.path()).status.code(), Some(0));

    let bad = r#"{"dt_hours":0.5,"horizon":2,"ambient":[-5,-5],"price":[0.1,0.1],"pv_cap":[0,0],
        "sessions":[{"id":1,"t_arrive":1,"t_depart":1,"e_initial":1,"e_depart":2,"e_cap":50,"t_initial":1}],
        "price_cap":0.1,"ambient_low":-5,"ambient_high":-5}"#;
    std::fs::write(dir.path().join("bad.json"), bad).unwrap();
    let out = coldcharge(&["validate", "--scenario", "bad.json", "--instances", "10"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL scenario_valid"));
    assert_eq!(coldcharge(&["run", "--scenario", "bad.json"], dir.path()).status.code(), Some(1));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "# synthetic day\nmethod = b2\nv = 300\nev_count = 4\nseed = 9\nout = from_config\n",
    )
    .unwrap();
    let out = coldcharge(&["run", "--config", "run.cfg", "--v", "200"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("from_config/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["method"], "b2");
    assert_eq!(metrics["v"], 200.0);
    assert_eq!(metrics["ev_count"], 4);

    std::fs::write(dir.path().join("broken.cfg"), "v = 1\nflavour = mint\n").unwrap();
    let out = coldcharge(&["run", "--config", "broken.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.cfg:2"));
}

#[test]
fn json_scenario_round_trips_through_generate() {
    let dir = tempfile::tempdir().unwrap();
    let a = coldcharge(&["generate", "--seed", "4", "--ev-count", "3", "--offset", "-12", "--out", "a.json"], dir.path());
    let b = coldcharge(&["generate", "--seed", "4", "--ev-count", "3", "--offset", "-12", "--out", "b.json"], dir.path());
    assert!(a.status.success() && b.status.success());
    let ra = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(ra, std::fs::read(dir.path().join("b.json")).unwrap());
    let out = coldcharge(&["validate", "--scenario", "a.json", "--instances", "10"], dir.path());
    assert_eq!(out.status.code(), Some(0));
}
