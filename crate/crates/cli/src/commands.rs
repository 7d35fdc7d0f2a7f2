use std::path::{Path, PathBuf};

use coldcharge::harness::{run_episode, EpisodeMetrics, Method};
use coldcharge::ingest::files::{declare_bounds, read_sessions};
use coldcharge::ingest::{
    generate_scenario, load_scenario, read_series, save_scenario_dir, save_scenario_json, RunConfig, SeriesInputs,
    SeriesKind,
};
use coldcharge::model::validate_scenario;
use coldcharge::validation::{run_suite, SuiteSettings};
use coldcharge::{Scenario, ThermalParams};
use rayon::prelude::*;

use crate::args::{Cli, Command, CommonArgs, RunArgs, SweepArgs, SweepParam, ValidateArgs};
use crate::output;

#[derive(Debug)]
pub enum Failure {
    /// Bad input, missing file, solver failure.
    Data(String),
    /// A validation check failed.
    Validation(String),
}

impl From<coldcharge::Error> for Failure {
    fn from(e: coldcharge::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<String> for Failure {
    fn from(e: String) -> Self {
        Failure::Data(e)
    }
}

pub fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Sweep(a) => sweep(a),
        Command::Validate(a) => validate(a),
        Command::Generate(a) => generate(a),
    }
}

fn resolve(args: &CommonArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &args.scenario {
        cfg.scenario = Some(p.clone());
    }
    if let Some(v) = args.v {
        cfg.set("v", &v.to_string())?;
    }
    if let Some(g) = args.gamma {
        cfg.set("gamma", &g.to_string())?;
    }
    if let Some(t) = args.truth_model {
        cfg.truth = t.into();
    }
    if let Some(t) = args.theta_mode {
        cfg.theta_mode = t.into();
    }
    if let Some(o) = args.offset {
        cfg.set("offset", &o.to_string())?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.ev_count {
        cfg.ev_count = n;
    }
    if let Some(d) = args.days {
        cfg.days = d;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

/// Loads `cfg.scenario` and shifts it by `cfg.offset`, or generates a
/// synthetic scenario (with any series or session files from the config).
fn build_scenario(cfg: &RunConfig) -> Result<Scenario, Failure> {
    if let Some(path) = &cfg.scenario {
        let mut s = load_scenario(path)?;
        if cfg.offset != 0.0 {
            s.ambient.iter_mut().for_each(|a| *a += cfg.offset);
            s.ambient_low += cfg.offset;
            s.ambient_high += cfg.offset;
        }
        return Ok(s);
    }
    let read = |p: &Option<PathBuf>, kind| -> Result<Option<Vec<f64>>, Failure> {
        p.as_ref().map(|p| read_series(p, kind)).transpose().map_err(Failure::from)
    };
    let inputs = SeriesInputs {
        ambient: read(&cfg.ambient_file, SeriesKind::Ambient)?,
        price: read(&cfg.price_file, SeriesKind::Price)?,
        pv: read(&cfg.pv_file, SeriesKind::Pv)?,
    };
    let mut s = generate_scenario(&cfg.generator_config(), &inputs)?;
    if let Some(p) = &cfg.sessions_file {
        s.sessions = read_sessions(p, ThermalParams::default())?;
        declare_bounds(&mut s);
    }
    let violations = validate_scenario(&s);
    if !violations.is_empty() {
        return Err(coldcharge::Error::InvalidScenario(violations).into());
    }
    Ok(s)
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, Failure> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| Failure::Data(format!("cannot create {}: {e}", cfg.out.display())))?;
    Ok(&cfg.out)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = resolve(&args.common)?;
    if let Some(m) = args.method {
        cfg.method = m;
    }
    let scenario = build_scenario(&cfg)?;
    let episode = run_episode(&scenario, &cfg.episode_config())?;
    let dir = out_dir(&cfg)?;
    output::write_json(&dir.join("metrics.json"), &episode.metrics)?;
    output::write_trace(&dir.join("trace.jsonl"), &episode.trace)?;
    output::write_trajectories(&dir.join("trajectories.csv"), &episode.trace)?;
    if let Some(report) = &episode.offline {
        output::write_json(&dir.join("offline.json"), report)?;
    }
    let m = &episode.metrics;
    println!(
        "{}: cost {:.4} fulfillment {:.2}% cost index {:.6} heating {:.2}% violations {}",
        m.method,
        m.total_cost,
        100.0 * m.fulfillment_ratio,
        m.cost_index,
        100.0 * m.heating_ratio,
        m.temperature_violations
    );
    Ok(())
}

fn compare(args: CommonArgs) -> Result<(), Failure> {
    let cfg = resolve(&args)?;
    let scenario = build_scenario(&cfg)?;
    let results: Vec<Result<EpisodeMetrics, coldcharge::Error>> = Method::ALL
        .par_iter()
        .map(|&method| {
            let ep = RunConfig { method, ..cfg.clone() }.episode_config();
            run_episode(&scenario, &ep).map(|e| e.metrics)
        })
        .collect();
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let dir = out_dir(&cfg)?;
    output::write_compare(&dir.join("compare.csv"), &rows)?;
    output::write_json(&dir.join("compare.json"), &rows)?;
    println!("{}", output::COMPARE_HEADER.join(","));
    for m in &rows {
        println!(
            "{},{:.4},{:.2},{:.6},{:.2}",
            m.method,
            m.total_cost,
            100.0 * m.fulfillment_ratio,
            m.cost_index,
            100.0 * m.heating_ratio
        );
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let cfg = resolve(&args.common)?;
    let values = if args.values.is_empty() {
        match args.param {
            SweepParam::V => vec![100.0, 200.0, 300.0, 400.0, 500.0, 600.0],
            SweepParam::Gamma => vec![5.0, 10.0, 20.0, 40.0],
            SweepParam::Offset => (0..=8).map(|k| -12.0 + 2.0 * k as f64).collect(),
        }
    } else {
        args.values.clone()
    };
    let methods = if args.method.is_empty() { vec![cfg.method] } else { args.method.clone() };
    let name = match args.param {
        SweepParam::V => "v",
        SweepParam::Gamma => "gamma",
        SweepParam::Offset => "offset",
    };
    let base = if args.param == SweepParam::Offset { None } else { Some(build_scenario(&cfg)?) };
    let points: Vec<(f64, Method)> = values.iter().flat_map(|&v| methods.iter().map(move |&m| (v, m))).collect();
    let results: Vec<Result<(f64, EpisodeMetrics), Failure>> = points
        .par_iter()
        .map(|&(value, method)| {
            let mut point = RunConfig { method, ..cfg.clone() };
            point.set(name, &value.to_string())?;
            let shifted;
            let scenario = match &base {
                Some(s) => s,
                None => {
                    shifted = build_scenario(&point)?;
                    &shifted
                }
            };
            let ep = run_episode(scenario, &point.episode_config())?;
            Ok((value, ep.metrics))
        })
        .collect();
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let dir = out_dir(&cfg)?;
    output::write_sweep(&dir.join("sweep.csv"), name, &rows)?;
    for (value, m) in &rows {
        println!(
            "{name}={value} {}: cost {:.4} fulfillment {:.2}% cost index {:.6}",
            m.method,
            m.total_cost,
            100.0 * m.fulfillment_ratio,
            m.cost_index
        );
    }
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let mut failed = Vec::new();
    if let Some(path) = &args.scenario {
        match load_scenario(path) {
            Ok(_) => println!("PASS scenario_valid: {}", path.display()),
            Err(e) => {
                println!("FAIL scenario_valid: {e}");
                failed.push("scenario_valid".to_string());
            }
        }
    }
    let settings = SuiteSettings {
        seed: args.seed,
        slot_instances: args.instances,
        ..SuiteSettings::default()
    };
    let outcomes = run_suite(&settings);
    for c in &outcomes {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        if !c.passed {
            failed.push(c.name.to_string());
        }
    }
    if let Some(out) = &args.out {
        output::write_json(out, &outcomes)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Validation(failed.join(", ")))
    }
}

fn generate(args: CommonArgs) -> Result<(), Failure> {
    let cfg = resolve(&args)?;
    let scenario = build_scenario(&cfg)?;
    let is_json = cfg.out.extension().is_some_and(|e| e == "json");
    if is_json {
        if let Some(parent) = cfg.out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Failure::Data(format!("cannot create {}: {e}", parent.display())))?;
        }
        save_scenario_json(&cfg.out, &scenario)?;
    } else {
        save_scenario_dir(&cfg.out, &scenario)?;
    }
    println!(
        "wrote {} sessions over {} slots to {}",
        scenario.sessions.len(),
        scenario.horizon,
        cfg.out.display()
    );
    Ok(())
}
