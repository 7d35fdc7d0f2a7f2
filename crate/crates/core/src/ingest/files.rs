//! Session tables and whole-scenario files.
//!
//! A scenario is stored either as one JSON document or as a directory with
//! `ambient.csv`, `price.csv`, `pv.csv` (all `slot,value`) and
//! `sessions.csv`.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::series::{read_series, step_hold, write_series, SeriesKind};
use crate::model::{validate_scenario, EvId, EvSession, Scenario, ThermalParams, DEFAULT_DT_HOURS, DEFAULT_HORIZON};

pub const SESSIONS_HEADER: [&str; 7] = ["id", "t_arrive", "t_depart", "e_initial", "e_depart", "e_cap", "t_initial"];

#[derive(Debug, Serialize, Deserialize)]
struct SessionRow {
    id: EvId,
    t_arrive: usize,
    t_depart: usize,
    e_initial: f64,
    e_depart: f64,
    e_cap: f64,
    t_initial: f64,
}

/// Reads `id,t_arrive,t_depart,e_initial,e_depart,e_cap,t_initial`. Every
/// session gets `thermal`.
pub fn read_sessions(path: &Path, thermal: ThermalParams) -> Result<Vec<EvSession>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: Some(1),
        message: e.to_string(),
    })?;
    if headers.iter().ne(SESSIONS_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: Some(1),
            message: format!("expected header '{}'", SESSIONS_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<SessionRow>() {
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line() as usize),
            message: e.to_string(),
        })?;
        out.push(EvSession {
            id: row.id,
            t_arrive: row.t_arrive,
            t_depart: row.t_depart,
            e_initial: row.e_initial,
            e_depart: row.e_depart,
            e_cap: row.e_cap,
            t_initial: row.t_initial,
            thermal,
        });
    }
    Ok(out)
}

pub fn write_sessions(path: &Path, sessions: &[EvSession]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for s in sessions {
        w.serialize(SessionRow {
            id: s.id,
            t_arrive: s.t_arrive,
            t_depart: s.t_depart,
            e_initial: s.e_initial,
            e_depart: s.e_depart,
            e_cap: s.e_cap,
            t_initial: s.t_initial,
        })
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Fills the declared bounds from the realized series.
pub fn declare_bounds(scenario: &mut Scenario) {
    let fold = |v: &[f64], init: f64, f: fn(f64, f64) -> f64| v.iter().copied().fold(init, f);
    scenario.price_cap = fold(&scenario.price, 0.0, f64::max);
    scenario.ambient_low = fold(&scenario.ambient, f64::INFINITY, f64::min);
    scenario.ambient_high = fold(&scenario.ambient, f64::NEG_INFINITY, f64::max);
}

/// Loads a scenario directory. The horizon is the length of the longest of
/// the three series; the other two are step-held onto it. Without an
/// explicit slot length the series are taken to span one day.
pub fn load_scenario_dir(dir: &Path, thermal: ThermalParams, dt_hours: Option<f64>) -> Result<Scenario> {
    let files = [
        ("ambient.csv", SeriesKind::Ambient),
        ("price.csv", SeriesKind::Price),
        ("pv.csv", SeriesKind::Pv),
    ];
    let mut raw = Vec::with_capacity(3);
    for (name, kind) in files {
        raw.push(read_series(&dir.join(name), kind)?);
    }
    let horizon = raw.iter().map(Vec::len).max().unwrap_or(0);
    let mut held = Vec::with_capacity(3);
    for ((name, _), values) in files.iter().zip(&raw) {
        held.push(step_hold(values, horizon).ok_or_else(|| Error::Parse {
            path: dir.join(name),
            line: None,
            message: format!("{} rows cannot be step-held onto a horizon of {horizon} slots", values.len()),
        })?);
    }
    let pv_cap = held.pop().unwrap_or_default();
    let price = held.pop().unwrap_or_default();
    let ambient = held.pop().unwrap_or_default();
    let mut scenario = Scenario {
        dt_hours: dt_hours.unwrap_or(24.0 / horizon as f64),
        horizon,
        ambient,
        price,
        pv_cap,
        sessions: read_sessions(&dir.join("sessions.csv"), thermal)?,
        price_cap: 0.0,
        ambient_low: 0.0,
        ambient_high: 0.0,
    };
    if dt_hours.is_none() && horizon == DEFAULT_HORIZON {
        scenario.dt_hours = DEFAULT_DT_HOURS;
    }
    declare_bounds(&mut scenario);
    Ok(scenario)
}

pub fn save_scenario_dir(dir: &Path, scenario: &Scenario) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_series(&dir.join("ambient.csv"), &scenario.ambient)?;
    write_series(&dir.join("price.csv"), &scenario.price)?;
    write_series(&dir.join("pv.csv"), &scenario.pv_cap)?;
    write_sessions(&dir.join("sessions.csv"), &scenario.sessions)
}

pub fn load_scenario_json(path: &Path) -> Result<Scenario> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

pub fn save_scenario_json(path: &Path, scenario: &Scenario) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), scenario)?;
    Ok(())
}

/// Loads a `.json` file or a scenario directory and validates it.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let scenario = if path.is_dir() {
        load_scenario_dir(path, ThermalParams::default(), None)?
    } else {
        load_scenario_json(path)?
    };
    let violations = validate_scenario(&scenario);
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(Error::InvalidScenario(violations))
    }
}
