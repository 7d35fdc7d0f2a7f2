use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use coldcharge::harness::{EpisodeMetrics, TraceRecord};

pub type IoResult = Result<(), String>;

fn create(path: &Path) -> Result<BufWriter<File>, String> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| format!("cannot create {}: {e}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, String> {
    csv::Writer::from_path(path).map_err(|e| format!("cannot create {}: {e}", path.display()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> String + '_ {
    move |e| format!("writing {}: {e}", path.display())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> IoResult {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| format!("writing {}: {e}", path.display()))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| format!("writing {}: {e}", path.display()))
}

/// One JSON object per line.
pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> IoResult {
    let mut w = create(path)?;
    for rec in trace {
        serde_json::to_writer(&mut w, rec).map_err(|e| format!("writing {}: {e}", path.display()))?;
        w.write_all(b"\n").map_err(|e| format!("writing {}: {e}", path.display()))?;
    }
    w.flush().map_err(|e| format!("writing {}: {e}", path.display()))
}

/// Per-EV temperature and power paths, one row per EV and slot.
pub fn write_trajectories(path: &Path, trace: &[TraceRecord]) -> IoResult {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["slot", "ev", "ambient", "price", "temperature", "p_charge", "p_heat", "energy", "temperature_next", "energy_next"])
        .map_err(&err)?;
    for rec in trace {
        for e in &rec.evs {
            w.write_record([
                rec.slot.to_string(),
                e.id.to_string(),
                rec.ambient.to_string(),
                rec.price.to_string(),
                e.temperature.to_string(),
                e.p_charge.to_string(),
                e.p_heat.to_string(),
                e.energy.to_string(),
                e.temperature_next.to_string(),
                e.energy_next.to_string(),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(|e| format!("writing {}: {e}", path.display()))
}

pub const COMPARE_HEADER: [&str; 5] = ["method", "total_cost", "fulfillment_pct", "cost_index", "heating_pct"];

fn summary(m: &EpisodeMetrics) -> [String; 4] {
    [
        m.total_cost.to_string(),
        (100.0 * m.fulfillment_ratio).to_string(),
        m.cost_index.to_string(),
        (100.0 * m.heating_ratio).to_string(),
    ]
}

pub fn write_compare(path: &Path, rows: &[EpisodeMetrics]) -> IoResult {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(COMPARE_HEADER).map_err(&err)?;
    for m in rows {
        let [cost, ful, ci, heat] = summary(m);
        w.write_record([m.method.as_str().to_string(), cost, ful, ci, heat]).map_err(&err)?;
    }
    w.flush().map_err(|e| format!("writing {}: {e}", path.display()))
}

pub fn write_sweep(path: &Path, param: &str, rows: &[(f64, EpisodeMetrics)]) -> IoResult {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record([
        "param",
        "value",
        "method",
        "total_cost",
        "fulfillment_pct",
        "cost_index",
        "heating_pct",
        "temperature_violations",
    ])
    .map_err(&err)?;
    for (value, m) in rows {
        let [cost, ful, ci, heat] = summary(m);
        w.write_record([
            param.to_string(),
            value.to_string(),
            m.method.as_str().to_string(),
            cost,
            ful,
            ci,
            heat,
            m.temperature_violations.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| format!("writing {}: {e}", path.display()))
}
