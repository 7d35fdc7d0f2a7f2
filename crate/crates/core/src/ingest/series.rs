//! `slot,value` CSV series.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Which scenario series a file feeds; only used in messages and checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Ambient,
    Price,
    Pv,
}

impl SeriesKind {
    pub fn name(self) -> &'static str {
        match self {
            SeriesKind::Ambient => "ambient",
            SeriesKind::Price => "price",
            SeriesKind::Pv => "pv",
        }
    }
}

fn parse_err(path: &Path, line: Option<usize>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a two-column `slot,value` file with a header line. Slot indices
/// must run `0, 1, 2, ...` without gaps or repeats. Price and PV values must
/// be non-negative.
pub fn read_series(path: &Path, kind: SeriesKind) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize);
        if record.len() != 2 {
            return Err(parse_err(path, line, format!("expected 2 columns, found {}", record.len())));
        }
        let slot: usize = record[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("slot index '{}' is not a non-negative integer", &record[0])))?;
        let value: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(path, line, format!("value '{}' is not a number", &record[1])))?;
        if !value.is_finite() {
            return Err(parse_err(path, line, format!("value {value} is not finite")));
        }
        let expected = values.len();
        if slot < expected {
            return Err(parse_err(path, line, format!("duplicate or out-of-order slot index {slot}")));
        }
        if slot > expected {
            return Err(parse_err(path, line, format!("gap: slot index {slot} follows {}", expected as i64 - 1)));
        }
        if kind != SeriesKind::Ambient && value < 0.0 {
            return Err(parse_err(path, line, format!("negative {} value {value}", kind.name())));
        }
        values.push(value);
    }
    if values.is_empty() {
        return Err(parse_err(path, None, "no data rows"));
    }
    Ok(values)
}

/// Stretches `values` onto `horizon` slots by repeating each entry
/// `horizon / len` times. The length must divide the horizon.
pub fn step_hold(values: &[f64], horizon: usize) -> Option<Vec<f64>> {
    if values.is_empty() || horizon % values.len() != 0 {
        return None;
    }
    let k = horizon / values.len();
    Some(values.iter().flat_map(|&v| std::iter::repeat(v).take(k)).collect())
}

/// [`read_series`] followed by [`step_hold`] onto `horizon` slots.
pub fn load_series(path: &Path, kind: SeriesKind, horizon: usize) -> Result<Vec<f64>> {
    let raw = read_series(path, kind)?;
    step_hold(&raw, horizon).ok_or_else(|| {
        parse_err(
            path,
            None,
            format!("{} rows cannot be step-held onto a horizon of {horizon} slots", raw.len()),
        )
    })
}

/// Writes `slot,value` with shortest round-trip float formatting.
pub fn write_series(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(16 * values.len() + 16);
    out.push_str("slot,value\n");
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
