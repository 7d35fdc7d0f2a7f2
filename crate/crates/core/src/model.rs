//! Domain types shared by every other module: per-EV physical parameters,
//! charging sessions, the scenario container and per-slot decisions.
//!
//! Units are fixed throughout the crate: energies in kWh, powers in kW,
//! temperatures in °C, prices in $/kWh, slot length in hours.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub type EvId = u32;

/// Default slot length: five minutes.
pub const DEFAULT_DT_HOURS: f64 = 1.0 / 12.0;
/// Default horizon: one day of five-minute slots.
pub const DEFAULT_HORIZON: usize = 288;

/// Lumped battery thermal and power-limit parameters of one EV.
///
/// Peak rates depend linearly on battery temperature:
/// charge `p_c_base + beta_c * T`, heat `p_h_base - beta_h * T`, and the two
/// together may not exceed `p_total`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// Heat capacity per slot (kWh/°C).
    pub q: f64,
    /// Dissipation to ambient (kWh/°C per slot).
    pub eta: f64,
    pub delta_h: f64,
    pub delta_c: f64,
    pub beta_c: f64,
    pub beta_h: f64,
    pub p_c_base: f64,
    pub p_h_base: f64,
    pub p_total: f64,
    pub t_low: f64,
    pub t_high: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        Self {
            q: 0.72,
            eta: 0.048,
            delta_h: 0.8,
            delta_c: 0.95,
            beta_c: 0.12,
            beta_h: 0.024,
            p_c_base: 4.8,
            p_h_base: 3.0,
            p_total: 7.4,
            t_low: 0.0,
            t_high: 20.0,
        }
    }
}

impl ThermalParams {
    /// Per-slot retention factor `1 - eta / q`.
    pub fn zeta(&self) -> f64 {
        1.0 - self.eta / self.q
    }

    /// Invariant violations, as `(field, detail)` pairs.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let all = [
            ("q", self.q),
            ("eta", self.eta),
            ("delta_h", self.delta_h),
            ("delta_c", self.delta_c),
            ("beta_c", self.beta_c),
            ("beta_h", self.beta_h),
            ("p_c_base", self.p_c_base),
            ("p_h_base", self.p_h_base),
            ("p_total", self.p_total),
            ("t_low", self.t_low),
            ("t_high", self.t_high),
        ];
        for (name, v) in all {
            if !v.is_finite() {
                out.push((name, format!("{v} is not finite")));
            }
        }
        if !(self.delta_c > 0.0 && self.delta_c <= 1.0) {
            out.push(("delta_c", format!("{} not in (0, 1]", self.delta_c)));
        }
        if !(self.delta_h > 0.0 && self.delta_h <= 1.0) {
            out.push(("delta_h", format!("{} not in (0, 1]", self.delta_h)));
        }
        if !(self.eta > 0.0 && self.eta < self.q) {
            out.push(("eta", format!("need 0 < eta ({}) < q ({})", self.eta, self.q)));
        }
        if !(self.t_low < self.t_high) {
            out.push((
                "t_low",
                format!("t_low {} not below t_high {}", self.t_low, self.t_high),
            ));
        }
        for (name, v) in [
            ("beta_c", self.beta_c),
            ("beta_h", self.beta_h),
            ("p_c_base", self.p_c_base),
            ("p_h_base", self.p_h_base),
        ] {
            if v < 0.0 {
                out.push((name, format!("{v} is negative")));
            }
        }
        if !(self.p_total > 0.0) {
            out.push(("p_total", format!("{} is not positive", self.p_total)));
        }
        out
    }
}

/// One EV's charging request. The EV is present during slots
/// `t_arrive..t_depart`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvSession {
    pub id: EvId,
    pub t_arrive: usize,
    pub t_depart: usize,
    pub e_initial: f64,
    pub e_depart: f64,
    pub e_cap: f64,
    pub t_initial: f64,
    #[serde(default)]
    pub thermal: ThermalParams,
}

impl EvSession {
    /// Requested energy `e_depart - e_initial` (kWh).
    pub fn demand(&self) -> f64 {
        self.e_depart - self.e_initial
    }

    /// Parking duration in slots.
    pub fn duration(&self) -> usize {
        self.t_depart.saturating_sub(self.t_arrive)
    }

    pub fn is_present(&self, slot: usize) -> bool {
        (self.t_arrive..self.t_depart).contains(&slot)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub dt_hours: f64,
    pub horizon: usize,
    pub ambient: Vec<f64>,
    pub price: Vec<f64>,
    pub pv_cap: Vec<f64>,
    pub sessions: Vec<EvSession>,
    /// Declared upper bound on `price`.
    pub price_cap: f64,
    /// Declared lower bound on `ambient`.
    pub ambient_low: f64,
    /// Declared upper bound on `ambient`.
    pub ambient_high: f64,
}

impl Scenario {
    /// A scenario with constant series and no sessions.
    pub fn flat(horizon: usize, dt_hours: f64, ambient: f64, price: f64, pv: f64) -> Self {
        Self {
            dt_hours,
            horizon,
            ambient: vec![ambient; horizon],
            price: vec![price; horizon],
            pv_cap: vec![pv; horizon],
            sessions: Vec::new(),
            price_cap: price,
            ambient_low: ambient,
            ambient_high: ambient,
        }
    }

    /// Longest parking duration in slots; sizes the demand queues.
    pub fn max_parking(&self) -> usize {
        self.sessions.iter().map(EvSession::duration).max().unwrap_or(0)
    }

    pub fn total_demand(&self) -> f64 {
        self.sessions.iter().map(EvSession::demand).sum()
    }

    pub fn session(&self, id: EvId) -> Option<&EvSession> {
        self.sessions.iter().find(|s| s.id == id)
    }
}

/// Powers chosen for one slot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotDecision {
    pub p_charge: BTreeMap<EvId, f64>,
    pub p_heat: BTreeMap<EvId, f64>,
    pub p_pv: f64,
    pub p_grid: f64,
}

impl SlotDecision {
    pub fn charge(&self, id: EvId) -> f64 {
        self.p_charge.get(&id).copied().unwrap_or(0.0)
    }

    pub fn heat(&self, id: EvId) -> f64 {
        self.p_heat.get(&id).copied().unwrap_or(0.0)
    }

    /// Total EV load `sum(p_charge + p_heat)`.
    pub fn load(&self) -> f64 {
        self.p_charge.values().sum::<f64>() + self.p_heat.values().sum::<f64>()
    }

    /// Splits `load()` between free PV (up to `pv_cap`) and the grid.
    pub fn settle_supply(&mut self, pv_cap: f64) {
        let load = self.load();
        self.p_pv = load.min(pv_cap.max(0.0));
        self.p_grid = (load - self.p_pv).max(0.0);
    }

    /// Checks non-negativity, the PV limit and the power balance.
    pub fn check_supply(&self, pv_cap: f64, tol: f64) -> Result<(), String> {
        for (kind, map) in [("charge", &self.p_charge), ("heat", &self.p_heat)] {
            if let Some((id, p)) = map.iter().find(|(_, p)| !(**p >= -tol)) {
                return Err(format!("EV {id} {kind} power {p} is negative"));
            }
        }
        if self.p_pv < -tol || self.p_grid < -tol {
            return Err(format!("negative supply: pv {} grid {}", self.p_pv, self.p_grid));
        }
        if self.p_pv > pv_cap + tol {
            return Err(format!("pv draw {} exceeds cap {pv_cap}", self.p_pv));
        }
        let gap = self.p_pv + self.p_grid - self.load();
        if gap.abs() > tol {
            return Err(format!("power balance off by {gap}"));
        }
        Ok(())
    }
}

/// Mutable per-EV state carried by the episode. `h_backlog` always equals
/// `temperature - theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvRuntimeState {
    pub energy: f64,
    pub temperature: f64,
    pub h_backlog: f64,
    pub theta: f64,
}

impl EvRuntimeState {
    pub fn new(energy: f64, temperature: f64, theta: f64) -> Self {
        Self {
            energy,
            temperature,
            h_backlog: temperature - theta,
            theta,
        }
    }

    pub fn set_temperature(&mut self, temperature: f64) {
        self.temperature = temperature;
        self.h_backlog = temperature - self.theta;
    }
}

/// Where a scenario invariant is broken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Location {
    Scenario,
    Slot(usize),
    Session(EvId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub location: Location,
    pub field: String,
    pub detail: String,
}

impl Violation {
    fn new(location: Location, field: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            location,
            field: field.into(),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.location {
            Location::Scenario => write!(f, "{}: {}", self.field, self.detail),
            Location::Slot(t) => write!(f, "{}[slot {t}]: {}", self.field, self.detail),
            Location::Session(id) => write!(f, "session {id} {}: {}", self.field, self.detail),
        }
    }
}

/// Lists every broken invariant of `s`. An empty list means the scenario is
/// safe to hand to the thermal, queue and controller modules.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let scen = |field: &str, detail: String| Violation::new(Location::Scenario, field, detail);

    if !(s.dt_hours > 0.0 && s.dt_hours.is_finite()) {
        out.push(scen("dt_hours", format!("{} is not a positive duration", s.dt_hours)));
    }
    for (name, series) in [("ambient", &s.ambient), ("price", &s.price), ("pv_cap", &s.pv_cap)] {
        if series.len() != s.horizon {
            out.push(scen(
                name,
                format!("length {} != horizon {}", series.len(), s.horizon),
            ));
        }
    }
    if !(s.price_cap >= 0.0 && s.price_cap.is_finite()) {
        out.push(scen("price_cap", format!("{} is not a finite non-negative price", s.price_cap)));
    }
    for (t, &p) in s.price.iter().enumerate() {
        if !(p >= 0.0 && p <= s.price_cap) {
            out.push(Violation::new(
                Location::Slot(t),
                "price",
                format!("{p} outside [0, {}]", s.price_cap),
            ));
        }
    }
    for (t, &p) in s.pv_cap.iter().enumerate() {
        if !(p >= 0.0 && p.is_finite()) {
            out.push(Violation::new(Location::Slot(t), "pv_cap", format!("{p} is negative")));
        }
    }
    if !(s.ambient_low <= s.ambient_high) {
        out.push(scen(
            "ambient_low",
            format!("{} above ambient_high {}", s.ambient_low, s.ambient_high),
        ));
    }
    for (t, &a) in s.ambient.iter().enumerate() {
        if !a.is_finite() {
            out.push(Violation::new(Location::Slot(t), "ambient", format!("{a} is not finite")));
        } else if a < s.ambient_low || a > s.ambient_high {
            out.push(Violation::new(
                Location::Slot(t),
                "ambient",
                format!("{a} outside declared [{}, {}]", s.ambient_low, s.ambient_high),
            ));
        }
    }

    let mut seen = BTreeSet::new();
    for ev in &s.sessions {
        let at = |field: &str, detail: String| Violation::new(Location::Session(ev.id), field, detail);
        if !seen.insert(ev.id) {
            out.push(at("id", "duplicate id".into()));
        }
        if ev.t_arrive >= ev.t_depart {
            out.push(at(
                "t_arrive",
                format!("arrival {} not before departure {}", ev.t_arrive, ev.t_depart),
            ));
        }
        if ev.t_depart > s.horizon {
            out.push(at(
                "t_depart",
                format!("departure {} beyond horizon {}", ev.t_depart, s.horizon),
            ));
        }
        if !(ev.e_initial >= 0.0 && ev.e_initial <= ev.e_depart && ev.e_depart <= ev.e_cap) {
            out.push(at(
                "e_depart",
                format!(
                    "need 0 <= e_initial ({}) <= e_depart ({}) <= e_cap ({})",
                    ev.e_initial, ev.e_depart, ev.e_cap
                ),
            ));
        }
        if !(ev.t_initial >= ev.thermal.t_low && ev.t_initial <= ev.thermal.t_high) {
            out.push(at(
                "t_initial",
                format!(
                    "{} outside [{}, {}]",
                    ev.t_initial, ev.thermal.t_low, ev.thermal.t_high
                ),
            ));
        }
        for (field, detail) in ev.thermal.problems() {
            out.push(at(&format!("thermal.{field}"), detail));
        }
    }
    out
}
