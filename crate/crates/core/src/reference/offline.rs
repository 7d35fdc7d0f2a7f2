//! Clairvoyant full-horizon schedule.
//!
//! With every arrival, price, PV and ambient value known in advance, the
//! charging and heating schedule is the solution of one convex QP:
//!
//! ```text
//! minimize  sum_t price_t dt g_t + alpha sum_i (E_i,final - E_i,depart)^2
//! ```
//!
//! over per-EV powers, temperatures and final energies, subject to the
//! temperature recurrence of the selected truth model, the temperature band,
//! the temperature-dependent peak rates, the joint power cap, battery
//! capacity, and `g_t >= sum_i (p_c + p_h) - pv_t`, `g_t >= 0`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EvId, Scenario, SlotDecision};
use crate::reference::qp::{solve_qp, KktResiduals, QpProblem, QpSettings};
use crate::reference::sparse::CscMatrix;
use crate::thermal::{heat_gain, TruthModel};

/// Refuses problems with more variables than this.
pub const MAX_VARIABLES: usize = 400_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfflineSettings {
    /// Terminal penalty weight per kWh^2; `None` selects [`default_alpha`].
    pub alpha: Option<f64>,
    pub truth: TruthModel,
    pub qp: QpSettings,
    /// The temperature band is shrunk by this much on both sides so that a
    /// forward replay of the schedule stays inside the original band despite
    /// solver round-off.
    pub band_margin: f64,
}

impl Default for OfflineSettings {
    fn default() -> Self {
        Self {
            alpha: None,
            truth: TruthModel::Queue,
            qp: QpSettings::default(),
            band_margin: 1e-6,
        }
    }
}

/// `100 * price_cap * dt`, or `1` when every price is zero (any positive
/// weight then gives the same schedule).
pub fn default_alpha(scenario: &Scenario) -> f64 {
    if scenario.price_cap > 0.0 {
        100.0 * scenario.price_cap * scenario.dt_hours
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineSolution {
    /// One decision per slot of the horizon.
    pub schedule: Vec<SlotDecision>,
    /// Temperature after each present slot, per EV.
    pub temperatures: BTreeMap<EvId, Vec<f64>>,
    pub final_energy: BTreeMap<EvId, f64>,
    /// Optimal value of the full objective.
    pub objective: f64,
    /// `sum_t price_t dt g_t` of the solution.
    pub grid_cost: f64,
    pub penalty: f64,
    pub alpha: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
    pub polished: bool,
}

struct EvVars {
    id: EvId,
    start: usize,
    /// Index of the first variable; per slot `p_c, p_h, T_next` follow.
    base: usize,
    len: usize,
    energy: usize,
}

impl EvVars {
    fn charge(&self, k: usize) -> usize {
        self.base + 3 * k
    }
    fn heat(&self, k: usize) -> usize {
        self.base + 3 * k + 1
    }
    fn temp(&self, k: usize) -> usize {
        self.base + 3 * k + 2
    }
}

struct Encoding {
    problem: QpProblem,
    evs: Vec<EvVars>,
    /// Grid variable per slot, if any EV is present.
    grid: Vec<Option<usize>>,
    constant: f64,
}

struct Rows {
    triplets: Vec<(usize, usize, f64)>,
    l: Vec<f64>,
    u: Vec<f64>,
}

impl Rows {
    fn push(&mut self, entries: &[(usize, f64)], l: f64, u: f64) {
        let r = self.l.len();
        self.triplets.extend(entries.iter().map(|&(j, v)| (r, j, v)));
        self.l.push(l);
        self.u.push(u);
    }
}

fn encode(scenario: &Scenario, alpha: f64, truth: TruthModel, margin: f64) -> Result<Encoding> {
    let dt = scenario.dt_hours;
    let mut n = 0;
    let mut evs = Vec::with_capacity(scenario.sessions.len());
    for s in &scenario.sessions {
        let len = s.duration();
        evs.push(EvVars {
            id: s.id,
            start: s.t_arrive,
            base: n,
            len,
            energy: n + 3 * len,
        });
        n += 3 * len + 1;
    }
    let mut grid = vec![None; scenario.horizon];
    for s in &scenario.sessions {
        for t in s.t_arrive..s.t_depart {
            if grid[t].is_none() {
                grid[t] = Some(n);
                n += 1;
            }
        }
    }
    if n > MAX_VARIABLES {
        return Err(Error::TooLarge(format!("{n} variables (limit {MAX_VARIABLES})")));
    }

    let mut q = vec![0.0; n];
    let mut p_trip = Vec::new();
    let mut rows = Rows {
        triplets: Vec::new(),
        l: Vec::new(),
        u: Vec::new(),
    };
    let mut constant = 0.0;
    let inf = f64::INFINITY;

    for (s, v) in scenario.sessions.iter().zip(&evs) {
        let p = &s.thermal;
        let mut energy_row = vec![(v.energy, 1.0)];
        for k in 0..v.len {
            let t = v.start + k;
            let (a, b) = truth.affine(p, scenario.ambient[t]);
            let gain_c = heat_gain(p, 1.0, 0.0);
            let gain_h = heat_gain(p, 0.0, 1.0);
            let mut dynamics = vec![(v.temp(k), 1.0), (v.charge(k), -gain_c), (v.heat(k), -gain_h)];
            let mut rhs = b;
            if k == 0 {
                rhs += a * s.t_initial;
            } else {
                dynamics.push((v.temp(k - 1), -a));
            }
            rows.push(&dynamics, rhs, rhs);
            rows.push(&[(v.temp(k), 1.0)], p.t_low + margin, p.t_high - margin);

            rows.push(&[(v.charge(k), 1.0)], 0.0, inf);
            rows.push(&[(v.heat(k), 1.0)], 0.0, inf);
            if k == 0 {
                rows.push(&[(v.charge(k), 1.0)], -inf, p.p_c_base + p.beta_c * s.t_initial);
                rows.push(&[(v.heat(k), 1.0)], -inf, p.p_h_base - p.beta_h * s.t_initial);
            } else {
                rows.push(&[(v.charge(k), 1.0), (v.temp(k - 1), -p.beta_c)], -inf, p.p_c_base);
                rows.push(&[(v.heat(k), 1.0), (v.temp(k - 1), p.beta_h)], -inf, p.p_h_base);
            }
            rows.push(&[(v.charge(k), 1.0), (v.heat(k), 1.0)], -inf, p.p_total);
            energy_row.push((v.charge(k), -p.delta_c * dt));
        }
        rows.push(&energy_row, s.e_initial, s.e_initial);
        rows.push(&[(v.energy, 1.0)], -inf, s.e_cap);

        p_trip.push((v.energy, v.energy, 2.0 * alpha));
        q[v.energy] = -2.0 * alpha * s.e_depart;
        constant += alpha * s.e_depart * s.e_depart;
    }

    for (t, g) in grid.iter().enumerate() {
        let Some(g) = *g else { continue };
        q[g] = scenario.price[t] * dt;
        let mut supply = vec![(g, -1.0)];
        for v in &evs {
            if (v.start..v.start + v.len).contains(&t) {
                let k = t - v.start;
                supply.push((v.charge(k), 1.0));
                supply.push((v.heat(k), 1.0));
            }
        }
        rows.push(&supply, -inf, scenario.pv_cap[t]);
        rows.push(&[(g, 1.0)], 0.0, inf);
    }

    let m = rows.l.len();
    Ok(Encoding {
        problem: QpProblem {
            p_upper: CscMatrix::from_triplets(n, n, &p_trip),
            q,
            a: CscMatrix::from_triplets(m, n, &rows.triplets),
            l: rows.l,
            u: rows.u,
        },
        evs,
        grid,
        constant,
    })
}

/// Solves the clairvoyant program on `scenario`.
pub fn offline_solve(scenario: &Scenario, settings: &OfflineSettings) -> Result<OfflineSolution> {
    let alpha = settings.alpha.unwrap_or_else(|| default_alpha(scenario));
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::BadParameter(format!("penalty weight must be positive, got {alpha}")));
    }
    if !(settings.band_margin >= 0.0) {
        return Err(Error::BadParameter(format!("band margin must be non-negative, got {}", settings.band_margin)));
    }
    let enc = encode(scenario, alpha, settings.truth, settings.band_margin)?;
    let sol = solve_qp(&enc.problem, &settings.qp)?;
    let x = &sol.x;

    let mut schedule = vec![SlotDecision::default(); scenario.horizon];
    let mut temperatures = BTreeMap::new();
    let mut final_energy = BTreeMap::new();
    let mut penalty = 0.0;
    for (s, v) in scenario.sessions.iter().zip(&enc.evs) {
        let mut temps = Vec::with_capacity(v.len);
        for k in 0..v.len {
            let d = &mut schedule[v.start + k];
            let (c, h) = (x[v.charge(k)].max(0.0), x[v.heat(k)].max(0.0));
            if c > 0.0 {
                d.p_charge.insert(v.id, c);
            }
            if h > 0.0 {
                d.p_heat.insert(v.id, h);
            }
            temps.push(x[v.temp(k)]);
        }
        temperatures.insert(v.id, temps);
        let e = x[v.energy];
        final_energy.insert(v.id, e);
        penalty += alpha * (e - s.e_depart).powi(2);
    }
    let mut grid_cost = 0.0;
    for (t, d) in schedule.iter_mut().enumerate() {
        d.settle_supply(scenario.pv_cap[t]);
        if let Some(g) = enc.grid[t] {
            grid_cost += scenario.price[t] * scenario.dt_hours * x[g].max(0.0);
        }
    }
    Ok(OfflineSolution {
        schedule,
        temperatures,
        final_energy,
        objective: sol.objective + enc.constant,
        grid_cost,
        penalty,
        alpha,
        residuals: sol.residuals,
        iterations: sol.iterations,
        polished: sol.polished,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EvSession, ThermalParams};

    fn one_ev(horizon: usize, pv: f64) -> Scenario {
        let mut s = Scenario::flat(horizon, 1.0 / 12.0, -10.0, 0.05, pv);
        s.price_cap = 0.1;
        s.ambient_low = -15.0;
        s.ambient_high = -5.0;
        s.sessions.push(EvSession {
            id: 7,
            t_arrive: 0,
            t_depart: horizon,
            e_initial: 10.0,
            e_depart: 12.0,
            e_cap: 50.0,
            t_initial: 4.0,
            thermal: ThermalParams::default(),
        });
        s
    }

    #[test]
    fn free_pv_meets_demand_at_zero_cost() {
        let s = one_ev(12, 20.0);
        let sol = offline_solve(&s, &OfflineSettings::default()).unwrap();
        assert!(sol.residuals.max() < 1e-6, "{:?}", sol.residuals);
        assert!(sol.grid_cost.abs() < 1e-7);
        assert!((sol.final_energy[&7] - 12.0).abs() < 1e-5);
        for t in &sol.temperatures[&7] {
            assert!(*t >= -1e-6 && *t <= 20.0 + 1e-6);
        }
    }

    #[test]
    fn cold_battery_is_kept_in_band() {
        // At -10 C the battery loses 1.256 C per slot; from 4 C it must be
        // heated within a few slots even with nothing to charge.
        let mut s = one_ev(24, 0.0);
        s.sessions[0].e_depart = 10.0;
        let sol = offline_solve(&s, &OfflineSettings::default()).unwrap();
        assert!(sol.residuals.max() < 1e-6, "{:?}", sol.residuals);
        let heat: f64 = sol.schedule.iter().map(|d| d.heat(7)).sum();
        assert!(heat > 0.0);
        assert!(sol.temperatures[&7].iter().all(|t| *t >= -1e-6));
        // The cheapest way to hold the floor: gain exactly offsets loss.
        let p = ThermalParams::default();
        let per_slot = 1.256 * p.q / p.delta_h;
        assert!(heat <= 24.0 * per_slot + 1e-4, "{heat}");
    }

    #[test]
    fn penalty_trades_off_against_price() {
        // With no PV and a tiny penalty weight, undercharging is cheaper.
        let s = one_ev(24, 0.0);
        let settings = OfflineSettings {
            alpha: Some(1e-4),
            ..OfflineSettings::default()
        };
        let sol = offline_solve(&s, &settings).unwrap();
        assert!(sol.final_energy[&7] < 12.0 - 0.1);
        let strict = offline_solve(&s, &OfflineSettings::default()).unwrap();
        assert!((strict.final_energy[&7] - 12.0).abs() < 0.05);
        assert!(strict.objective >= sol.objective);
    }
}
