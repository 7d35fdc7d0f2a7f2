//! Episode engine.
//!
//! Per slot: observe price, PV and ambient; compute the temperature-dependent
//! caps; ask the policy for a decision; step energy, temperature and queues;
//! admit next slot's arrivals and drop departures; charge the grid draw.
//! Arrivals at slot 0 are in the queues before the first decision. An EV is
//! present in `[t_arrive, t_depart)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{self, SlotContext, ThermostatState};
use crate::controller::{
    assemble_slot_problem, check_assumptions, solve_slot, synthesize_params, Allocation,
    AssumptionVerdict, ControllerParams, DriftMaxima, PresentEv, ThetaMode,
};
use crate::error::{Error, Result};
use crate::model::{validate_scenario, EvId, EvSession, Scenario, SlotDecision};
use crate::queues::{x_from_decisions, GroupMember, QueueState};
use crate::reference::offline::{default_alpha, offline_solve, OfflineSettings};
use crate::reference::qp::{KktResiduals, QpSettings};
use crate::thermal::{self, heat_gain, TruthModel};

/// Feasibility tolerance for decisions and temperature bounds.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Proposed,
    B1,
    B2,
    NoHeat,
    Offline,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Proposed, Method::B1, Method::B2, Method::NoHeat, Method::Offline];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::B1 => "b1",
            Method::B2 => "b2",
            Method::NoHeat => "noheat",
            Method::Offline => "offline",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method '{s}' (expected proposed, b1, b2, noheat or offline)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeConfig {
    pub method: Method,
    pub v: f64,
    pub gamma: f64,
    pub truth: TruthModel,
    pub theta_mode: ThetaMode,
    /// Recorded with the metrics; episodes draw no random numbers.
    pub seed: u64,
    /// Terminal penalty weight for the P1 objective and the offline solve.
    pub alpha: Option<f64>,
    pub offline_qp: QpSettings,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            method: Method::Proposed,
            v: 600.0,
            gamma: 20.0,
            truth: TruthModel::Queue,
            theta_mode: ThetaMode::Theorem,
            seed: 0,
            alpha: None,
            offline_qp: QpSettings::default(),
        }
    }
}

/// Per-EV part of a trace record. `energy`, `temperature` and `h` are the
/// values the policy saw; `*_next` are after the slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvTrace {
    pub id: EvId,
    pub r: usize,
    pub energy: f64,
    pub temperature: f64,
    pub h: f64,
    pub p_charge: f64,
    pub p_heat: f64,
    pub cap_charge: f64,
    pub cap_heat: f64,
    pub w_charge: f64,
    pub w_heat: f64,
    pub energy_next: f64,
    pub temperature_next: f64,
    pub assumptions: AssumptionVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub slot: usize,
    pub price: f64,
    pub pv_cap: f64,
    pub ambient: f64,
    pub p_pv: f64,
    pub p_grid: f64,
    pub cost: f64,
    pub evs: Vec<EvTrace>,
    /// `Q^1..=Q^R` after the slot.
    pub demand_queues: Vec<f64>,
    /// `Y` after the slot.
    pub y_debt: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub allocation: Vec<Allocation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub method: Method,
    pub truth_model: TruthModel,
    pub v: f64,
    pub gamma: f64,
    pub seed: u64,
    pub slots: usize,
    pub ev_count: usize,
    pub total_cost: f64,
    pub fulfillment_ratio: f64,
    /// `total_cost / (100 fulfillment_ratio)`; infinite when nothing was delivered.
    pub cost_index: f64,
    pub heating_ratio: f64,
    pub y_final_over_t: f64,
    pub temperature_violations: usize,
    pub assumption_failures: usize,
    pub demanded_energy: f64,
    pub delivered_energy: f64,
    pub charging_energy: f64,
    pub heating_energy: f64,
    pub pv_energy: f64,
    pub grid_energy: f64,
    pub min_temperature: Option<f64>,
    pub max_temperature: Option<f64>,
    pub alpha: f64,
    /// Grid cost plus `alpha * sum_i (E_final - E_depart)^2`.
    pub p1_objective: f64,
}

/// Extra results of an offline episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineReport {
    pub objective: f64,
    pub grid_cost: f64,
    pub penalty: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
    /// Largest amount any planned power was cut by during replay.
    pub max_clip: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub metrics: EpisodeMetrics,
    pub trace: Vec<TraceRecord>,
    pub drift: DriftMaxima,
    pub controller: ControllerParams,
    pub offline: Option<OfflineReport>,
}

enum Driver<'a> {
    Proposed,
    B1(BTreeMap<EvId, ThermostatState>),
    B2(BTreeMap<EvId, ThermostatState>),
    NoHeat,
    Scripted { schedule: &'a [SlotDecision], max_clip: f64 },
}

struct Live<'a> {
    session: &'a EvSession,
    energy: f64,
    temperature: f64,
}

/// Runs one episode of `config.method` on `scenario`.
pub fn run_episode(scenario: &Scenario, config: &EpisodeConfig) -> Result<Episode> {
    let violations = validate_scenario(scenario);
    if !violations.is_empty() {
        return Err(Error::InvalidScenario(violations));
    }
    let warm_slots = scenario
        .ambient
        .iter()
        .filter(|&&a| scenario.sessions.iter().any(|s| a >= s.thermal.t_low))
        .count();
    if warm_slots > 0 {
        log::warn!(
            "{warm_slots} slot(s) have ambient at or above an EV's lower temperature bound; \
             temperature loss uses the linear fallback there"
        );
    }
    let episode = match config.method {
        Method::Offline => {
            let settings = OfflineSettings {
                alpha: config.alpha,
                truth: config.truth,
                qp: config.offline_qp,
                ..OfflineSettings::default()
            };
            let plan = offline_solve(scenario, &settings)?;
            let mut episode = simulate(scenario, config, Driver::Scripted { schedule: &plan.schedule, max_clip: 0.0 })?;
            if let Some(report) = episode.offline.as_mut() {
                report.objective = plan.objective;
                report.grid_cost = plan.grid_cost;
                report.penalty = plan.penalty;
                report.residuals = plan.residuals;
                report.iterations = plan.iterations;
            }
            episode
        }
        Method::Proposed => simulate(scenario, config, Driver::Proposed)?,
        Method::B1 => simulate(scenario, config, Driver::B1(BTreeMap::new()))?,
        Method::B2 => simulate(scenario, config, Driver::B2(BTreeMap::new()))?,
        Method::NoHeat => simulate(scenario, config, Driver::NoHeat)?,
    };
    if episode.metrics.assumption_failures > 0 {
        let level = if config.method == Method::Proposed { log::Level::Warn } else { log::Level::Info };
        log::log!(
            level,
            "{}: heating/charging assumptions failed in {} EV-slot(s)",
            config.method,
            episode.metrics.assumption_failures
        );
    }
    Ok(episode)
}

/// Replays fixed per-slot decisions, cut down to each slot's caps.
pub fn replay_schedule(scenario: &Scenario, schedule: &[SlotDecision], config: &EpisodeConfig) -> Result<Episode> {
    let violations = validate_scenario(scenario);
    if !violations.is_empty() {
        return Err(Error::InvalidScenario(violations));
    }
    simulate(scenario, config, Driver::Scripted { schedule, max_clip: 0.0 })
}

fn energy_cap(s: &EvSession, energy: f64, dt: f64) -> f64 {
    let room = (s.e_depart - energy).min(s.e_cap - energy).max(0.0);
    room / (s.thermal.delta_c * dt)
}

fn admit<'s>(
    scenario: &'s Scenario,
    ctrl: &ControllerParams,
    t: usize,
    queues: &mut QueueState,
    live: &mut BTreeMap<EvId, Live<'s>>,
) -> Result<Vec<f64>> {
    let batch: Vec<(&EvSession, f64)> = scenario
        .sessions
        .iter()
        .filter(|s| s.t_arrive == t)
        .map(|s| (s, ctrl.theta(s.id)))
        .collect();
    let a = queues.admit_arrivals(t, &batch)?;
    for (s, _) in batch {
        live.insert(
            s.id,
            Live {
                session: s,
                energy: s.e_initial,
                temperature: s.t_initial,
            },
        );
    }
    Ok(a)
}

fn simulate(scenario: &Scenario, config: &EpisodeConfig, mut driver: Driver<'_>) -> Result<Episode> {
    let dt = scenario.dt_hours;
    let ctrl = synthesize_params(scenario, config.v, config.gamma, config.theta_mode)?;
    let r_max = scenario.max_parking().max(1);
    let mut queues = QueueState::new(r_max);
    let mut drift = DriftMaxima::new(config.gamma, r_max);
    let mut live: BTreeMap<EvId, Live> = BTreeMap::new();
    let mut final_energy: BTreeMap<EvId, f64> = BTreeMap::new();
    let mut gain_loss_max: BTreeMap<EvId, (f64, f64)> = BTreeMap::new();
    let mut trace = Vec::with_capacity(scenario.horizon);

    let a0 = admit(scenario, &ctrl, 0, &mut queues, &mut live)?;
    queues.inject(&a0);
    track_arrivals(&mut drift, &a0);
    track_queues(&mut drift, &queues);

    for t in 0..scenario.horizon {
        let (price, pv, ambient) = (scenario.price[t], scenario.pv_cap[t], scenario.ambient[t]);
        let present: Vec<PresentEv> = live
            .values()
            .map(|l| PresentEv {
                id: l.session.id,
                r: l.session.t_depart - t,
                temperature: l.temperature,
                h: queues.h(l.session.id).unwrap_or(l.temperature - ctrl.theta(l.session.id)),
                params: l.session.thermal,
                energy_cap: energy_cap(l.session, l.energy, dt),
            })
            .collect();
        let problem = assemble_slot_problem(&queues, &present, price, pv, &ctrl, dt);
        let ctx = SlotContext {
            queues: &queues,
            evs: &present,
            price,
            pv_cap: pv,
            ctrl: &ctrl,
            dt_hours: dt,
        };
        let mut allocation = Vec::new();
        let decision = match &mut driver {
            Driver::Proposed => {
                let sol = solve_slot(&problem);
                allocation = sol.order;
                sol.decision
            }
            Driver::B1(th) => baselines::b1_decide(&ctx, th),
            Driver::B2(th) => baselines::b2_decide(&ctx, th),
            Driver::NoHeat => baselines::noheat_decide(&ctx),
            Driver::Scripted { schedule, max_clip } => {
                let planned = schedule.get(t).cloned().unwrap_or_default();
                let mut d = SlotDecision::default();
                for e in &problem.evs {
                    let c = planned.charge(e.id).clamp(0.0, e.cap_charge);
                    let h = planned.heat(e.id).clamp(0.0, e.cap_heat.min(e.cap_joint - c).max(0.0));
                    *max_clip = max_clip.max(planned.charge(e.id) - c).max(planned.heat(e.id) - h);
                    if c > 0.0 {
                        d.p_charge.insert(e.id, c);
                    }
                    if h > 0.0 {
                        d.p_heat.insert(e.id, h);
                    }
                }
                d.settle_supply(pv);
                d
            }
        };
        problem
            .check(&decision, TOLERANCE)
            .map_err(|reason| Error::InfeasibleDecision { slot: t, reason })?;

        // Dynamics.
        let mut ev_traces = Vec::with_capacity(present.len());
        let mut groups = Vec::with_capacity(present.len());
        for (ev, slot) in present.iter().zip(&problem.evs) {
            let l = live.get_mut(&ev.id).expect("present EV is live");
            let p = &ev.params;
            let (pc, ph) = (decision.charge(ev.id), decision.heat(ev.id));
            let loss = thermal::decay_loss(p, ambient);
            let verdict = check_assumptions(
                p,
                thermal::peak_charge_rate(p, l.temperature),
                thermal::peak_heat_rate(p, l.temperature),
                loss,
            );
            let energy_next = l.energy + p.delta_c * pc * dt;
            let temperature_next = config.truth.step(p, l.temperature, ambient, pc, ph);
            let gain = heat_gain(p, pc, ph);
            let gl = gain_loss_max.entry(ev.id).or_insert((0.0, 0.0));
            gl.0 = gl.0.max(gain);
            gl.1 = gl.1.max(loss);
            ev_traces.push(EvTrace {
                id: ev.id,
                r: ev.r,
                energy: l.energy,
                temperature: l.temperature,
                h: ev.h,
                p_charge: pc,
                p_heat: ph,
                cap_charge: slot.cap_charge,
                cap_heat: slot.cap_heat,
                w_charge: slot.w_charge,
                w_heat: slot.w_heat,
                energy_next,
                temperature_next,
                assumptions: verdict,
            });
            groups.push(GroupMember {
                id: ev.id,
                r: ev.r,
                delta_c: p.delta_c,
            });
            l.energy = energy_next;
            l.temperature = temperature_next;
            match config.truth {
                TruthModel::Queue => {
                    queues.temp_queue_update(ev.id, loss, gain)?;
                }
                TruthModel::Exact => {
                    queues.set_h(ev.id, temperature_next - ctrl.theta(ev.id))?;
                }
            }
        }

        let x = x_from_decisions(&decision, &groups, dt, r_max);
        for (m, v) in drift.x_max.iter_mut().zip(&x) {
            *m = m.max(*v);
        }
        queues.debt_update(queues.q(1), x[1]);
        let departing: Vec<EvId> = live
            .values()
            .filter(|l| l.session.t_depart == t + 1)
            .map(|l| l.session.id)
            .collect();
        for id in departing {
            let l = live.remove(&id).expect("listed above");
            final_energy.insert(id, l.energy);
            queues.depart(id);
        }
        let a_next = if t + 1 < scenario.horizon {
            admit(scenario, &ctrl, t + 1, &mut queues, &mut live)?
        } else {
            queues.zeros()
        };
        queues.advance(&x, &a_next);
        track_arrivals(&mut drift, &a_next);
        track_queues(&mut drift, &queues);

        trace.push(TraceRecord {
            slot: t,
            price,
            pv_cap: pv,
            ambient,
            p_pv: decision.p_pv,
            p_grid: decision.p_grid,
            cost: price * decision.p_grid * dt,
            evs: ev_traces,
            demand_queues: queues.demand_queues().to_vec(),
            y_debt: queues.y_debt,
            allocation,
        });
    }
    for (id, l) in live {
        final_energy.insert(id, l.energy);
    }
    drift.temp_max = gain_loss_max.into_values().collect();

    let alpha = config.alpha.unwrap_or_else(|| default_alpha(scenario));
    let mut metrics = compute_metrics(&trace, scenario, alpha);
    metrics.method = config.method;
    metrics.truth_model = config.truth;
    metrics.v = config.v;
    metrics.gamma = config.gamma;
    metrics.seed = config.seed;

    let offline = match driver {
        Driver::Scripted { max_clip, .. } => Some(OfflineReport {
            objective: f64::NAN,
            grid_cost: f64::NAN,
            penalty: f64::NAN,
            residuals: KktResiduals::default(),
            iterations: 0,
            max_clip,
        }),
        _ => None,
    };
    Ok(Episode {
        metrics,
        trace,
        drift,
        controller: ctrl,
        offline,
    })
}

fn track_arrivals(drift: &mut DriftMaxima, a: &[f64]) {
    for (m, v) in drift.a_max.iter_mut().zip(a) {
        *m = m.max(*v);
    }
}

fn track_queues(drift: &mut DriftMaxima, q: &QueueState) {
    for (r, v) in q.demand_queues().iter().enumerate() {
        drift.q_max[r + 1] = drift.q_max[r + 1].max(*v);
    }
    drift.y_max = drift.y_max.max(q.y_debt);
}

/// Episode metrics from a complete trace.
///
/// Fulfillment is delivered over demanded energy, 1.0 when nothing was
/// demanded. The final energy of each EV is read from its last trace entry.
pub fn compute_metrics(trace: &[TraceRecord], scenario: &Scenario, alpha: f64) -> EpisodeMetrics {
    let dt = scenario.dt_hours;
    let mut m = EpisodeMetrics {
        method: Method::Proposed,
        truth_model: TruthModel::Queue,
        v: f64::NAN,
        gamma: f64::NAN,
        seed: 0,
        slots: trace.len(),
        ev_count: scenario.sessions.len(),
        total_cost: 0.0,
        fulfillment_ratio: 1.0,
        cost_index: 0.0,
        heating_ratio: 0.0,
        y_final_over_t: 0.0,
        temperature_violations: 0,
        assumption_failures: 0,
        demanded_energy: scenario.total_demand(),
        delivered_energy: 0.0,
        charging_energy: 0.0,
        heating_energy: 0.0,
        pv_energy: 0.0,
        grid_energy: 0.0,
        min_temperature: None,
        max_temperature: None,
        alpha,
        p1_objective: 0.0,
    };
    let mut final_energy: BTreeMap<EvId, f64> = BTreeMap::new();
    for rec in trace {
        m.total_cost += rec.cost;
        m.pv_energy += rec.p_pv * dt;
        m.grid_energy += rec.p_grid * dt;
        for e in &rec.evs {
            let s = scenario.session(e.id);
            let p = s.map(|s| s.thermal).unwrap_or_default();
            m.charging_energy += e.p_charge * dt;
            m.heating_energy += e.p_heat * dt;
            m.delivered_energy += p.delta_c * e.p_charge * dt;
            if e.temperature_next < p.t_low - TOLERANCE || e.temperature_next > p.t_high + TOLERANCE {
                m.temperature_violations += 1;
            }
            if !e.assumptions.holds() {
                m.assumption_failures += 1;
            }
            m.min_temperature = Some(m.min_temperature.map_or(e.temperature_next, |v| v.min(e.temperature_next)));
            m.max_temperature = Some(m.max_temperature.map_or(e.temperature_next, |v| v.max(e.temperature_next)));
            final_energy.insert(e.id, e.energy_next);
        }
    }
    if m.demanded_energy > 0.0 {
        m.fulfillment_ratio = (m.delivered_energy / m.demanded_energy).min(1.0);
    }
    m.cost_index = if m.fulfillment_ratio > 0.0 {
        m.total_cost / (100.0 * m.fulfillment_ratio)
    } else {
        f64::INFINITY
    };
    let used = m.charging_energy + m.heating_energy;
    if used > 0.0 {
        m.heating_ratio = m.heating_energy / used;
    }
    if let Some(last) = trace.last() {
        m.y_final_over_t = last.y_debt / trace.len() as f64;
    }
    let penalty: f64 = scenario
        .sessions
        .iter()
        .map(|s| {
            let e = final_energy.get(&s.id).copied().unwrap_or(s.e_initial);
            alpha * (e - s.e_depart).powi(2)
        })
        .sum();
    m.p1_objective = m.total_cost + penalty;
    m
}
