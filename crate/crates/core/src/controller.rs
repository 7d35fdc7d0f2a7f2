//! The online drift-plus-penalty policy.
//!
//! Each slot the controller minimizes a linear function of the per-EV
//! charging and heating powers plus the V-weighted grid cost:
//!
//! ```text
//! sum_i (w_c_i p_c_i + w_h_i p_h_i) + V lambda dt max(sum_i (p_c_i + p_h_i) - pv, 0)
//! ```
//!
//! with `w_c_i = -(gamma / r_i) Q^{r_i} delta_c dt - [r_i = 1] gamma Y delta_c dt +
//! H_i (1 - delta_c) / q_i` and `w_h_i = H_i delta_h / q_i`, subject to the
//! per-EV boxes and joint caps. The temperature offset `theta_i` and the
//! admissible range of `V` come from [`compute_theta`] and [`compute_v_max`];
//! with those, every battery temperature stays inside its band.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EvId, Scenario, SlotDecision, ThermalParams};
use crate::queues::QueueState;
use crate::thermal::{self, ThermalBounds};

/// How strictly the feasibility conditions on `theta` and `V` are enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaMode {
    /// `theta_i` from [`compute_theta`] and `V <= V_max` enforced.
    #[default]
    Theorem,
    /// `theta_i` from [`compute_theta`] (or an override) with any `V > 0`.
    Permissive,
}

impl std::str::FromStr for ThetaMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "theorem" => Ok(ThetaMode::Theorem),
            "permissive" => Ok(ThetaMode::Permissive),
            other => Err(format!("unknown theta mode '{other}' (expected theorem or permissive)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub v_weight: f64,
    pub gamma: f64,
    pub theta_by_ev: BTreeMap<EvId, f64>,
    /// `None` when the scenario admits no finite bound (zero price cap) or
    /// the bound could not be evaluated in permissive mode.
    pub v_max: Option<f64>,
}

impl ControllerParams {
    pub fn theta(&self, id: EvId) -> f64 {
        self.theta_by_ev.get(&id).copied().unwrap_or(0.0)
    }
}

/// `theta = q V price_cap dt / delta_h + dT_loss_max + t_low`.
///
/// The horizon maximum of `loss - gain` is attained with zero gain, so it is
/// taken as `dT_loss_max`.
pub fn compute_theta(
    params: &ThermalParams,
    bounds: &ThermalBounds,
    v: f64,
    price_cap: f64,
    dt_hours: f64,
) -> f64 {
    params.q * v * price_cap * dt_hours / params.delta_h + bounds.dt_loss_max + params.t_low
}

/// Largest `V` that keeps this EV's temperature band feasible.
///
/// `(t_high - t_low - (gain_max - loss_min) - loss_max) / (q price_cap dt / delta_h)`.
/// Infinite when `price_cap` is zero.
pub fn compute_v_max(
    ev: EvId,
    params: &ThermalParams,
    bounds: &ThermalBounds,
    price_cap: f64,
    dt_hours: f64,
) -> Result<f64> {
    let numerator = params.t_high
        - params.t_low
        - (bounds.dt_gain_max - bounds.dt_loss_min)
        - bounds.dt_loss_max;
    if !(numerator > 0.0) {
        return Err(Error::BandTooNarrow { ev, numerator });
    }
    let per_v = params.q * price_cap * dt_hours / params.delta_h;
    Ok(if per_v > 0.0 { numerator / per_v } else { f64::INFINITY })
}

/// Derives `theta_i` for every session and checks `V` against `V_max`.
pub fn synthesize_params(
    scenario: &Scenario,
    v: f64,
    gamma: f64,
    mode: ThetaMode,
) -> Result<ControllerParams> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::BadParameter(format!("V must be positive, got {v}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::BadParameter(format!("gamma must be positive, got {gamma}")));
    }
    let mut theta_by_ev = BTreeMap::new();
    let mut v_max = Some(f64::INFINITY);
    for ev in &scenario.sessions {
        let p = &ev.thermal;
        let bounds = match thermal::thermal_bounds(ev.id, p, scenario.ambient_low, scenario.ambient_high) {
            Ok(b) => b,
            Err(e) if mode == ThetaMode::Theorem => return Err(e),
            Err(_) => ThermalBounds {
                dt_loss_min: thermal::decay_loss(p, scenario.ambient_high),
                dt_loss_max: thermal::decay_loss(p, scenario.ambient_low),
                dt_gain_max: thermal::max_heat_gain(p),
            },
        };
        theta_by_ev.insert(
            ev.id,
            compute_theta(p, &bounds, v, scenario.price_cap, scenario.dt_hours),
        );
        match compute_v_max(ev.id, p, &bounds, scenario.price_cap, scenario.dt_hours) {
            Ok(vm) => v_max = v_max.map(|cur| cur.min(vm)),
            Err(e) if mode == ThetaMode::Theorem => return Err(e),
            Err(_) => v_max = None,
        }
    }
    if mode == ThetaMode::Theorem {
        if let Some(vm) = v_max {
            if v > vm {
                return Err(Error::VAboveMax { v, v_max: vm });
            }
        }
    }
    Ok(ControllerParams {
        v_weight: v,
        gamma,
        theta_by_ev,
        v_max: v_max.filter(|x| x.is_finite()),
    })
}

/// Per-slot check of the two cold-climate conditions the feasibility argument
/// relies on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionVerdict {
    /// Charging alone never warms the battery: `(1 - delta_c) p_c_peak / q - loss <= 0`.
    pub charging_cools: bool,
    /// Full available heating warms it: `delta_h min(p_h_peak, p_total - p_c_peak) / q - loss >= 0`.
    pub heating_warms: bool,
}

impl AssumptionVerdict {
    pub fn holds(&self) -> bool {
        self.charging_cools && self.heating_warms
    }
}

pub fn check_assumptions(
    params: &ThermalParams,
    peak_charge: f64,
    peak_heat: f64,
    dt_loss: f64,
) -> AssumptionVerdict {
    let charge_warming = (1.0 - params.delta_c) * peak_charge / params.q - dt_loss;
    let heat_room = peak_heat.min(params.p_total - peak_charge).max(0.0);
    let heating_margin = params.delta_h * heat_room / params.q - dt_loss;
    AssumptionVerdict {
        charging_cools: charge_warming <= 0.0,
        heating_warms: heating_margin >= 0.0,
    }
}

/// One EV as seen by the per-slot problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvSlot {
    pub id: EvId,
    /// Objective coefficient of charging power.
    pub w_charge: f64,
    /// Objective coefficient of heating power.
    pub w_heat: f64,
    pub cap_charge: f64,
    pub cap_heat: f64,
    pub cap_joint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotProblem {
    pub evs: Vec<EvSlot>,
    /// Free PV power available this slot.
    pub pv_free: f64,
    /// Cost per kW drawn from the grid, `V price dt`.
    pub grid_unit_cost: f64,
}

impl SlotProblem {
    pub fn objective(&self, decision: &SlotDecision) -> f64 {
        let linear: f64 = self
            .evs
            .iter()
            .map(|e| e.w_charge * decision.charge(e.id) + e.w_heat * decision.heat(e.id))
            .sum();
        linear + self.grid_unit_cost * (decision.load() - self.pv_free).max(0.0)
    }

    /// Box, joint-cap and supply constraints, each within `tol`.
    pub fn check(&self, decision: &SlotDecision, tol: f64) -> std::result::Result<(), String> {
        for e in &self.evs {
            let (c, h) = (decision.charge(e.id), decision.heat(e.id));
            if c < -tol || c > e.cap_charge + tol {
                return Err(format!("EV {} charge {c} outside [0, {}]", e.id, e.cap_charge));
            }
            if h < -tol || h > e.cap_heat + tol {
                return Err(format!("EV {} heat {h} outside [0, {}]", e.id, e.cap_heat));
            }
            if c + h > e.cap_joint + tol {
                return Err(format!("EV {} joint power {} above {}", e.id, c + h, e.cap_joint));
            }
        }
        let known = |id: &EvId| self.evs.iter().any(|e| e.id == *id);
        if let Some(id) = decision
            .p_charge
            .keys()
            .chain(decision.p_heat.keys())
            .find(|id| !known(id))
        {
            return Err(format!("power assigned to absent EV {id}"));
        }
        decision.check_supply(self.pv_free, tol)
    }
}

/// Input for one present EV when assembling the slot problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresentEv {
    pub id: EvId,
    /// Remaining parking slots, `1..=R`.
    pub r: usize,
    pub temperature: f64,
    pub h: f64,
    pub params: ThermalParams,
    /// Per-EV energy cap on charging power (kW): remaining demand and battery
    /// headroom, both converted through `delta_c dt`.
    pub energy_cap: f64,
}

/// Charging coefficient from the demand and debt queues, optionally coupled
/// to the virtual temperature queue.
pub fn charge_slope(
    queues: &QueueState,
    ev: &PresentEv,
    gamma: f64,
    dt_hours: f64,
    temperature_coupling: bool,
) -> f64 {
    let per_kw = ev.params.delta_c * dt_hours;
    let mut w = -(gamma / ev.r as f64) * queues.q(ev.r) * per_kw;
    if ev.r == 1 {
        w -= gamma * queues.y_debt * per_kw;
    }
    if temperature_coupling {
        w += ev.h * (1.0 - ev.params.delta_c) / ev.params.q;
    }
    w
}

pub fn heat_slope(ev: &PresentEv) -> f64 {
    ev.h * ev.params.delta_h / ev.params.q
}

pub fn assemble_slot_problem(
    queues: &QueueState,
    evs: &[PresentEv],
    price: f64,
    pv_cap: f64,
    ctrl: &ControllerParams,
    dt_hours: f64,
) -> SlotProblem {
    let evs = evs
        .iter()
        .map(|ev| EvSlot {
            id: ev.id,
            w_charge: charge_slope(queues, ev, ctrl.gamma, dt_hours, true),
            w_heat: heat_slope(ev),
            cap_charge: thermal::peak_charge_rate(&ev.params, ev.temperature)
                .min(ev.energy_cap)
                .max(0.0),
            cap_heat: thermal::peak_heat_rate(&ev.params, ev.temperature),
            cap_joint: ev.params.p_total,
        })
        .collect();
    SlotProblem {
        evs,
        pv_free: pv_cap.max(0.0),
        grid_unit_cost: ctrl.v_weight * price * dt_hours,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerKind {
    Charge,
    Heat,
}

/// One step of the greedy allocation, in the order it was made.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub id: EvId,
    pub kind: PowerKind,
    pub slope: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSolution {
    pub decision: SlotDecision,
    pub objective: f64,
    pub order: Vec<Allocation>,
}

struct Segment {
    id: EvId,
    kind: PowerKind,
    slope: f64,
    len: f64,
}

/// Exact minimizer of the per-slot problem.
///
/// Per EV, the cheaper variable is filled first up to its cap (or the joint
/// cap), then the other one up to whatever joint capacity is left. That gives
/// each EV a convex two-piece cost curve in its total power. All pieces are
/// then filled in slope order while the slope plus the marginal supply cost
/// (zero on free PV, `grid_unit_cost` beyond it) stays negative. Ties go to
/// the lower EV id, charging before heating.
pub fn solve_slot(problem: &SlotProblem) -> SlotSolution {
    let mut segments = Vec::with_capacity(2 * problem.evs.len());
    for e in &problem.evs {
        let charge_first = e.w_charge <= e.w_heat;
        let (first, second) = if charge_first {
            ((PowerKind::Charge, e.w_charge, e.cap_charge), (PowerKind::Heat, e.w_heat, e.cap_heat))
        } else {
            ((PowerKind::Heat, e.w_heat, e.cap_heat), (PowerKind::Charge, e.w_charge, e.cap_charge))
        };
        let joint = e.cap_joint.max(0.0);
        let len1 = first.2.max(0.0).min(joint);
        let len2 = second.2.max(0.0).min(joint - len1);
        segments.push(Segment { id: e.id, kind: first.0, slope: first.1, len: len1 });
        segments.push(Segment { id: e.id, kind: second.0, slope: second.1, len: len2 });
    }
    segments.sort_by(|a, b| {
        a.slope
            .total_cmp(&b.slope)
            .then(a.id.cmp(&b.id))
            .then(a.kind.cmp(&b.kind))
    });

    let mut decision = SlotDecision::default();
    let mut order = Vec::new();
    let mut used = 0.0;
    for seg in &segments {
        if seg.slope.partial_cmp(&0.0) != Some(Ordering::Less) {
            break;
        }
        let pv_room = (problem.pv_free - used).max(0.0);
        let mut take = seg.len.min(pv_room);
        if seg.len > take && seg.slope + problem.grid_unit_cost < 0.0 {
            take = seg.len;
        }
        if take <= 0.0 {
            continue;
        }
        used += take;
        let map = match seg.kind {
            PowerKind::Charge => &mut decision.p_charge,
            PowerKind::Heat => &mut decision.p_heat,
        };
        map.insert(seg.id, take);
        order.push(Allocation {
            id: seg.id,
            kind: seg.kind,
            slope: seg.slope,
            power: take,
        });
    }
    decision.settle_supply(problem.pv_free);
    let objective = problem.objective(&decision);
    SlotSolution {
        decision,
        objective,
        order,
    }
}

/// Upper bounds observed over an episode, feeding [`drift_bound`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DriftMaxima {
    pub gamma: f64,
    pub r_max: usize,
    /// `Q_max^r`, index `r` in `1..=R+1`.
    pub q_max: Vec<f64>,
    pub y_max: f64,
    /// `a_max^r`, index `r` in `1..=R`.
    pub a_max: Vec<f64>,
    /// `x_max^r`, index `r` in `1..=R`.
    pub x_max: Vec<f64>,
    /// Per EV `(dT_gain_max, dT_loss_max)`.
    pub temp_max: Vec<(f64, f64)>,
}

impl DriftMaxima {
    pub fn new(gamma: f64, r_max: usize) -> Self {
        Self {
            gamma,
            r_max,
            q_max: vec![0.0; r_max + 2],
            y_max: 0.0,
            a_max: vec![0.0; r_max + 1],
            x_max: vec![0.0; r_max + 1],
            temp_max: Vec::new(),
        }
    }
}

fn at(v: &[f64], r: usize) -> f64 {
    v.get(r).copied().unwrap_or(0.0)
}

/// The constant `B` of the drift-plus-penalty bound, evaluated term by term
/// from observed maxima:
///
/// ```text
/// B = g/(2(R+1)) Qmax^{R+1}^2 + g/4 Qmax^1^2 + g Ymax Qmax^1
///   + sum_r g/(2(r+1)) (amax^r^2 + 2 Qmax^{r+1} amax^r)
///   + sum_r g/(2r) xmax^r^2
///   + 1/2 sum_i max(dTc_i^2, dTd_i^2)
/// ```
pub fn drift_bound(m: &DriftMaxima) -> f64 {
    let g = m.gamma;
    let big_r = m.r_max as f64;
    let q1 = at(&m.q_max, 1);
    let mut b = g / (2.0 * (big_r + 1.0)) * at(&m.q_max, m.r_max + 1).powi(2)
        + g / 4.0 * q1 * q1
        + g * m.y_max * q1;
    for r in 1..=m.r_max {
        let rf = r as f64;
        let a = at(&m.a_max, r);
        b += g / (2.0 * (rf + 1.0)) * (a * a + 2.0 * at(&m.q_max, r + 1) * a);
        b += g / (2.0 * rf) * at(&m.x_max, r).powi(2);
    }
    b + 0.5
        * m.temp_max
            .iter()
            .map(|(c, d)| (c * c).max(d * d))
            .sum::<f64>()
}
