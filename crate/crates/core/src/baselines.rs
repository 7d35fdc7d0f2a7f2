//! Comparison policies.
//!
//! * B1 heats with an on/off thermostat, then charges with the queue-based
//!   per-slot solver restricted to charging power and blind to temperature.
//! * B2 heats with the same thermostat and charges every EV at its peak rate.
//! * NoHeat never heats and charges like B1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::controller::{charge_slope, solve_slot, ControllerParams, EvSlot, PresentEv, SlotProblem};
use crate::model::{EvId, SlotDecision};
use crate::queues::QueueState;
use crate::thermal;

pub const BAND_LOW: f64 = 9.5;
pub const BAND_HIGH: f64 = 10.5;

/// On/off heater with hysteresis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermostatState {
    pub heater_on: bool,
    pub band_low: f64,
    pub band_high: f64,
}

impl Default for ThermostatState {
    fn default() -> Self {
        Self {
            heater_on: false,
            band_low: BAND_LOW,
            band_high: BAND_HIGH,
        }
    }
}

/// Switches on below `band_low`, off above `band_high`, otherwise keeps its
/// state. Returns the heating power: `heat_cap` when on, zero when off.
pub fn bangbang_heat(state: ThermostatState, temp: f64, heat_cap: f64) -> (f64, ThermostatState) {
    debug_assert!(heat_cap >= 0.0);
    let heater_on = if temp < state.band_low {
        true
    } else if temp > state.band_high {
        false
    } else {
        state.heater_on
    };
    let next = ThermostatState { heater_on, ..state };
    (if heater_on { heat_cap } else { 0.0 }, next)
}

/// Everything a policy sees in one slot.
#[derive(Debug, Clone, Copy)]
pub struct SlotContext<'a> {
    pub queues: &'a QueueState,
    pub evs: &'a [PresentEv],
    pub price: f64,
    pub pv_cap: f64,
    pub ctrl: &'a ControllerParams,
    pub dt_hours: f64,
}

fn thermostat_heat(ctx: &SlotContext<'_>, thermostats: &mut BTreeMap<EvId, ThermostatState>) -> BTreeMap<EvId, f64> {
    let mut heat = BTreeMap::new();
    for ev in ctx.evs {
        let cap = thermal::peak_heat_rate(&ev.params, ev.temperature).min(ev.params.p_total);
        let state = thermostats.entry(ev.id).or_default();
        let (p, next) = bangbang_heat(*state, ev.temperature, cap);
        *state = next;
        if p > 0.0 {
            heat.insert(ev.id, p);
        }
    }
    heat
}

fn charge_cap(ev: &PresentEv) -> f64 {
    thermal::peak_charge_rate(&ev.params, ev.temperature)
        .min(ev.energy_cap)
        .max(0.0)
}

/// Charging stage shared by B1 and NoHeat: the per-slot problem with heating
/// fixed to `heat`, no temperature coupling, the joint cap reduced by the
/// heating draw, and free PV reduced by the heating load.
pub fn queue_charging(ctx: &SlotContext<'_>, heat: &BTreeMap<EvId, f64>) -> SlotDecision {
    let heat_load: f64 = heat.values().sum();
    let problem = SlotProblem {
        evs: ctx
            .evs
            .iter()
            .map(|ev| {
                let h = heat.get(&ev.id).copied().unwrap_or(0.0);
                EvSlot {
                    id: ev.id,
                    w_charge: charge_slope(ctx.queues, ev, ctx.ctrl.gamma, ctx.dt_hours, false),
                    w_heat: 0.0,
                    cap_charge: charge_cap(ev),
                    cap_heat: 0.0,
                    cap_joint: (ev.params.p_total - h).max(0.0),
                }
            })
            .collect(),
        pv_free: (ctx.pv_cap - heat_load).max(0.0),
        grid_unit_cost: ctx.ctrl.v_weight * ctx.price * ctx.dt_hours,
    };
    let mut decision = solve_slot(&problem).decision;
    decision.p_heat = heat.clone();
    decision.settle_supply(ctx.pv_cap);
    decision
}

pub fn b1_decide(ctx: &SlotContext<'_>, thermostats: &mut BTreeMap<EvId, ThermostatState>) -> SlotDecision {
    let heat = thermostat_heat(ctx, thermostats);
    queue_charging(ctx, &heat)
}

pub fn b2_decide(ctx: &SlotContext<'_>, thermostats: &mut BTreeMap<EvId, ThermostatState>) -> SlotDecision {
    let heat = thermostat_heat(ctx, thermostats);
    let mut decision = SlotDecision::default();
    for ev in ctx.evs {
        let h = heat.get(&ev.id).copied().unwrap_or(0.0);
        let c = charge_cap(ev).min(ev.params.p_total - h).max(0.0);
        if c > 0.0 {
            decision.p_charge.insert(ev.id, c);
        }
    }
    decision.p_heat = heat;
    decision.settle_supply(ctx.pv_cap);
    decision
}

pub fn noheat_decide(ctx: &SlotContext<'_>) -> SlotDecision {
    queue_charging(ctx, &BTreeMap::new())
}
