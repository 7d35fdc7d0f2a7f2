//! Battery thermal physics.
//!
//! Two temperature updates are provided. [`step_exact`] is the lumped
//! Newton-cooling balance
//!
//! ```text
//! q (T' - T) = -eta (T - T_amb) + delta_h p_h + (1 - delta_c) p_c
//! ```
//!
//! and [`step_queue`] is its queue form `T' = T - dT_loss + dT_gain`, where
//! the per-slot loss `dT_loss` is the average drop per slot while cooling
//! from `t_high` to `t_low` with the charger and heater off.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EvId, ThermalParams};

/// Which branch of [`decay_loss`] applies at a given ambient temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayRegime {
    /// Ambient below `t_low`: the logarithmic cooling horizon is defined.
    Logarithmic,
    /// Ambient at or above `t_low`: midpoint-linearized cooling is used.
    Fallback,
}

pub fn decay_regime(params: &ThermalParams, ambient: f64) -> DecayRegime {
    if ambient < params.t_low {
        DecayRegime::Logarithmic
    } else {
        DecayRegime::Fallback
    }
}

/// Real-valued number of slots needed to cool from `t_high` to `t_low` with
/// no heating or charging. `None` when ambient is not below `t_low`.
pub fn cooling_slots(params: &ThermalParams, ambient: f64) -> Option<f64> {
    if ambient >= params.t_low {
        return None;
    }
    let ratio = (ambient - params.t_low) / (ambient - params.t_high);
    Some(ratio.ln() / params.zeta().ln())
}

/// Per-slot temperature loss to ambient (°C per slot).
///
/// Below `t_low` this is `(t_high - t_low) / K`. Otherwise the loss of the
/// band midpoint under linear cooling, `(eta / q) * max(0, mid - ambient)`.
pub fn decay_loss(params: &ThermalParams, ambient: f64) -> f64 {
    match cooling_slots(params, ambient) {
        Some(k) => (params.t_high - params.t_low) / k,
        None => {
            let mid = 0.5 * (params.t_low + params.t_high);
            params.eta / params.q * (mid - ambient).max(0.0)
        }
    }
}

/// Temperature rise from heating and charging losses (°C per slot).
pub fn heat_gain(params: &ThermalParams, p_c: f64, p_h: f64) -> f64 {
    (params.delta_h * p_h + (1.0 - params.delta_c) * p_c) / params.q
}

/// One slot of the lumped Newton-cooling model.
pub fn step_exact(temp: f64, ambient: f64, p_c: f64, p_h: f64, params: &ThermalParams) -> f64 {
    temp + (-params.eta * (temp - ambient)
        + params.delta_h * p_h
        + (1.0 - params.delta_c) * p_c)
        / params.q
}

/// One slot of the queue model: `temp - dt_loss + gain(p_c, p_h)`.
pub fn step_queue(temp: f64, dt_loss: f64, p_c: f64, p_h: f64, params: &ThermalParams) -> f64 {
    temp - dt_loss + heat_gain(params, p_c, p_h)
}

/// Which temperature recurrence advances the simulated batteries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthModel {
    /// [`step_queue`] with the per-slot loss of the current ambient.
    #[default]
    Queue,
    /// [`step_exact`].
    Exact,
}

impl TruthModel {
    pub fn step(self, params: &ThermalParams, temp: f64, ambient: f64, p_c: f64, p_h: f64) -> f64 {
        match self {
            TruthModel::Queue => step_queue(temp, decay_loss(params, ambient), p_c, p_h, params),
            TruthModel::Exact => step_exact(temp, ambient, p_c, p_h, params),
        }
    }

    /// `(a, b)` with `next = a * temp + b + heat_gain(p_c, p_h)`.
    pub fn affine(self, params: &ThermalParams, ambient: f64) -> (f64, f64) {
        match self {
            TruthModel::Queue => (1.0, -decay_loss(params, ambient)),
            TruthModel::Exact => (params.zeta(), params.eta / params.q * ambient),
        }
    }
}

impl std::str::FromStr for TruthModel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "queue" => Ok(TruthModel::Queue),
            "exact" => Ok(TruthModel::Exact),
            other => Err(format!("unknown truth model '{other}' (expected queue or exact)")),
        }
    }
}

/// `p_c_base + beta_c * temp`, floored at zero.
pub fn peak_charge_rate(params: &ThermalParams, temp: f64) -> f64 {
    (params.p_c_base + params.beta_c * temp).max(0.0)
}

/// `p_h_base - beta_h * temp`, floored at zero.
pub fn peak_heat_rate(params: &ThermalParams, temp: f64) -> f64 {
    (params.p_h_base - params.beta_h * temp).max(0.0)
}

/// Slot-level thermal context of one EV at one ambient temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalSlotContext {
    pub zeta: f64,
    /// `None` on the fallback branch.
    pub k_slots: Option<f64>,
    pub dt_loss: f64,
    pub dt_gain_max: f64,
    pub dt_loss_min: f64,
    pub dt_loss_max: f64,
}

/// Horizon-wide loss and gain bounds derived from the declared ambient range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalBounds {
    pub dt_loss_min: f64,
    pub dt_loss_max: f64,
    pub dt_gain_max: f64,
}

impl ThermalBounds {
    pub fn context(&self, params: &ThermalParams, ambient: f64) -> ThermalSlotContext {
        ThermalSlotContext {
            zeta: params.zeta(),
            k_slots: cooling_slots(params, ambient),
            dt_loss: decay_loss(params, ambient),
            dt_gain_max: self.dt_gain_max,
            dt_loss_min: self.dt_loss_min,
            dt_loss_max: self.dt_loss_max,
        }
    }
}

/// Largest temperature gain reachable in one slot over `[t_low, t_high]`.
///
/// Both peak rates are linear in temperature, so their maxima sit at the band
/// ends; the heating term is additionally capped by the joint power limit.
pub fn max_heat_gain(params: &ThermalParams) -> f64 {
    let ends = [params.t_low, params.t_high];
    let heat = ends
        .iter()
        .map(|&t| peak_heat_rate(params, t))
        .fold(0.0, f64::max)
        .min(params.p_total);
    let charge = ends
        .iter()
        .map(|&t| peak_charge_rate(params, t))
        .fold(0.0, f64::max);
    (params.delta_h * heat + (1.0 - params.delta_c) * charge) / params.q
}

/// Loss bounds over `[ambient_low, ambient_high]` and the maximum gain.
///
/// Fails when `ambient_high >= t_high`: the scenario is outside the cold
/// regime the queue model is built for.
pub fn thermal_bounds(
    ev: EvId,
    params: &ThermalParams,
    ambient_low: f64,
    ambient_high: f64,
) -> Result<ThermalBounds> {
    debug_assert!(ambient_low <= ambient_high);
    if ambient_high >= params.t_high {
        return Err(Error::AmbientTooWarm {
            ev,
            ambient_high,
            t_high: params.t_high,
        });
    }
    Ok(ThermalBounds {
        dt_loss_min: decay_loss(params, ambient_high),
        dt_loss_max: decay_loss(params, ambient_low),
        dt_gain_max: max_heat_gain(params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band(t_low: f64, t_high: f64) -> ThermalParams {
        ThermalParams {
            t_low,
            t_high,
            ..ThermalParams::default()
        }
    }

    /// Cools from `t_high` with the exact recurrence and returns the
    /// interpolated real slot index at which `t_low` is crossed.
    fn simulated_crossing(p: &ThermalParams, ambient: f64) -> f64 {
        let mut t = p.t_high;
        let mut n = 0usize;
        loop {
            let next = t + (-p.eta * (t - ambient)) / p.q;
            if next <= p.t_low {
                return n as f64 + (t - p.t_low) / (t - next);
            }
            t = next;
            n += 1;
            assert!(n < 100_000);
        }
    }

    #[test]
    fn decay_loss_matches_simulated_cooling() {
        let p = band(0.0, 20.0);
        let k = cooling_slots(&p, -10.0).unwrap();
        let loss = decay_loss(&p, -10.0);
        assert!((k - 15.9236).abs() < 1e-4, "{k}");
        assert!((loss - 1.2560).abs() < 1e-4, "{loss}");
        assert!((loss * k - 20.0).abs() < 1e-9);
        assert!((simulated_crossing(&p, -10.0) - k).abs() < 0.5);
    }

    #[test]
    fn decay_loss_fallback_at_band_floor() {
        let p = band(0.0, 20.0);
        assert_eq!(decay_regime(&p, 0.0), DecayRegime::Fallback);
        assert!(cooling_slots(&p, 0.0).is_none());
        let loss = decay_loss(&p, 0.0);
        assert!((loss - 0.048 / 0.72 * 10.0).abs() < 1e-12);
        assert!((loss - 0.6667).abs() < 1e-4);
        // Ambient above the midpoint: no loss at all.
        assert_eq!(decay_loss(&p, 15.0), 0.0);
    }

    #[test]
    fn decay_loss_strictly_increases_as_ambient_drops() {
        let p = band(0.0, 20.0);
        let grid: Vec<f64> = (0..50).map(|i| -40.0 + 39.0 * i as f64 / 49.0).collect();
        for w in grid.windows(2) {
            assert!(decay_loss(&p, w[0]) > decay_loss(&p, w[1]), "{w:?}");
        }
    }

    #[test]
    fn exact_step_examples() {
        let p = ThermalParams::default();
        assert_eq!(step_exact(20.0, 20.0, 0.0, 0.0, &p), 20.0);
        let heated = step_exact(10.0, -10.0, 0.0, 3.0, &p);
        assert!((heated - (10.0 + (-0.048 * 20.0 + 0.8 * 3.0) / 0.72)).abs() < 1e-12);
        assert!((heated - 12.0).abs() < 1e-12);
        let charged = step_exact(10.0, -10.0, 4.8, 0.0, &p);
        assert!((charged - 9.0).abs() < 1e-12);
    }

    #[test]
    fn queue_step_examples() {
        let p = ThermalParams::default();
        assert!((step_queue(20.0, 1.256, 0.0, 0.0, &p) - 18.744).abs() < 1e-12);
        let warmed = step_queue(0.0, 1.256, 0.0, 3.0, &p);
        assert!((warmed - (-1.256 + 2.4 / 0.72)).abs() < 1e-12);
        assert!((warmed - 2.0773).abs() < 1e-4);
        // Heating that exactly offsets the loss.
        let p_h = 1.256 * p.q / p.delta_h;
        assert!((step_queue(7.5, 1.256, 0.0, p_h, &p) - 7.5).abs() < 1e-12);
    }

    #[test]
    fn peak_rates() {
        let p = ThermalParams::default();
        assert_eq!(peak_charge_rate(&p, 0.0), 4.8);
        assert_eq!(peak_heat_rate(&p, 0.0), 3.0);
        assert!((peak_charge_rate(&p, 10.0) - 6.0).abs() < 1e-12);
        assert!((peak_heat_rate(&p, 10.0) - 2.76).abs() < 1e-12);
        assert_eq!(peak_charge_rate(&p, -40.0), 0.0);
        assert_eq!(peak_heat_rate(&p, 200.0), 0.0);
    }

    #[test]
    fn bounds_for_a_cold_band() {
        let p = ThermalParams::default();
        let b = thermal_bounds(0, &p, -15.0, -5.0).unwrap();
        assert!((b.dt_gain_max - (0.8 * 3.0 + 0.05 * 7.2) / 0.72).abs() < 1e-12);
        assert!((b.dt_gain_max - 3.8333).abs() < 1e-4);
        assert_eq!(b.dt_loss_max, decay_loss(&p, -15.0));
        assert_eq!(b.dt_loss_min, decay_loss(&p, -5.0));
        assert!(b.dt_loss_max > b.dt_loss_min);

        let flat = thermal_bounds(0, &p, -8.0, -8.0).unwrap();
        assert_eq!(flat.dt_loss_min, flat.dt_loss_max);

        let ctx = b.context(&p, -10.0);
        assert!(ctx.zeta > 0.0 && ctx.zeta < 1.0);
        assert!((ctx.dt_loss * ctx.k_slots.unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn bounds_reject_warm_scenarios() {
        let p = ThermalParams::default();
        assert!(matches!(
            thermal_bounds(3, &p, -5.0, 20.0),
            Err(Error::AmbientTooWarm { ev: 3, .. })
        ));
    }

    #[test]
    fn zero_input_queue_step_loses_exactly_the_decay() {
        let p = ThermalParams::default();
        let loss = decay_loss(&p, -12.0);
        let t = step_queue(6.3, loss, 0.0, 0.0, &p);
        assert_eq!(t, 6.3 - loss);
    }

    #[test]
    fn truth_models_match_their_affine_form() {
        let p = ThermalParams::default();
        for model in [TruthModel::Queue, TruthModel::Exact] {
            let (a, b) = model.affine(&p, -12.0);
            let direct = model.step(&p, 7.5, -12.0, 2.0, 1.0);
            let affine = a * 7.5 + b + heat_gain(&p, 2.0, 1.0);
            assert!((direct - affine).abs() < 1e-12);
        }
        assert_eq!("exact".parse::<TruthModel>(), Ok(TruthModel::Exact));
        assert!("newton".parse::<TruthModel>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn params() -> impl Strategy<Value = ThermalParams> {
            (0.2f64..2.0, 0.01f64..0.9, -10.0f64..5.0, 5.0f64..40.0).prop_map(
                |(q, eta_frac, t_low, width)| ThermalParams {
                    q,
                    eta: eta_frac * q,
                    t_low,
                    t_high: t_low + width,
                    ..ThermalParams::default()
                },
            )
        }

        proptest! {
            #[test]
            fn loss_times_horizon_is_band_width(p in params(), below in 0.1f64..40.0) {
                let ambient = p.t_low - below;
                let k = cooling_slots(&p, ambient).unwrap();
                prop_assert!(k > 0.0);
                let loss = decay_loss(&p, ambient);
                prop_assert!((loss * k - (p.t_high - p.t_low)).abs() < 1e-9);
            }

            #[test]
            fn loss_is_nonnegative_and_monotone(p in params(), a in -50.0f64..30.0, d in 0.0f64..10.0) {
                let hi = decay_loss(&p, a - d);
                let lo = decay_loss(&p, a);
                prop_assert!(lo >= 0.0);
                // The two branches do not meet at t_low.
                if decay_regime(&p, a) == decay_regime(&p, a - d) {
                    prop_assert!(hi >= lo - 1e-12);
                }
            }

            #[test]
            fn exact_step_approaches_ambient(t0 in -30.0f64..40.0, ambient in -30.0f64..10.0) {
                let p = ThermalParams::default();
                let mut t = t0;
                for _ in 0..500 {
                    let next = step_exact(t, ambient, 0.0, 0.0, &p);
                    prop_assert!((next - ambient).abs() <= (t - ambient).abs() + 1e-12);
                    prop_assert!((next - ambient) * (t0 - ambient) >= 0.0);
                    t = next;
                }
                prop_assert!((t - ambient).abs() < 1e-9 * (1.0 + (t0 - ambient).abs()));
            }

            #[test]
            fn peak_rates_are_monotone(t in -60.0f64..60.0, d in 0.0f64..10.0) {
                let p = ThermalParams::default();
                prop_assert!(peak_charge_rate(&p, t + d) >= peak_charge_rate(&p, t));
                prop_assert!(peak_heat_rate(&p, t + d) <= peak_heat_rate(&p, t));
            }
        }
    }
}
