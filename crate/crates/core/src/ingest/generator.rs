//! Seeded synthetic scenarios.
//!
//! Each day repeats the same hourly shapes: a cosine ambient curve coldest
//! at 03:00, a three-level time-of-use tariff and a half-sine PV bell
//! between 08:00 and 16:00. Sessions are drawn independently per day.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::files::declare_bounds;
use crate::ingest::series::step_hold;
use crate::model::{EvSession, Scenario, ThermalParams};

/// How an arriving battery's temperature is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum InitialTemperature {
    /// Uniform in `[t_low, t_low + spread]`.
    AboveLow { spread: f64 },
    Uniform { low: f64, high: f64 },
    Fixed { value: f64 },
}

impl Default for InitialTemperature {
    fn default() -> Self {
        InitialTemperature::AboveLow { spread: 5.0 }
    }
}

/// Tariff levels in $/kWh. Peak runs 07-11 and 17-21, off-peak 23-07,
/// shoulder otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    pub off_peak: f64,
    pub shoulder: f64,
    pub peak: f64,
}

impl Default for Tariff {
    fn default() -> Self {
        Self {
            off_peak: 0.001,
            shoulder: 0.003,
            peak: 0.012,
        }
    }
}

impl Tariff {
    pub fn at_hour(&self, hour: f64) -> f64 {
        let h = hour.rem_euclid(24.0);
        if (7.0..11.0).contains(&h) || (17.0..21.0).contains(&h) {
            self.peak
        } else if !(7.0..23.0).contains(&h) {
            self.off_peak
        } else {
            self.shoulder
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub days: usize,
    pub slots_per_day: usize,
    /// EVs per day.
    pub ev_count: usize,
    /// Inclusive bounds on the arrival slot within a day.
    pub arrival_window: (usize, usize),
    /// Inclusive bounds on the parking duration in slots.
    pub duration: (usize, usize),
    pub soc_initial: (f64, f64),
    pub soc_depart: f64,
    pub capacity: f64,
    pub initial_temperature: InitialTemperature,
    pub ambient_mean: f64,
    /// Half the peak-to-trough ambient swing.
    pub ambient_swing: f64,
    /// Uniform per-hour noise added to the ambient curve.
    pub ambient_jitter: f64,
    pub ambient_offset: f64,
    pub tariff: Tariff,
    /// Midday PV peak per scheduled EV (kW).
    pub pv_peak_per_ev: f64,
    pub seed: u64,
    pub thermal: ThermalParams,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            days: 1,
            slots_per_day: 288,
            ev_count: 20,
            arrival_window: (84, 120),
            duration: (108, 144),
            soc_initial: (0.1, 0.3),
            soc_depart: 0.9,
            capacity: 50.0,
            initial_temperature: InitialTemperature::default(),
            ambient_mean: -10.0,
            ambient_swing: 4.0,
            ambient_jitter: 1.0,
            ambient_offset: 0.0,
            tariff: Tariff::default(),
            pv_peak_per_ev: 1.5,
            seed: 0,
            thermal: ThermalParams::default(),
        }
    }
}

/// Measured series that replace the synthetic ones. A series with at most
/// `slots_per_day` entries is one day, step-held and tiled across `days`;
/// a longer one is step-held onto the whole horizon.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeriesInputs {
    pub ambient: Option<Vec<f64>>,
    pub price: Option<Vec<f64>>,
    pub pv: Option<Vec<f64>>,
}

impl GeneratorConfig {
    pub fn horizon(&self) -> usize {
        self.days * self.slots_per_day
    }

    pub fn dt_hours(&self) -> f64 {
        24.0 / self.slots_per_day as f64
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Generator(m));
        if self.days == 0 || self.slots_per_day == 0 {
            return fail("days and slots_per_day must be positive".into());
        }
        if self.arrival_window.0 > self.arrival_window.1 {
            return fail(format!("arrival window {:?} is not ordered", self.arrival_window));
        }
        if self.duration.0 == 0 || self.duration.0 > self.duration.1 {
            return fail(format!("duration bounds {:?} must be ordered and positive", self.duration));
        }
        if self.arrival_window.1 + self.duration.1 > self.slots_per_day {
            return fail(format!(
                "latest arrival {} plus longest stay {} exceeds the {} slots of a day",
                self.arrival_window.1, self.duration.1, self.slots_per_day
            ));
        }
        let (lo, hi) = self.soc_initial;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return fail(format!("initial SoC bounds {:?} must be ordered within [0, 1]", self.soc_initial));
        }
        if !(0.0..=1.0).contains(&self.soc_depart) || self.soc_depart < hi {
            return fail(format!("departure SoC {} must lie in [{hi}, 1]", self.soc_depart));
        }
        if !(self.capacity > 0.0) {
            return fail(format!("capacity {} is not positive", self.capacity));
        }
        match self.initial_temperature {
            InitialTemperature::AboveLow { spread } if !(spread >= 0.0) => {
                return fail(format!("initial temperature spread {spread} is negative"))
            }
            InitialTemperature::Uniform { low, high } if !(low <= high) => {
                return fail(format!("initial temperature bounds [{low}, {high}] are not ordered"))
            }
            _ => {}
        }
        if self.ambient_jitter < 0.0 || self.ambient_swing < 0.0 || self.pv_peak_per_ev < 0.0 {
            return fail("ambient_swing, ambient_jitter and pv_peak_per_ev must be non-negative".into());
        }
        let t = self.tariff;
        if t.off_peak < 0.0 || t.shoulder < 0.0 || t.peak < 0.0 {
            return fail("tariff levels must be non-negative".into());
        }
        Ok(())
    }
}

fn fit(name: &str, values: &[f64], slots_per_day: usize, horizon: usize) -> Result<Vec<f64>> {
    let mismatch = || {
        Error::Generator(format!(
            "{name} series of length {} fits neither a day of {slots_per_day} slots nor the horizon of {horizon}",
            values.len()
        ))
    };
    if values.len() > slots_per_day {
        return step_hold(values, horizon).ok_or_else(mismatch);
    }
    let day = step_hold(values, slots_per_day).ok_or_else(mismatch)?;
    Ok(day.iter().copied().cycle().take(horizon).collect())
}

/// Draws a scenario. Identical `(cfg, inputs)` give identical output.
/// Session ids count up from 1 in arrival order.
pub fn generate_scenario(cfg: &GeneratorConfig, inputs: &SeriesInputs) -> Result<Scenario> {
    cfg.validate()?;
    let spd = cfg.slots_per_day;
    let horizon = cfg.horizon();
    let dt = cfg.dt_hours();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let hour_of = |t: usize| (t % spd) as f64 * dt;
    let ambient = match &inputs.ambient {
        Some(v) => fit("ambient", v, spd, horizon)?,
        None => {
            let hours = cfg.days * 24;
            let noise: Vec<f64> = (0..hours)
                .map(|_| if cfg.ambient_jitter > 0.0 { rng.gen_range(-cfg.ambient_jitter..=cfg.ambient_jitter) } else { 0.0 })
                .collect();
            (0..horizon)
                .map(|t| {
                    let h = hour_of(t);
                    let hour_index = ((t as f64 * dt) as usize).min(hours - 1);
                    cfg.ambient_mean - cfg.ambient_swing * (std::f64::consts::TAU * (h - 3.0) / 24.0).cos()
                        + noise[hour_index]
                })
                .collect()
        }
    };
    let ambient: Vec<f64> = ambient.into_iter().map(|a| a + cfg.ambient_offset).collect();
    let price = match &inputs.price {
        Some(v) => fit("price", v, spd, horizon)?,
        None => (0..horizon).map(|t| cfg.tariff.at_hour(hour_of(t))).collect(),
    };
    let pv_cap = match &inputs.pv {
        Some(v) => fit("pv", v, spd, horizon)?,
        None => {
            let peak = cfg.pv_peak_per_ev * cfg.ev_count as f64;
            (0..horizon)
                .map(|t| {
                    let h = hour_of(t);
                    if (8.0..16.0).contains(&h) {
                        peak * (std::f64::consts::PI * (h - 8.0) / 8.0).sin()
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };

    let mut sessions = Vec::with_capacity(cfg.days * cfg.ev_count);
    for day in 0..cfg.days {
        for _ in 0..cfg.ev_count {
            let t_arrive = day * spd + rng.gen_range(cfg.arrival_window.0..=cfg.arrival_window.1);
            let stay = rng.gen_range(cfg.duration.0..=cfg.duration.1);
            let soc = rng.gen_range(cfg.soc_initial.0..=cfg.soc_initial.1);
            let t_initial = match cfg.initial_temperature {
                InitialTemperature::AboveLow { spread } => cfg.thermal.t_low + rng.gen_range(0.0..=spread),
                InitialTemperature::Uniform { low, high } => rng.gen_range(low..=high),
                InitialTemperature::Fixed { value } => value,
            };
            sessions.push(EvSession {
                id: 0,
                t_arrive,
                t_depart: t_arrive + stay,
                e_initial: soc * cfg.capacity,
                e_depart: cfg.soc_depart * cfg.capacity,
                e_cap: cfg.capacity,
                t_initial,
                thermal: cfg.thermal,
            });
        }
    }
    sessions.sort_by_key(|s| s.t_arrive);
    for (i, s) in sessions.iter_mut().enumerate() {
        s.id = i as u32 + 1;
    }

    let mut scenario = Scenario {
        dt_hours: dt,
        horizon,
        ambient,
        price,
        pv_cap,
        sessions,
        price_cap: 0.0,
        ambient_low: 0.0,
        ambient_high: 0.0,
    };
    declare_bounds(&mut scenario);
    Ok(scenario)
}
