//! Online EV charging with battery thermal management for cold climates.
//!
//! The crate models a parking lot of EVs whose batteries cool toward ambient
//! while parked. A per-slot controller decides charging and heating powers by
//! minimizing a drift-plus-penalty objective over demand queues, a deadline
//! debt queue and per-EV virtual temperature queues.
//!
//! ```
//! use coldcharge::thermal::decay_loss;
//! use coldcharge::model::ThermalParams;
//!
//! let loss = decay_loss(&ThermalParams::default(), -10.0);
//! assert!((loss - 1.256).abs() < 1e-3);
//! ```

pub mod baselines;
pub mod controller;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod model;
pub mod queues;
pub mod reference;
pub mod thermal;
pub mod validation;

pub use error::{Error, Result};
pub use model::{EvId, EvSession, Scenario, SlotDecision, ThermalParams};
