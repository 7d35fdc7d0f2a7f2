//! Reading and writing scenarios, synthetic generation and run
//! configuration.

pub mod config;
pub mod files;
pub mod generator;
pub mod series;

pub use config::RunConfig;
pub use files::{load_scenario, save_scenario_dir, save_scenario_json};
pub use generator::{generate_scenario, GeneratorConfig, InitialTemperature, SeriesInputs, Tariff};
pub use series::{load_series, read_series, write_series, SeriesKind};
