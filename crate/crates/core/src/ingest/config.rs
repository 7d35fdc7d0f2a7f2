//! Run configuration in a flat `key = value` text format.
//!
//! Blank lines and anything after `#` are ignored. Keys:
//!
//! | key | value |
//! |-----|-------|
//! | `method` | `proposed`, `b1`, `b2`, `noheat`, `offline` |
//! | `v`, `gamma` | positive numbers |
//! | `truth_model` | `queue` or `exact` |
//! | `theta_mode` | `theorem` or `permissive` |
//! | `alpha` | terminal penalty weight |
//! | `out` | output directory |
//! | `scenario` | scenario JSON file or directory |
//! | `ambient_file`, `price_file`, `pv_file`, `sessions_file` | series overrides |
//! | `seed`, `offset`, `ev_count`, `days` | synthetic scenario settings |

use std::path::{Path, PathBuf};

use crate::controller::ThetaMode;
use crate::error::{Error, Result};
use crate::harness::{EpisodeConfig, Method};
use crate::ingest::generator::GeneratorConfig;
use crate::thermal::TruthModel;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub v: f64,
    pub gamma: f64,
    pub truth: TruthModel,
    pub theta_mode: ThetaMode,
    pub alpha: Option<f64>,
    pub out: PathBuf,
    pub scenario: Option<PathBuf>,
    pub ambient_file: Option<PathBuf>,
    pub price_file: Option<PathBuf>,
    pub pv_file: Option<PathBuf>,
    pub sessions_file: Option<PathBuf>,
    pub seed: u64,
    pub offset: f64,
    pub ev_count: usize,
    pub days: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ep = EpisodeConfig::default();
        let gen = GeneratorConfig::default();
        Self {
            method: ep.method,
            v: ep.v,
            gamma: ep.gamma,
            truth: ep.truth,
            theta_mode: ep.theta_mode,
            alpha: None,
            out: PathBuf::from("out"),
            scenario: None,
            ambient_file: None,
            price_file: None,
            pv_file: None,
            sessions_file: None,
            seed: gen.seed,
            offset: gen.ambient_offset,
            ev_count: gen.ev_count,
            days: gen.days,
        }
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("'{value}' is not a valid value for {key}"))
}

fn positive(key: &str, value: &str) -> std::result::Result<f64, String> {
    let v: f64 = number(key, value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{key} must be positive, got {value}"))
    }
}

impl RunConfig {
    /// Sets one key. Relative paths are kept as written.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "method" => self.method = value.parse()?,
            "v" => self.v = positive(key, value)?,
            "gamma" => self.gamma = positive(key, value)?,
            "truth_model" => self.truth = value.parse()?,
            "theta_mode" => self.theta_mode = value.parse()?,
            "alpha" => self.alpha = Some(positive(key, value)?),
            "out" => self.out = PathBuf::from(value),
            "scenario" => self.scenario = Some(PathBuf::from(value)),
            "ambient_file" => self.ambient_file = Some(PathBuf::from(value)),
            "price_file" => self.price_file = Some(PathBuf::from(value)),
            "pv_file" => self.pv_file = Some(PathBuf::from(value)),
            "sessions_file" => self.sessions_file = Some(PathBuf::from(value)),
            "seed" => self.seed = number(key, value)?,
            "offset" => {
                let v: f64 = number(key, value)?;
                if !v.is_finite() {
                    return Err(format!("offset must be finite, got {value}"));
                }
                self.offset = v
            }
            "ev_count" => self.ev_count = number(key, value)?,
            "days" => self.days = number(key, value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn merge_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: Some(i + 1),
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', found '{line}'")))?;
            self.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.merge_text(&text, path)?;
        Ok(cfg)
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            method: self.method,
            v: self.v,
            gamma: self.gamma,
            truth: self.truth,
            theta_mode: self.theta_mode,
            seed: self.seed,
            alpha: self.alpha,
            ..EpisodeConfig::default()
        }
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            seed: self.seed,
            ambient_offset: self.offset,
            ev_count: self.ev_count,
            days: self.days,
            ..GeneratorConfig::default()
        }
    }
}
