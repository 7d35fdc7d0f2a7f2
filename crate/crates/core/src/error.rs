use std::path::PathBuf;

use crate::model::{EvId, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("scenario failed validation with {} violation(s); first: {}", .0.len(), .0[0])]
    InvalidScenario(Vec<Violation>),

    #[error(
        "EV {ev}: ambient upper bound {ambient_high} °C is not below the battery upper bound {t_high} °C; \
         the decay model is undefined over the feasible band"
    )]
    AmbientTooWarm {
        ev: EvId,
        ambient_high: f64,
        t_high: f64,
    },

    #[error("EV {ev}: temperature band too narrow for this climate (V_max numerator {numerator})")]
    BandTooNarrow { ev: EvId, numerator: f64 },

    #[error("V = {v} exceeds the admissible maximum {v_max}")]
    VAboveMax { v: f64, v_max: f64 },

    #[error("controller parameter out of range: {0}")]
    BadParameter(String),

    #[error("EV {0} is already present")]
    DuplicateEv(EvId),

    #[error("EV {0} is not present")]
    UnknownEv(EvId),

    #[error("EV {ev}: remaining parking time {r} outside 1..={r_max}")]
    RemainingTimeOutOfRange { ev: EvId, r: usize, r_max: usize },

    #[error("slot {slot}: policy produced an infeasible decision: {reason}")]
    InfeasibleDecision { slot: usize, reason: String },

    #[error("linear program is infeasible")]
    LpInfeasible,

    #[error("linear program exceeded {0} pivots")]
    LpIterationLimit(usize),

    #[error(
        "QP solver did not converge in {iterations} iterations \
         (primal residual {primal:.3e}, dual residual {dual:.3e})"
    )]
    NotConverged {
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("offline problem too large: {0}")]
    TooLarge(String),

    #[error("{}:{}: {message}", path.display(), line.map(|l| l.to_string()).unwrap_or_else(|| "-".into()))]
    Parse {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("scenario generation failed: {0}")]
    Generator(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
