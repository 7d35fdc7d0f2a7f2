//! Self-check suite: solver equivalence, thermal identities, queue
//! conservation, determinism and file round-trips.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::controller::{solve_slot, EvSlot, SlotProblem};
use crate::harness::{run_episode, EpisodeConfig, Method, TraceRecord};
use crate::ingest::{generate_scenario, read_series, write_series, GeneratorConfig, SeriesInputs, SeriesKind};
use crate::model::{validate_scenario, Scenario, ThermalParams};
use crate::reference::grid::{lattice_gap_bound, lattice_optimum};
use crate::reference::lp::solve_slot_lp;
use crate::thermal::{cooling_slots, decay_loss, step_exact};

/// `|a - b| / max(|a|, |b|, 1)`.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// A per-slot problem with `n_evs` EVs and coefficients in the ranges the
/// controller produces.
pub fn random_slot_problem(rng: &mut impl Rng, n_evs: usize) -> SlotProblem {
    let evs = (0..n_evs)
        .map(|i| {
            let cap_charge = rng.gen_range(0.0..6.5);
            let cap_heat = rng.gen_range(0.0..3.5);
            EvSlot {
                id: i as u32 + 1,
                w_charge: rng.gen_range(-40.0..10.0),
                w_heat: rng.gen_range(-20.0..20.0),
                cap_charge,
                cap_heat,
                cap_joint: rng.gen_range(0.3..1.0) * (cap_charge + cap_heat) + 0.1,
            }
        })
        .collect();
    SlotProblem {
        evs,
        pv_free: rng.gen_range(0.0..15.0),
        grid_unit_cost: rng.gen_range(0.0..15.0),
    }
}

/// Random thermal parameters with `eta < q` and a positive band.
pub fn random_thermal(rng: &mut impl Rng) -> ThermalParams {
    let q = rng.gen_range(0.3..2.0);
    let t_low = rng.gen_range(-5.0..5.0);
    ThermalParams {
        q,
        eta: q * rng.gen_range(0.01..0.3),
        t_low,
        t_high: t_low + rng.gen_range(5.0..30.0),
        ..ThermalParams::default()
    }
}

/// `sum demand - (delivered + terminal sum Q + Y)` for a finished episode.
pub fn conservation_residual(scenario: &Scenario, trace: &[TraceRecord]) -> f64 {
    let delivered: f64 = trace
        .iter()
        .flat_map(|r| r.evs.iter())
        .map(|e| {
            let dc = scenario.session(e.id).map_or(1.0, |s| s.thermal.delta_c);
            dc * e.p_charge * scenario.dt_hours
        })
        .sum();
    let (q_end, y_end) = trace
        .last()
        .map_or((0.0, 0.0), |r| (r.demand_queues.iter().sum::<f64>(), r.y_debt));
    scenario.total_demand() - (delivered + q_end + y_end)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteSettings {
    pub seed: u64,
    pub slot_instances: usize,
    pub lattice_instances: usize,
    pub scenarios: usize,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        Self {
            seed: 1,
            slot_instances: 1000,
            lattice_instances: 50,
            scenarios: 10,
        }
    }
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

fn check_greedy_vs_simplex(rng: &mut ChaCha8Rng, n: usize) -> CheckOutcome {
    let mut worst = 0.0f64;
    let mut infeasible = 0;
    for _ in 0..n {
        let n_evs = rng.gen_range(1..=5);
        let p = random_slot_problem(rng, n_evs);
        let greedy = solve_slot(&p);
        match solve_slot_lp(&p) {
            Ok((d, obj)) => {
                worst = worst.max(relative_gap(greedy.objective, obj));
                if p.check(&greedy.decision, 1e-9).is_err() || p.check(&d, 1e-9).is_err() {
                    infeasible += 1;
                }
            }
            Err(_) => infeasible += 1,
        }
    }
    outcome(
        "greedy_matches_simplex",
        worst <= 1e-7 && infeasible == 0,
        format!("{n} instances, worst relative gap {worst:.2e}, {infeasible} infeasible or failed"),
    )
}

fn check_simplex_vs_lattice(rng: &mut ChaCha8Rng, n: usize) -> CheckOutcome {
    let step = 0.05;
    let mut failures = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n {
        let n_evs = rng.gen_range(1..=3);
        let p = random_slot_problem(rng, n_evs);
        let Ok((_, lp)) = solve_slot_lp(&p) else {
            failures += 1;
            continue;
        };
        let lattice = lattice_optimum(&p, step).objective;
        let slack = (lattice - lp) - lattice_gap_bound(&p, step);
        worst = worst.max(slack);
        if lp > lattice + 1e-9 || slack > 1e-9 {
            failures += 1;
        }
    }
    outcome(
        "simplex_within_lattice_bound",
        failures == 0,
        format!("{n} instances at {step} kW, {failures} outside [lattice - bound, lattice]"),
    )
}

fn check_thermal_identities(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst_identity = 0.0f64;
    let mut worst_count = 0.0f64;
    for _ in 0..100 {
        let p = random_thermal(rng);
        let ambient = p.t_low - rng.gen_range(0.5..30.0);
        let Some(k) = cooling_slots(&p, ambient) else {
            return outcome("thermal_identities", false, format!("no decay horizon at ambient {ambient}"));
        };
        worst_identity = worst_identity.max((decay_loss(&p, ambient) * k - (p.t_high - p.t_low)).abs());
        let mut prev = p.t_high;
        let mut t = p.t_high;
        let mut slots = 0usize;
        while t > p.t_low && slots < 100_000 {
            prev = t;
            t = step_exact(t, ambient, 0.0, 0.0, &p);
            slots += 1;
        }
        let crossing = (slots - 1) as f64 + (prev - p.t_low) / (prev - t);
        worst_count = worst_count.max((crossing - k).abs());
    }
    outcome(
        "thermal_identities",
        worst_identity <= 1e-9 && worst_count <= 0.5,
        format!("worst |loss K - band| {worst_identity:.2e}, worst |crossing - K| {worst_count:.3} slots"),
    )
}

fn fixture(seed: u64, ev_count: usize) -> crate::Result<Scenario> {
    generate_scenario(
        &GeneratorConfig {
            seed,
            ev_count,
            ..GeneratorConfig::default()
        },
        &SeriesInputs::default(),
    )
}

fn check_episodes(settings: &SuiteSettings) -> Vec<CheckOutcome> {
    let mut worst_conservation = 0.0f64;
    let mut violations = 0;
    let mut nondeterministic = 0;
    let mut invalid = 0;
    let mut errors = Vec::new();
    for k in 0..settings.scenarios {
        let seed = settings.seed.wrapping_add(k as u64);
        let scenario = match fixture(seed, 5 + (k % 4) * 5) {
            Ok(s) => s,
            Err(e) => {
                errors.push(e.to_string());
                continue;
            }
        };
        if !validate_scenario(&scenario).is_empty() {
            invalid += 1;
        }
        for method in [Method::Proposed, Method::B1, Method::B2, Method::NoHeat] {
            let config = EpisodeConfig {
                method,
                seed,
                ..EpisodeConfig::default()
            };
            match (run_episode(&scenario, &config), run_episode(&scenario, &config)) {
                (Ok(a), Ok(b)) => {
                    worst_conservation = worst_conservation.max(conservation_residual(&scenario, &a.trace).abs());
                    if method == Method::Proposed {
                        violations += a.metrics.temperature_violations;
                    }
                    let same = serde_json::to_string(&a.metrics).ok() == serde_json::to_string(&b.metrics).ok();
                    if !same {
                        nondeterministic += 1;
                    }
                }
                (Err(e), _) | (_, Err(e)) => errors.push(format!("seed {seed} {method}: {e}")),
            }
        }
    }
    let err_detail = if errors.is_empty() { String::new() } else { format!("; errors: {}", errors.join("; ")) };
    vec![
        outcome(
            "queue_conservation",
            worst_conservation <= 1e-6 && errors.is_empty(),
            format!("worst residual {worst_conservation:.2e} kWh{err_detail}"),
        ),
        outcome(
            "proposed_stays_in_band",
            violations == 0 && errors.is_empty(),
            format!("{violations} temperature violations"),
        ),
        outcome(
            "episodes_are_deterministic",
            nondeterministic == 0 && errors.is_empty(),
            format!("{nondeterministic} runs differed"),
        ),
        outcome(
            "generated_scenarios_validate",
            invalid == 0 && errors.is_empty(),
            format!("{invalid} of {} invalid", settings.scenarios),
        ),
    ]
}

fn check_series_round_trip(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let values: Vec<f64> = (0..288).map(|_| rng.gen_range(-40.0..40.0)).collect();
    let path = std::env::temp_dir().join(format!("coldcharge-roundtrip-{}-{}.csv", std::process::id(), rng.gen::<u32>()));
    let result = write_series(&path, &values).and_then(|_| read_series(&path, SeriesKind::Ambient));
    let _ = std::fs::remove_file(&path);
    match result {
        Ok(back) => outcome("series_round_trip", back == values, format!("{} values", values.len())),
        Err(e) => outcome("series_round_trip", false, e.to_string()),
    }
}

/// Runs every check. Never panics; failures are reported in the outcomes.
pub fn run_suite(settings: &SuiteSettings) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut out = vec![
        check_greedy_vs_simplex(&mut rng, settings.slot_instances),
        check_simplex_vs_lattice(&mut rng, settings.lattice_instances),
        check_thermal_identities(&mut rng),
        check_series_round_trip(&mut rng),
    ];
    out.extend(check_episodes(settings));
    out
}
