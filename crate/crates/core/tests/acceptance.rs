//! Acceptance suite. Runs as a plain binary so that every criterion prints
//! one PASS/FAIL line; exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use coldcharge::controller::{drift_bound, solve_slot, SlotProblem};
use coldcharge::harness::{run_episode, Episode, EpisodeConfig, EpisodeMetrics, Method};
use coldcharge::ingest::{generate_scenario, read_series, write_series, GeneratorConfig, SeriesInputs, SeriesKind};
use coldcharge::model::{validate_scenario, EvSession, Scenario, SlotDecision, ThermalParams, DEFAULT_DT_HOURS};
use coldcharge::reference::grid::{lattice_gap_bound, lattice_optimum};
use coldcharge::reference::lp::solve_slot_lp;
use coldcharge::thermal::{cooling_slots, decay_loss, TruthModel};
use coldcharge::validation::{random_slot_problem, random_thermal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, started: Instant) -> Result<Duration, String> {
    let took = started.elapsed();
    if took <= limit {
        Ok(took)
    } else {
        Err(format!("took {took:.1?}, budget {limit:?}"))
    }
}

fn scenario(cfg: GeneratorConfig) -> Scenario {
    generate_scenario(&cfg, &SeriesInputs::default()).expect("generator config is valid")
}

fn episode(s: &Scenario, method: Method, truth: TruthModel) -> Episode {
    let cfg = EpisodeConfig {
        method,
        truth,
        ..EpisodeConfig::default()
    };
    run_episode(s, &cfg).unwrap_or_else(|e| panic!("{method} failed: {e}"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Zero temperature violations for the proposed policy on 100 cold days.
fn temperature_feasibility() -> Outcome {
    let started = Instant::now();
    let mut violations = 0;
    let mut premise_failures = 0;
    let mut worst_low = f64::INFINITY;
    let mut worst_high = f64::NEG_INFINITY;
    for k in 0..100u64 {
        let s = scenario(GeneratorConfig {
            seed: 1000 + k,
            ev_count: 10 + (k as usize % 21),
            ..GeneratorConfig::default()
        });
        if s.horizon != 288 || s.ambient_low < -15.0 || s.ambient_high > -5.0 {
            return Err(format!("seed {}: fixture outside the cold-day envelope", 1000 + k));
        }
        let ep = episode(&s, Method::Proposed, TruthModel::Queue);
        premise_failures += ep.metrics.assumption_failures;
        violations += ep.metrics.temperature_violations;
        for rec in &ep.trace {
            for e in &rec.evs {
                worst_low = worst_low.min(e.temperature_next);
                worst_high = worst_high.max(e.temperature_next);
            }
        }
    }
    let took = within(Duration::from_secs(60), started)?;
    ensure(
        violations == 0 && premise_failures == 0 && worst_low >= -1e-9 && worst_high <= 20.0 + 1e-9,
        format!(
            "100 scenarios, {violations} violations, {premise_failures} assumption failures, \
             temperatures in [{worst_low:.4}, {worst_high:.4}], {took:.1?}"
        ),
    )
}

/// Independent check of the per-slot constraints.
fn feasible(p: &SlotProblem, d: &SlotDecision, tol: f64) -> bool {
    let mut load = 0.0;
    for e in &p.evs {
        let (c, h) = (d.charge(e.id), d.heat(e.id));
        if c < -tol || h < -tol || c > e.cap_charge + tol || h > e.cap_heat + tol || c + h > e.cap_joint + tol {
            return false;
        }
        load += c + h;
    }
    let extra = d.p_charge.keys().chain(d.p_heat.keys()).any(|id| p.evs.iter().all(|e| e.id != *id));
    !extra
        && d.p_pv >= -tol
        && d.p_grid >= -tol
        && d.p_pv <= p.pv_free + tol
        && (d.p_pv + d.p_grid - load).abs() <= tol
}

fn solver_exactness() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst_gap = 0.0f64;
    let mut infeasible = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=5);
        let p = random_slot_problem(&mut rng, n);
        let greedy = solve_slot(&p);
        let (lp, lp_obj) = solve_slot_lp(&p).map_err(|e| e.to_string())?;
        let gap = (greedy.objective - lp_obj).abs() / greedy.objective.abs().max(lp_obj.abs()).max(1.0);
        worst_gap = worst_gap.max(gap);
        if !feasible(&p, &greedy.decision, 1e-9) || !feasible(&p, &lp, 1e-9) {
            infeasible += 1;
        }
        if (p.objective(&greedy.decision) - greedy.objective).abs() > 1e-9 * greedy.objective.abs().max(1.0) {
            return Err("greedy objective does not match its own decision".into());
        }
    }
    let mut lattice_failures = 0;
    for _ in 0..50 {
        let n = rng.gen_range(1..=3);
        let p = random_slot_problem(&mut rng, n);
        let (_, lp_obj) = solve_slot_lp(&p).map_err(|e| e.to_string())?;
        let lattice = lattice_optimum(&p, 0.05).objective;
        if lp_obj > lattice + 1e-9 || lattice - lp_obj > lattice_gap_bound(&p, 0.05) + 1e-9 {
            lattice_failures += 1;
        }
    }
    let took = within(Duration::from_secs(30), started)?;
    ensure(
        worst_gap <= 1e-7 && infeasible == 0 && lattice_failures == 0,
        format!(
            "1000 instances worst gap {worst_gap:.2e}, {infeasible} infeasible; \
             50 lattice checks, {lattice_failures} outside bound; {took:.1?}"
        ),
    )
}

fn thermal_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut worst_identity = 0.0f64;
    let mut worst_crossing = 0.0f64;
    for _ in 0..100 {
        let p: ThermalParams = random_thermal(&mut rng);
        let ambient = p.t_low - rng.gen_range(0.5..30.0);
        let k = cooling_slots(&p, ambient).ok_or("no decay horizon below the band")?;
        worst_identity = worst_identity.max((decay_loss(&p, ambient) * k - (p.t_high - p.t_low)).abs());
        // Newton cooling with zero inputs, stepped directly.
        let (mut prev, mut t, mut n) = (p.t_high, p.t_high, 0usize);
        while t > p.t_low {
            prev = t;
            t -= p.eta * (t - ambient) / p.q;
            n += 1;
        }
        let crossing = (n - 1) as f64 + (prev - p.t_low) / (prev - t);
        worst_crossing = worst_crossing.max((crossing - k).abs());
    }
    ensure(
        worst_identity <= 1e-9 && worst_crossing <= 0.5,
        format!("100 draws, worst |loss*K - band| {worst_identity:.2e}, worst |crossing - K| {worst_crossing:.3} slots"),
    )
}

fn edge_fixtures() -> Vec<Scenario> {
    let ev = |id, t_arrive, t_depart, e_initial: f64, t_initial| EvSession {
        id,
        t_arrive,
        t_depart,
        e_initial,
        e_depart: 45.0,
        e_cap: 50.0,
        t_initial,
        thermal: ThermalParams::default(),
    };
    let mut a = Scenario::flat(48, DEFAULT_DT_HOURS, -12.0, 0.01, 0.0);
    a.sessions = vec![ev(1, 0, 48, 10.0, 2.0), ev(2, 0, 12, 40.0, 0.0), ev(3, 5, 6, 44.0, 4.0), ev(4, 47, 48, 0.0, 1.0)];
    let mut b = Scenario::flat(36, DEFAULT_DT_HOURS, -8.0, 0.0, 30.0);
    b.sessions = vec![ev(1, 2, 30, 44.9, 3.0), ev(2, 2, 30, 5.0, 3.0), ev(3, 10, 36, 45.0, 5.0)];
    vec![a, b]
}

fn conservation_residual(s: &Scenario, ep: &Episode) -> f64 {
    let delivered: f64 = ep
        .trace
        .iter()
        .flat_map(|r| &r.evs)
        .map(|e| s.session(e.id).unwrap().thermal.delta_c * e.p_charge * s.dt_hours)
        .sum();
    let last = ep.trace.last().unwrap();
    let demand: f64 = s.sessions.iter().map(|x| x.e_depart - x.e_initial).sum();
    demand - (delivered + last.demand_queues.iter().sum::<f64>() + last.y_debt)
}

fn queue_conservation() -> Outcome {
    let mut fixtures = edge_fixtures();
    for seed in 0..6 {
        fixtures.push(scenario(GeneratorConfig {
            seed,
            ev_count: 4 + 4 * seed as usize,
            ..GeneratorConfig::default()
        }));
    }
    let mut worst = 0.0f64;
    let mut runs = 0;
    for (i, s) in fixtures.iter().enumerate() {
        for method in Method::ALL {
            if method == Method::Offline && s.sessions.len() > 8 {
                continue;
            }
            for truth in [TruthModel::Queue, TruthModel::Exact] {
                let ep = episode(s, method, truth);
                let r = conservation_residual(s, &ep).abs();
                if r > 1e-6 {
                    return Err(format!("fixture {i} {method} {truth:?}: residual {r:.3e} kWh"));
                }
                worst = worst.max(r);
                runs += 1;
            }
        }
    }
    Ok(format!("{} fixtures, {runs} episodes, worst residual {worst:.2e} kWh", fixtures.len()))
}

fn clairvoyance_dominance() -> Outcome {
    let mut worst_margin = f64::NEG_INFINITY;
    let mut worst_kkt = 0.0f64;
    for seed in 0..20u64 {
        let s = scenario(GeneratorConfig {
            seed: 500 + seed,
            ev_count: 3 + (seed as usize % 8),
            ..GeneratorConfig::default()
        });
        let online = episode(&s, Method::Proposed, TruthModel::Queue).metrics;
        let offline = episode(&s, Method::Offline, TruthModel::Queue);
        let report = offline.offline.as_ref().ok_or("offline report missing")?;
        let kkt = report.residuals.max();
        worst_kkt = worst_kkt.max(kkt);
        let slack = 1e-4 * online.p1_objective.abs().max(1.0) + kkt;
        let margin = report.objective - online.p1_objective;
        worst_margin = worst_margin.max(margin);
        if margin > slack || kkt >= 1e-6 {
            return Err(format!(
                "seed {}: offline {:.6} vs online {:.6}, KKT {kkt:.2e}",
                500 + seed,
                report.objective,
                online.p1_objective
            ));
        }
    }
    Ok(format!("20 scenarios, max(offline - online) {worst_margin:.4}, worst KKT residual {worst_kkt:.2e}"))
}

fn drift_bound_sanity() -> Outcome {
    let started = Instant::now();
    let s = scenario(GeneratorConfig {
        seed: 60,
        days: 5,
        ev_count: 5,
        ..GeneratorConfig::default()
    });
    let online = episode(&s, Method::Proposed, TruthModel::Queue);
    let offline = episode(&s, Method::Offline, TruthModel::Queue);
    let report = offline.offline.as_ref().ok_or("offline report missing")?;
    let t = s.horizon as f64;
    let b = drift_bound(&online.drift);
    let v = online.metrics.v;
    let lhs = online.metrics.total_cost / t;
    let rhs = report.grid_cost / t + b / v;
    ensure(
        lhs <= rhs,
        format!(
            "{} slots, online {lhs:.6} <= offline {:.6} + B/V {:.3} (B = {b:.1}), {:.1?}",
            s.horizon,
            report.grid_cost / t,
            b / v,
            started.elapsed()
        ),
    )
}

fn sensitivity_trends() -> Outcome {
    let started = Instant::now();
    let s = scenario(GeneratorConfig {
        seed: 70,
        ev_count: 20,
        ..GeneratorConfig::default()
    });
    let run = |v: f64, gamma: f64| -> EpisodeMetrics {
        let cfg = EpisodeConfig {
            v,
            gamma,
            ..EpisodeConfig::default()
        };
        run_episode(&s, &cfg).expect("episode runs").metrics
    };
    let costs: Vec<f64> = (1..=6).map(|k| run(100.0 * k as f64, 20.0).total_cost).collect();
    let fulfil: Vec<f64> = [5.0, 10.0, 20.0, 40.0].iter().map(|&g| run(600.0, g).fulfillment_ratio).collect();
    let cost_ok = costs.windows(2).all(|w| w[1] <= w[0] * 1.02);
    let fulfil_ok = fulfil.windows(2).all(|w| 100.0 * w[1] >= 100.0 * w[0] - 0.5);
    let took = within(Duration::from_secs(300), started)?;
    let fmt = |v: &[f64], scale: f64| v.iter().map(|x| format!("{:.4}", x * scale)).collect::<Vec<_>>().join(" ");
    ensure(
        cost_ok && fulfil_ok,
        format!("cost over V: {}; fulfillment % over gamma: {}; {took:.1?}", fmt(&costs, 1.0), fmt(&fulfil, 100.0)),
    )
}

fn method_ordering() -> Outcome {
    let mut ci = vec![Vec::new(); 5];
    let (mut below_b1, mut below_b2, mut noheat_lowest, mut offline_lowest) = (0, 0, 0, 0);
    for seed in 0..10u64 {
        let s = scenario(GeneratorConfig {
            seed: 800 + seed,
            ev_count: 10,
            ..GeneratorConfig::default()
        });
        let m: Vec<EpisodeMetrics> = Method::ALL.iter().map(|&k| episode(&s, k, TruthModel::Exact).metrics).collect();
        let [p, b1, b2, nh, off] = [&m[0], &m[1], &m[2], &m[3], &m[4]];
        for (slot, x) in ci.iter_mut().zip(&m) {
            slot.push(x.cost_index);
        }
        below_b1 += usize::from(p.cost_index < b1.cost_index);
        below_b2 += usize::from(p.cost_index < b2.cost_index);
        noheat_lowest += usize::from(m.iter().all(|x| x.method == Method::NoHeat || nh.fulfillment_ratio < x.fulfillment_ratio));
        offline_lowest += usize::from(m.iter().all(|x| x.method == Method::Offline || off.cost_index < x.cost_index));
    }
    let med: Vec<f64> = ci.into_iter().map(median).collect();
    let medians_ok = med[0] < med[1] && med[0] < med[2] && med[4] < med.iter().take(4).copied().fold(f64::INFINITY, f64::min);
    ensure(
        medians_ok && below_b1 >= 8 && below_b2 >= 8 && noheat_lowest >= 8 && offline_lowest >= 8,
        format!(
            "median cost index proposed {:.5} b1 {:.5} b2 {:.5} noheat {:.5} offline {:.5}; \
             seeds with proposed<b1 {below_b1}/10, proposed<b2 {below_b2}/10, \
             noheat lowest fulfillment {noheat_lowest}/10, offline lowest cost index {offline_lowest}/10",
            med[0], med[1], med[2], med[3], med[4]
        ),
    )
}

fn extreme_cold() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..5u64 {
        let s = scenario(GeneratorConfig {
            seed: 900 + seed,
            ev_count: 10,
            ambient_offset: -20.0,
            ..GeneratorConfig::default()
        });
        let mean_ambient = s.ambient.iter().sum::<f64>() / s.horizon as f64;
        let heat: Vec<f64> = [Method::Proposed, Method::B1, Method::B2]
            .iter()
            .map(|&m| episode(&s, m, TruthModel::Exact).metrics.heating_ratio)
            .collect();
        let noheat = episode(&s, Method::NoHeat, TruthModel::Exact).metrics.fulfillment_ratio;
        ok &= heat.iter().all(|&h| h > 0.25) && noheat < 0.70;
        lines.push(format!(
            "ambient {mean_ambient:.1}: heating {:.1}/{:.1}/{:.1}%, noheat fulfillment {:.1}%",
            100.0 * heat[0],
            100.0 * heat[1],
            100.0 * heat[2],
            100.0 * noheat
        ));
    }
    ensure(ok, lines.join("; "))
}

fn determinism_and_round_trips() -> Outcome {
    let s = scenario(GeneratorConfig {
        seed: 99,
        ev_count: 6,
        ..GeneratorConfig::default()
    });
    for method in Method::ALL {
        for truth in [TruthModel::Queue, TruthModel::Exact] {
            let a = serde_json::to_string(&episode(&s, method, truth).metrics).unwrap();
            let b = serde_json::to_string(&episode(&s, method, truth).metrics).unwrap();
            if a != b {
                return Err(format!("{method} {truth:?}: metrics differ between identical runs"));
            }
        }
    }
    let dir = std::env::temp_dir().join(format!("coldcharge-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for k in 0..20 {
        let mut values: Vec<f64> = (0..288).map(|_| rng.gen_range(-1e3..1e3) * 10f64.powi(rng.gen_range(-12..6))).collect();
        values[0] = 0.1 + 0.2;
        values[1] = f64::MIN_POSITIVE;
        let path = dir.join(format!("s{k}.csv"));
        write_series(&path, &values).map_err(|e| e.to_string())?;
        let back = read_series(&path, SeriesKind::Ambient).map_err(|e| e.to_string())?;
        if back.iter().map(|v| v.to_bits()).ne(values.iter().map(|v| v.to_bits())) {
            return Err(format!("series {k} did not round-trip"));
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    let mut generated = 0;
    for seed in 0..200u64 {
        let s = scenario(GeneratorConfig {
            seed,
            ev_count: (seed % 40) as usize,
            days: 1 + (seed % 3) as usize,
            ambient_offset: -12.0 + (seed % 17) as f64,
            ..GeneratorConfig::default()
        });
        let v = validate_scenario(&s);
        if !v.is_empty() {
            return Err(format!("generated scenario {seed} invalid: {}", v[0]));
        }
        generated += 1;
    }
    Ok(format!("10 method/model pairs bit-identical, 20 series round-trips exact, {generated} generated scenarios valid"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("temperature feasibility", temperature_feasibility),
        ("per-slot solver exactness", solver_exactness),
        ("thermal identities", thermal_identities),
        ("queue conservation", queue_conservation),
        ("clairvoyant dominance", clairvoyance_dominance),
        ("drift bound sanity", drift_bound_sanity),
        ("sensitivity trends", sensitivity_trends),
        ("method ordering", method_ordering),
        ("extreme cold", extreme_cold),
        ("determinism and round-trips", determinism_and_round_trips),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|k| k != n) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {n:>2} PASS {name} ({:.1?}): {detail}", started.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL {name} ({:.1?}): {detail}", started.elapsed());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
