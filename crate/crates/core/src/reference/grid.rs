//! Exhaustive search of the per-slot problem over a power lattice.
//!
//! Each EV's best cost at every lattice total is tabulated, the tables are
//! combined by min-plus convolution, and the supply cost is added last. The
//! result is the exact optimum over the lattice.

use crate::controller::SlotProblem;

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeOptimum {
    pub objective: f64,
    pub total_power: f64,
}

fn steps(cap: f64, step: f64) -> usize {
    ((cap.max(0.0) / step) + 1e-9).floor() as usize
}

pub fn lattice_optimum(problem: &SlotProblem, step: f64) -> LatticeOptimum {
    let mut acc = vec![0.0];
    for e in &problem.evs {
        let nc = steps(e.cap_charge, step);
        let nh = steps(e.cap_heat, step);
        let nj = steps(e.cap_joint, step);
        let top = nj.min(nc + nh);
        let mut table = vec![f64::INFINITY; top + 1];
        for i in 0..=nc.min(nj) {
            for k in 0..=nh.min(nj - i) {
                let cost = e.w_charge * i as f64 * step + e.w_heat * k as f64 * step;
                if cost < table[i + k] {
                    table[i + k] = cost;
                }
            }
        }
        let mut next = vec![f64::INFINITY; acc.len() + top];
        for (a, va) in acc.iter().enumerate() {
            for (b, vb) in table.iter().enumerate() {
                let v = va + vb;
                if v < next[a + b] {
                    next[a + b] = v;
                }
            }
        }
        acc = next;
    }
    let mut best = LatticeOptimum {
        objective: f64::INFINITY,
        total_power: 0.0,
    };
    for (k, v) in acc.iter().enumerate() {
        let total = k as f64 * step;
        let obj = v + problem.grid_unit_cost * (total - problem.pv_free).max(0.0);
        if obj < best.objective {
            best = LatticeOptimum {
                objective: obj,
                total_power: total,
            };
        }
    }
    best
}

/// Largest amount by which the lattice optimum can exceed the continuous one:
/// rounding each variable down to the lattice moves it by less than `step`.
pub fn lattice_gap_bound(problem: &SlotProblem, step: f64) -> f64 {
    let slopes: f64 = problem
        .evs
        .iter()
        .map(|e| e.w_charge.abs() + e.w_heat.abs())
        .sum();
    step * (slopes + 2.0 * problem.evs.len() as f64 * problem.grid_unit_cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::EvSlot;

    #[test]
    fn matches_brute_force_on_two_evs() {
        let p = SlotProblem {
            evs: vec![
                EvSlot { id: 0, w_charge: -3.0, w_heat: -1.0, cap_charge: 0.3, cap_heat: 0.2, cap_joint: 0.4 },
                EvSlot { id: 1, w_charge: -0.5, w_heat: 2.0, cap_charge: 0.25, cap_heat: 0.1, cap_joint: 0.3 },
            ],
            pv_free: 0.3,
            grid_unit_cost: 1.0,
        };
        let step = 0.05;
        let mut brute = f64::INFINITY;
        for c0 in 0..=6 {
            for h0 in 0..=4 {
                for c1 in 0..=5 {
                    for h1 in 0..=2 {
                        if c0 + h0 > 8 || c1 + h1 > 6 {
                            continue;
                        }
                        let v = |n: i32| n as f64 * step;
                        let load = v(c0 + h0 + c1 + h1);
                        let obj = -3.0 * v(c0) - v(h0) - 0.5 * v(c1) + 2.0 * v(h1)
                            + (load - 0.3f64).max(0.0);
                        brute = brute.min(obj);
                    }
                }
            }
        }
        let got = lattice_optimum(&p, step);
        assert!((got.objective - brute).abs() < 1e-12);
    }
}
