//! Dense two-phase bounded-variable simplex.
//!
//! Solves `min c'x  s.t.  A x <= b,  lo <= x <= hi` with finite `lo` and
//! possibly infinite `hi`. Bland's rule throughout, so it terminates on
//! degenerate instances at the price of speed. Intended for the small per-slot
//! problems only.

use crate::controller::SlotProblem;
use crate::error::{Error, Result};
use crate::model::SlotDecision;

const EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLp {
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

struct Tableau {
    /// `m x ncols` rows of `B^-1 [A I art]`.
    rows: Vec<Vec<f64>>,
    /// Values of the basic variables.
    beta: Vec<f64>,
    basis: Vec<usize>,
    upper: Vec<f64>,
    at_upper: Vec<bool>,
    pivots: usize,
    max_pivots: usize,
}

impl Tableau {
    fn is_basic(&self, j: usize) -> bool {
        self.basis.contains(&j)
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (i, row) in self.rows.iter().enumerate() {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (dj, aij) in d.iter_mut().zip(row) {
                    *dj -= cb * aij;
                }
            }
        }
        d
    }

    /// Runs the simplex on `cost` from the current basis.
    fn optimize(&mut self, cost: &[f64]) -> Result<()> {
        let ncols = cost.len();
        let mut d = self.reduced_costs(cost);
        loop {
            // Bland: first improving column.
            let entering = (0..ncols).find(|&j| {
                !self.is_basic(j)
                    && self.upper[j] > EPS
                    && ((!self.at_upper[j] && d[j] < -EPS) || (self.at_upper[j] && d[j] > EPS))
            });
            let Some(j) = entering else {
                return Ok(());
            };
            if self.pivots >= self.max_pivots {
                return Err(Error::LpIterationLimit(self.max_pivots));
            }
            // +1 when the entering variable increases from its lower bound.
            let sigma = if self.at_upper[j] { -1.0 } else { 1.0 };

            let mut step = self.upper[j];
            let mut leave: Option<(usize, bool)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let rate = -sigma * row[j];
                let bv = self.basis[i];
                let limit = if rate < -EPS {
                    Some((self.beta[i].max(0.0) / -rate, false))
                } else if rate > EPS && self.upper[bv].is_finite() {
                    Some(((self.upper[bv] - self.beta[i]).max(0.0) / rate, true))
                } else {
                    None
                };
                if let Some((t, to_upper)) = limit {
                    let replace = match leave {
                        None => t < step,
                        Some((k, _)) => t < step - EPS || (t <= step + EPS && bv < self.basis[k]),
                    };
                    if replace {
                        step = step.min(t);
                        leave = Some((i, to_upper));
                    }
                }
            }
            if !step.is_finite() {
                // Cannot happen here: every instance we build is bounded.
                return Err(Error::LpInfeasible);
            }
            self.pivots += 1;

            for (i, row) in self.rows.iter().enumerate() {
                self.beta[i] -= sigma * step * row[j];
            }
            match leave {
                None => {
                    self.at_upper[j] = !self.at_upper[j];
                }
                Some((r, to_upper)) => {
                    let entering_value = if self.at_upper[j] { self.upper[j] } else { 0.0 } + sigma * step;
                    let leaving = self.basis[r];
                    self.at_upper[leaving] = to_upper;
                    self.at_upper[j] = false;
                    let piv = self.rows[r][j];
                    let pivot_row: Vec<f64> = self.rows[r].iter().map(|v| v / piv).collect();
                    for (i, row) in self.rows.iter_mut().enumerate() {
                        if i == r {
                            continue;
                        }
                        let f = row[j];
                        if f != 0.0 {
                            for (v, p) in row.iter_mut().zip(&pivot_row) {
                                *v -= f * p;
                            }
                        }
                    }
                    let f = d[j];
                    for (dv, p) in d.iter_mut().zip(&pivot_row) {
                        *dv -= f * p;
                    }
                    self.rows[r] = pivot_row;
                    self.basis[r] = j;
                    self.beta[r] = entering_value;
                }
            }
        }
    }
}

impl DenseLp {
    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.n_vars();
        let m = self.b.len();
        debug_assert_eq!(self.a.len(), m);
        debug_assert!(self.lo.iter().all(|v| v.is_finite()));

        // Shift to x' = x - lo in [0, hi - lo]; rows become A x' + s = b - A lo.
        let rhs: Vec<f64> = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(row, b)| b - row.iter().zip(&self.lo).map(|(a, l)| a * l).sum::<f64>())
            .collect();
        let flipped: Vec<usize> = (0..m).filter(|&i| rhs[i] < 0.0).collect();
        let n_art = flipped.len();
        let ncols = n + m + n_art;

        let mut rows = vec![vec![0.0; ncols]; m];
        let mut beta = vec![0.0; m];
        let mut basis = vec![0; m];
        for i in 0..m {
            let sign = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                rows[i][j] = sign * self.a[i][j];
            }
            rows[i][n + i] = sign;
            beta[i] = sign * rhs[i];
            basis[i] = n + i;
        }
        for (k, &i) in flipped.iter().enumerate() {
            rows[i][n + m + k] = 1.0;
            basis[i] = n + m + k;
        }

        let mut upper: Vec<f64> = self.hi.iter().zip(&self.lo).map(|(h, l)| h - l).collect();
        upper.extend(std::iter::repeat(f64::INFINITY).take(m + n_art));
        let mut tab = Tableau {
            rows,
            beta,
            basis,
            upper,
            at_upper: vec![false; ncols],
            pivots: 0,
            max_pivots: 200 * (ncols + m).max(50),
        };

        if n_art > 0 {
            let mut phase1 = vec![0.0; ncols];
            for c in &mut phase1[n + m..] {
                *c = 1.0;
            }
            tab.optimize(&phase1)?;
            let infeasibility: f64 = (0..m)
                .filter(|&i| tab.basis[i] >= n + m)
                .map(|i| tab.beta[i])
                .sum();
            if infeasibility > 1e-8 {
                return Err(Error::LpInfeasible);
            }
            // Artificials are pinned at zero from here on.
            for u in &mut tab.upper[n + m..] {
                *u = 0.0;
            }
        }

        let mut cost = vec![0.0; ncols];
        cost[..n].copy_from_slice(&self.c);
        tab.optimize(&cost)?;

        let mut x: Vec<f64> = (0..n)
            .map(|j| if tab.at_upper[j] { tab.upper[j] } else { 0.0 })
            .collect();
        for (i, &bv) in tab.basis.iter().enumerate() {
            if bv < n {
                x[bv] = tab.beta[i];
            }
        }
        for (xj, l) in x.iter_mut().zip(&self.lo) {
            *xj += l;
        }
        let objective = x.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        Ok(LpSolution {
            x,
            objective,
            pivots: tab.pivots,
        })
    }
}

/// LP encoding of the per-slot problem: two variables per EV plus the grid
/// draw `g >= sum(p) - pv`.
pub fn encode_slot_problem(problem: &SlotProblem) -> DenseLp {
    let n_ev = problem.evs.len();
    let n = 2 * n_ev + 1;
    let mut c = Vec::with_capacity(n);
    let mut lo = vec![0.0; n];
    let mut hi = Vec::with_capacity(n);
    for e in &problem.evs {
        c.extend([e.w_charge, e.w_heat]);
        hi.extend([e.cap_charge.max(0.0), e.cap_heat.max(0.0)]);
    }
    c.push(problem.grid_unit_cost);
    hi.push(f64::INFINITY);
    lo[n - 1] = 0.0;

    let mut a = Vec::with_capacity(n_ev + 1);
    let mut b = Vec::with_capacity(n_ev + 1);
    for (k, e) in problem.evs.iter().enumerate() {
        let mut row = vec![0.0; n];
        row[2 * k] = 1.0;
        row[2 * k + 1] = 1.0;
        a.push(row);
        b.push(e.cap_joint.max(0.0));
    }
    let mut supply = vec![1.0; n];
    supply[n - 1] = -1.0;
    a.push(supply);
    b.push(problem.pv_free);
    DenseLp { c, a, b, lo, hi }
}

/// Solves the per-slot problem with the simplex and returns the decision and
/// its objective.
pub fn solve_slot_lp(problem: &SlotProblem) -> Result<(SlotDecision, f64)> {
    let sol = encode_slot_problem(problem).solve()?;
    let mut decision = SlotDecision::default();
    for (k, e) in problem.evs.iter().enumerate() {
        let (c, h) = (sol.x[2 * k], sol.x[2 * k + 1]);
        if c > 0.0 {
            decision.p_charge.insert(e.id, c);
        }
        if h > 0.0 {
            decision.p_heat.insert(e.id, h);
        }
    }
    decision.settle_supply(problem.pv_free);
    let objective = problem.objective(&decision);
    Ok((decision, objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::EvSlot;

    #[test]
    fn textbook_two_variable() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36.
        let lp = DenseLp {
            c: vec![-3.0, -5.0],
            a: vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            b: vec![4.0, 12.0, 18.0],
            lo: vec![0.0, 0.0],
            hi: vec![f64::INFINITY, f64::INFINITY],
        };
        let s = lp.solve().unwrap();
        assert!((s.objective + 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn lower_bounds_force_phase_one() {
        // min x + y s.t. x + y >= 3 (as -x - y <= -3), x <= 2, 1 <= y.
        let lp = DenseLp {
            c: vec![1.0, 2.0],
            a: vec![vec![-1.0, -1.0]],
            b: vec![-3.0],
            lo: vec![0.0, 1.0],
            hi: vec![2.0, 10.0],
        };
        let s = lp.solve().unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 1.0).abs() < 1e-9);
        assert!((s.objective - 4.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasibility() {
        let lp = DenseLp {
            c: vec![1.0],
            a: vec![vec![-1.0]],
            b: vec![-5.0],
            lo: vec![0.0],
            hi: vec![2.0],
        };
        assert!(matches!(lp.solve(), Err(Error::LpInfeasible)));
    }

    #[test]
    fn bound_flips_without_pivots() {
        let lp = DenseLp {
            c: vec![-1.0, -2.0],
            a: vec![],
            b: vec![],
            lo: vec![0.0, -1.0],
            hi: vec![3.0, 4.0],
        };
        let s = lp.solve().unwrap();
        assert_eq!(s.x, vec![3.0, 4.0]);
    }

    #[test]
    fn slot_encoding_matches_hand_solution() {
        let p = SlotProblem {
            evs: vec![
                EvSlot { id: 1, w_charge: -1.0, w_heat: 5.0, cap_charge: 4.8, cap_heat: 3.0, cap_joint: 7.4 },
                EvSlot { id: 2, w_charge: -10.0, w_heat: 5.0, cap_charge: 4.8, cap_heat: 3.0, cap_joint: 7.4 },
            ],
            pv_free: 6.0,
            grid_unit_cost: 2.0,
        };
        let (d, obj) = solve_slot_lp(&p).unwrap();
        assert!((d.charge(2) - 4.8).abs() < 1e-9);
        assert!((d.charge(1) - 1.2).abs() < 1e-9);
        assert!((obj - (-48.0 - 1.2)).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use crate::controller::solve_slot;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn greedy_matches_simplex(
                evs in proptest::collection::vec(
                    (-30.0f64..10.0, -30.0f64..10.0, 0.0f64..6.0, 0.0f64..4.0, 0.5f64..8.0), 1..8),
                pv in 0.0f64..25.0,
                g in 0.0f64..10.0,
            ) {
                let p = SlotProblem {
                    evs: evs.iter().enumerate().map(|(i, &(wc, wh, cc, ch, j))| EvSlot {
                        id: i as u32, w_charge: wc, w_heat: wh, cap_charge: cc, cap_heat: ch, cap_joint: j,
                    }).collect(),
                    pv_free: pv,
                    grid_unit_cost: g,
                };
                let greedy = solve_slot(&p).objective;
                let (_, lp) = solve_slot_lp(&p).unwrap();
                prop_assert!((greedy - lp).abs() <= 1e-7 * greedy.abs().max(lp.abs()).max(1.0),
                    "greedy {} lp {}", greedy, lp);
            }
        }
    }
}
