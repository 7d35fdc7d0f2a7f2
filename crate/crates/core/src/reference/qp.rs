//! Operator-splitting (ADMM) solver for convex quadratic programs
//!
//! ```text
//! minimize 1/2 x'Px + q'x   subject to   l <= Ax <= u
//! ```
//!
//! Each iteration solves one quasi-definite linear system with a cached
//! `LDL'` factorization. Data are equilibrated with Ruiz scaling, the step
//! size `rho` is adapted from the residual ratio, and a final polishing step
//! solves the equality-constrained problem on the guessed active set.

use crate::error::{Error, Result};
use crate::reference::sparse::{CscMatrix, LdlFactor};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// Upper triangle of the `n x n` cost matrix.
    pub p_upper: CscMatrix,
    pub q: Vec<f64>,
    /// `m x n` constraint matrix.
    pub a: CscMatrix,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.l.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut px = vec![0.0; self.n()];
        self.p_upper.sym_upper_mul_add(x, &mut px);
        x.iter()
            .zip(&px)
            .zip(&self.q)
            .map(|((xi, pi), qi)| 0.5 * xi * pi + qi * xi)
            .sum()
    }

    /// Residuals of the optimality conditions at `(x, y)`.
    pub fn kkt_residuals(&self, x: &[f64], y: &[f64]) -> KktResiduals {
        let mut ax = vec![0.0; self.m()];
        self.a.mul_add(x, &mut ax);
        let primal = ax
            .iter()
            .zip(self.l.iter().zip(&self.u))
            .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max);
        let mut grad = self.q.clone();
        self.p_upper.sym_upper_mul_add(x, &mut grad);
        self.a.mul_t_add(y, &mut grad);
        let dual = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let complementarity = y
            .iter()
            .zip(&ax)
            .zip(self.l.iter().zip(&self.u))
            .map(|((&yi, &v), (&l, &u))| {
                if yi > 0.0 {
                    if u.is_finite() { yi * (u - v).abs() } else { yi }
                } else if yi < 0.0 {
                    if l.is_finite() { -yi * (v - l).abs() } else { -yi }
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        KktResiduals {
            primal,
            dual,
            complementarity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct KktResiduals {
    /// Largest bound violation of `Ax`.
    pub primal: f64,
    /// `||Px + q + A'y||_inf`.
    pub dual: f64,
    /// Largest `|y_i| * distance to the bound its sign selects`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub scaling_iters: usize,
    pub adapt_interval: usize,
    pub polish: bool,
    /// Stop once all KKT residuals are below this.
    pub kkt_target: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-5,
            eps_rel: 1e-5,
            max_iter: 100_000,
            scaling_iters: 15,
            adapt_interval: 50,
            polish: true,
            kkt_target: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub polished: bool,
    pub residuals: KktResiduals,
}

const RHO_EQ_FACTOR: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;

struct Scaled {
    p: CscMatrix,
    q: Vec<f64>,
    a: CscMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn scale_factor(norm: f64) -> f64 {
    if norm < 1e-4 {
        1.0
    } else {
        (1.0 / norm.sqrt()).clamp(1e-4, 1e4)
    }
}

fn ruiz(prob: &QpProblem, iters: usize) -> Scaled {
    let (n, m) = (prob.n(), prob.m());
    let mut s = Scaled {
        p: prob.p_upper.clone(),
        q: prob.q.clone(),
        a: prob.a.clone(),
        l: prob.l.clone(),
        u: prob.u.clone(),
        d: vec![1.0; n],
        e: vec![1.0; m],
        c: 1.0,
    };
    for _ in 0..iters {
        let mut col = vec![0.0f64; n];
        for j in 0..n {
            for (i, v) in s.p.col(j) {
                col[j] = col[j].max(v.abs());
                col[i] = col[i].max(v.abs());
            }
            for (_, v) in s.a.col(j) {
                col[j] = col[j].max(v.abs());
            }
        }
        let mut row = vec![0.0f64; m];
        for j in 0..n {
            for (i, v) in s.a.col(j) {
                row[i] = row[i].max(v.abs());
            }
        }
        let dd: Vec<f64> = col.into_iter().map(scale_factor).collect();
        let de: Vec<f64> = row.into_iter().map(scale_factor).collect();
        for j in 0..n {
            for k in s.p.col_ptr[j]..s.p.col_ptr[j + 1] {
                let i = s.p.row_idx[k];
                s.p.values[k] *= dd[i] * dd[j];
            }
            for k in s.a.col_ptr[j]..s.a.col_ptr[j + 1] {
                let i = s.a.row_idx[k];
                s.a.values[k] *= de[i] * dd[j];
            }
        }
        for j in 0..n {
            s.q[j] *= dd[j];
            s.d[j] *= dd[j];
        }
        for i in 0..m {
            s.l[i] *= de[i];
            s.u[i] *= de[i];
            s.e[i] *= de[i];
        }
    }
    let mut col = vec![0.0f64; n];
    for j in 0..n {
        for (i, v) in s.p.col(j) {
            col[j] = col[j].max(v.abs());
            col[i] = col[i].max(v.abs());
        }
    }
    let mean_p = if n > 0 { col.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let norm = mean_p.max(inf_norm(&s.q));
    let c = if norm < 1e-4 { 1.0 } else { (1.0 / norm).clamp(1e-4, 1e4) };
    s.p.values.iter_mut().for_each(|v| *v *= c);
    s.q.iter_mut().for_each(|v| *v *= c);
    s.c = c;
    s
}

struct Kkt {
    matrix: CscMatrix,
    factor: LdlFactor,
    /// Position of each `-1/rho_i` diagonal in `matrix.values`.
    rho_pos: Vec<usize>,
}

fn kkt_system(p: &CscMatrix, a: &CscMatrix, diag_x: f64, rho: &[f64]) -> Result<Kkt> {
    let (n, m) = (p.n_cols, a.n_rows);
    let mut t = Vec::with_capacity(p.nnz() + a.nnz() + n + m);
    for j in 0..n {
        for (i, v) in p.col(j) {
            t.push((i, j, v));
        }
        t.push((j, j, diag_x));
        for (i, v) in a.col(j) {
            t.push((j, n + i, v));
        }
    }
    for (i, r) in rho.iter().enumerate() {
        t.push((n + i, n + i, -1.0 / r));
    }
    let matrix = CscMatrix::from_triplets(n + m, n + m, &t);
    let rho_pos = (0..m).map(|i| matrix.col_ptr[n + i + 1] - 1).collect();
    let factor = LdlFactor::new(&matrix)?;
    Ok(Kkt {
        matrix,
        factor,
        rho_pos,
    })
}

fn rho_vector(rho: f64, l: &[f64], u: &[f64]) -> Vec<f64> {
    l.iter()
        .zip(u)
        .map(|(l, u)| {
            if l == u {
                (RHO_EQ_FACTOR * rho).min(RHO_MAX)
            } else if !l.is_finite() && !u.is_finite() {
                RHO_MIN
            } else {
                rho
            }
        })
        .collect()
}

/// Solves `prob`. Fails with [`Error::NotConverged`] if neither ADMM nor
/// polishing reaches the tolerances within `max_iter` iterations.
pub fn solve_qp(prob: &QpProblem, settings: &QpSettings) -> Result<QpSolution> {
    let (n, m) = (prob.n(), prob.m());
    let s = ruiz(prob, settings.scaling_iters);
    let mut rho = settings.rho;
    let mut rho_vec = rho_vector(rho, &s.l, &s.u);
    let mut kkt = kkt_system(&s.p, &s.a, settings.sigma, &rho_vec)?;

    let mut x = vec![0.0; n];
    let mut z = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut rhs = vec![0.0; n + m];
    let mut ax = vec![0.0; m];
    let mut px = vec![0.0; n];
    let mut aty = vec![0.0; n];
    let mut eps_abs = settings.eps_abs;
    let mut eps_rel = settings.eps_rel;
    let mut best: Option<QpSolution> = None;
    let alpha = settings.alpha;

    let unscale = |xs: &[f64], ys: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = xs.iter().zip(&s.d).map(|(v, d)| v * d).collect();
        let y: Vec<f64> = ys.iter().zip(&s.e).map(|(v, e)| v * e / s.c).collect();
        (x, y)
    };
    let finish = |xs: &[f64], ys: &[f64], iterations: usize, polished: bool| -> QpSolution {
        let (x, y) = unscale(xs, ys);
        let residuals = prob.kkt_residuals(&x, &y);
        QpSolution {
            objective: prob.objective(&x),
            x,
            y,
            iterations,
            polished,
            residuals,
        }
    };

    for iter in 1..=settings.max_iter {
        for j in 0..n {
            rhs[j] = settings.sigma * x[j] - s.q[j];
        }
        for i in 0..m {
            rhs[n + i] = z[i] - y[i] / rho_vec[i];
        }
        kkt.factor.solve(&mut rhs);
        for j in 0..n {
            x[j] = alpha * rhs[j] + (1.0 - alpha) * x[j];
        }
        for i in 0..m {
            let z_tilde = z[i] + (rhs[n + i] - y[i]) / rho_vec[i];
            let relaxed = alpha * z_tilde + (1.0 - alpha) * z[i];
            let z_new = (relaxed + y[i] / rho_vec[i]).clamp(s.l[i], s.u[i]);
            y[i] += rho_vec[i] * (relaxed - z_new);
            z[i] = z_new;
        }

        let check = iter % 10 == 0 || iter == settings.max_iter;
        let adapt = iter % settings.adapt_interval == 0;
        if !(check || adapt) {
            continue;
        }
        ax.iter_mut().for_each(|v| *v = 0.0);
        s.a.mul_add(&x, &mut ax);
        px.iter_mut().for_each(|v| *v = 0.0);
        s.p.sym_upper_mul_add(&x, &mut px);
        aty.iter_mut().for_each(|v| *v = 0.0);
        s.a.mul_t_add(&y, &mut aty);

        let einv_norm = |v: &[f64]| v.iter().zip(&s.e).fold(0.0f64, |acc, (a, e)| acc.max((a / e).abs()));
        let dinv_norm = |v: &[f64]| v.iter().zip(&s.d).fold(0.0f64, |acc, (a, d)| acc.max((a / d).abs()));
        let prim_vec: Vec<f64> = ax.iter().zip(&z).map(|(a, b)| a - b).collect();
        let dual_vec: Vec<f64> = (0..n).map(|j| px[j] + s.q[j] + aty[j]).collect();
        let prim = einv_norm(&prim_vec);
        let dual = dinv_norm(&dual_vec) / s.c;
        let prim_tol = eps_abs + eps_rel * einv_norm(&ax).max(einv_norm(&z));
        let dual_tol =
            eps_abs + eps_rel / s.c * dinv_norm(&px).max(dinv_norm(&aty)).max(dinv_norm(&s.q));

        if check && prim <= prim_tol && dual <= dual_tol {
            let mut candidate = finish(&x, &y, iter, false);
            if settings.polish {
                if let Some((xp, yp)) = polish(&s, &x, &z, &y) {
                    let polished = finish(&xp, &yp, iter, true);
                    if polished.residuals.max() < candidate.residuals.max() {
                        candidate = polished;
                    }
                }
            }
            let better = best
                .as_ref()
                .map_or(true, |b| candidate.residuals.max() < b.residuals.max());
            if better {
                best = Some(candidate);
            }
            let done = best.as_ref().is_some_and(|b| b.residuals.max() <= settings.kkt_target);
            if done {
                break;
            }
            eps_abs = (eps_abs * 0.1).max(1e-13);
            eps_rel = (eps_rel * 0.1).max(1e-13);
        }

        if adapt {
            let prim_scale = inf_norm(&ax).max(inf_norm(&z)).max(1e-30);
            let dual_scale = inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&s.q)).max(1e-30);
            let p_rel = inf_norm(&prim_vec) / prim_scale;
            let d_rel = inf_norm(&dual_vec) / dual_scale;
            if p_rel > 0.0 && d_rel > 0.0 {
                let ratio = (p_rel / d_rel).sqrt();
                let new_rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
                if !(0.2..=5.0).contains(&ratio) {
                    rho = new_rho;
                    rho_vec = rho_vector(rho, &s.l, &s.u);
                    for (i, &pos) in kkt.rho_pos.iter().enumerate() {
                        kkt.matrix.values[pos] = -1.0 / rho_vec[i];
                    }
                    kkt.factor.refactor(&kkt.matrix.values)?;
                }
            }
        }
        if iter == settings.max_iter && best.is_none() {
            return Err(Error::NotConverged {
                iterations: iter,
                primal: prim,
                dual,
            });
        }
    }
    best.ok_or(Error::NotConverged {
        iterations: settings.max_iter,
        primal: f64::NAN,
        dual: f64::NAN,
    })
}

/// Solves the equality-constrained problem on the active set guessed from
/// `(z, y)`, with a small proximal term towards `x_ref` so that directions
/// the active set leaves free (common here, the objective is mostly linear)
/// stay where ADMM put them. The guess is corrected for a few rounds: rows the solution
/// violates are added and rows whose multiplier has the wrong sign dropped.
/// Returns the candidate with the smallest scaled violation.
fn polish(s: &Scaled, x_ref: &[f64], z: &[f64], y: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let m = s.l.len();
    // 0 inactive, -1 at lower bound, 1 at upper bound, 2 equality.
    let mut state: Vec<i8> = (0..m)
        .map(|i| {
            if s.l[i] == s.u[i] {
                2
            } else if z[i] - s.l[i] < -y[i] {
                -1
            } else if s.u[i] - z[i] < y[i] {
                1
            } else {
                0
            }
        })
        .collect();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for _ in 0..8 {
        let active: Vec<(usize, f64)> = (0..m)
            .filter_map(|i| match state[i] {
                0 => None,
                1 => Some((i, s.u[i])),
                _ => Some((i, s.l[i])),
            })
            .collect();
        let Some((x, yp)) = polish_on(s, x_ref, &active) else { break };
        let mut ax = vec![0.0; m];
        s.a.mul_add(&x, &mut ax);
        let mut worst = 0.0f64;
        let mut changed = false;
        for i in 0..m {
            let viol = (s.l[i] - ax[i]).max(ax[i] - s.u[i]).max(0.0);
            let sign_wrong = (state[i] == 1 && yp[i] < 0.0) || (state[i] == -1 && yp[i] > 0.0);
            worst = worst.max(viol).max(if sign_wrong { yp[i].abs() } else { 0.0 });
            if state[i] == 2 {
                continue;
            }
            if viol > 1e-12 {
                state[i] = if ax[i] < s.l[i] { -1 } else { 1 };
                changed = true;
            } else if sign_wrong {
                state[i] = 0;
                changed = true;
            }
        }
        if best.as_ref().map_or(true, |b| worst < b.0) {
            best = Some((worst, x, yp));
        }
        if !changed {
            break;
        }
    }
    best.map(|(_, x, y)| (x, y))
}

fn polish_on(s: &Scaled, x_ref: &[f64], active_rows: &[(usize, f64)]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = s.q.len();
    let delta = 1e-7;
    let active: Vec<usize> = active_rows.iter().map(|a| a.0).collect();
    let target: Vec<f64> = active_rows.iter().map(|a| a.1).collect();
    let k = active.len();
    let mut row_of = vec![usize::MAX; s.l.len()];
    for (r, &i) in active.iter().enumerate() {
        row_of[i] = r;
    }
    let mut t = Vec::new();
    for j in 0..n {
        for (i, v) in s.p.col(j) {
            t.push((i, j, v));
        }
        t.push((j, j, delta));
        for (i, v) in s.a.col(j) {
            if row_of[i] != usize::MAX {
                t.push((j, n + row_of[i], v));
            }
        }
    }
    for r in 0..k {
        t.push((n + r, n + r, 0.0));
    }
    let exact = CscMatrix::from_triplets(n + k, n + k, &t);
    let mut reg = exact.clone();
    for j in 0..n + k {
        let pos = reg.col_ptr[j + 1] - 1;
        debug_assert_eq!(reg.row_idx[pos], j);
        if j >= n {
            reg.values[pos] -= delta;
        }
    }
    let factor = LdlFactor::new(&reg).ok()?;

    let mut rhs: Vec<f64> = s.q.iter().zip(x_ref).map(|(q, x)| delta * x - q).collect();
    rhs.extend_from_slice(&target);
    let mut sol = rhs.clone();
    factor.solve(&mut sol);
    for _ in 0..25 {
        let mut r = vec![0.0; n + k];
        exact.sym_upper_mul_add(&sol, &mut r);
        let mut worst = 0.0f64;
        for (ri, bi) in r.iter_mut().zip(&rhs) {
            *ri = bi - *ri;
            worst = worst.max(ri.abs());
        }
        if worst < 1e-13 {
            break;
        }
        factor.solve(&mut r);
        for (a, b) in sol.iter_mut().zip(&r) {
            *a += b;
        }
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol[..n].to_vec();
    let mut yp = vec![0.0; s.l.len()];
    for (r, &i) in active.iter().enumerate() {
        yp[i] = sol[n + r];
    }
    Some((x, yp))
}
