//! Compressed sparse column matrices and an LDL' factorization for
//! quasi-definite symmetric systems.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Column-compressed sparse matrix. Row indices are sorted within a column.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut t: Vec<(usize, usize, f64)> = triplets.to_vec();
        t.sort_by_key(|e| (e.1, e.0));
        let mut col_ptr = vec![0; n_cols + 1];
        let mut row_idx = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            debug_assert!(r < n_rows && c < n_cols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_idx.push(r);
            values.push(v);
            col_ptr[c + 1] += 1;
            last = Some((r, c));
        }
        for c in 0..n_cols {
            col_ptr[c + 1] += col_ptr[c];
        }
        Self {
            n_rows,
            n_cols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// `y += A x`.
    pub fn mul_add(&self, x: &[f64], y: &mut [f64]) {
        for j in 0..self.n_cols {
            let xj = x[j];
            if xj != 0.0 {
                for (i, v) in self.col(j) {
                    y[i] += v * xj;
                }
            }
        }
    }

    /// `y += A' x`.
    pub fn mul_t_add(&self, x: &[f64], y: &mut [f64]) {
        for (j, yj) in y.iter_mut().enumerate().take(self.n_cols) {
            *yj += self.col(j).map(|(i, v)| v * x[i]).sum::<f64>();
        }
    }

    /// `y += S x` where `self` holds the upper triangle of symmetric `S`.
    pub fn sym_upper_mul_add(&self, x: &[f64], y: &mut [f64]) {
        for j in 0..self.n_cols {
            for (i, v) in self.col(j) {
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
    }
}

/// Minimum-degree ordering of a symmetric pattern given by its upper
/// triangle. Returns `perm` with `perm[k]` the original index eliminated k-th.
///
/// Plain elimination-graph minimum degree with lazy heap updates; ties go to
/// the lower index.
pub fn minimum_degree(upper: &CscMatrix) -> Vec<usize> {
    let n = upper.n_cols;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..n {
        for (i, _) in upper.col(j) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).map(|i| Reverse((adj[i].len(), i))).collect();
    let mut perm = Vec::with_capacity(n);
    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != adj[v].len() {
            continue;
        }
        eliminated[v] = true;
        perm.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &a in &nbrs {
            // adj[a] := (adj[a] ∪ nbrs) \ {a, v}
            let mut merged: Vec<usize> = adj[a].iter().copied().filter(|&x| x != v).collect();
            merged.extend(nbrs.iter().copied().filter(|&x| x != a));
            merged.sort_unstable();
            merged.dedup();
            adj[a] = merged;
            heap.push(Reverse((adj[a].len(), a)));
        }
    }
    perm
}

/// `L D L'` factorization of a permuted symmetric matrix supplied as its
/// upper triangle. The symbolic analysis is kept so that matrices with the
/// same pattern can be refactored cheaply.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    /// Upper triangle of the permuted matrix.
    pa: CscMatrix,
    /// `map[k]` is the position in `pa.values` of input entry `k`.
    map: Vec<usize>,
    etree: Vec<Option<usize>>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

impl LdlFactor {
    /// Orders with [`minimum_degree`], analyses and factors `upper`.
    pub fn new(upper: &CscMatrix) -> Result<Self> {
        let perm = minimum_degree(upper);
        Self::with_ordering(upper, perm)
    }

    pub fn with_ordering(upper: &CscMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = upper.n_cols;
        let mut pinv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p] = k;
        }
        let mut trip = Vec::with_capacity(upper.nnz());
        for j in 0..n {
            for (i, _) in upper.col(j) {
                let (a, b) = (pinv[i], pinv[j]);
                trip.push((a.min(b), a.max(b), 0.0));
            }
        }
        let pa = CscMatrix::from_triplets(n, n, &trip);
        let mut map = Vec::with_capacity(upper.nnz());
        for j in 0..n {
            for (i, _) in upper.col(j) {
                let (r, c) = (pinv[i].min(pinv[j]), pinv[i].max(pinv[j]));
                let range = pa.col_ptr[c]..pa.col_ptr[c + 1];
                let off = pa.row_idx[range.clone()].binary_search(&r).expect("entry present");
                map.push(range.start + off);
            }
        }

        // Elimination tree and column counts.
        let mut etree = vec![None; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![usize::MAX; n];
        for j in 0..n {
            work[j] = j;
            for (mut i, _) in pa.col(j) {
                while work[i] != j {
                    if etree[i].is_none() {
                        etree[i] = Some(j);
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i].expect("set above");
                }
            }
        }
        let mut lp = vec![0; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let mut f = Self {
            n,
            perm,
            pa,
            map,
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
        };
        f.refactor(&upper.values)?;
        Ok(f)
    }

    pub fn nnz_l(&self) -> usize {
        self.lx.len()
    }

    /// Numeric refactorization with new values on the original pattern.
    pub fn refactor(&mut self, values: &[f64]) -> Result<()> {
        debug_assert_eq!(values.len(), self.map.len());
        self.pa.values.iter_mut().for_each(|v| *v = 0.0);
        for (k, &v) in values.iter().enumerate() {
            self.pa.values[self.map[k]] += v;
        }
        let n = self.n;
        let mut y_vals = vec![0.0; n];
        let mut y_used = vec![false; n];
        let mut y_idx: Vec<usize> = Vec::with_capacity(n);
        let mut elim: Vec<usize> = Vec::with_capacity(n);
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();

        for k in 0..n {
            y_idx.clear();
            self.d[k] = 0.0;
            for (b, v) in self.pa.col(k) {
                if b == k {
                    self.d[k] = v;
                    continue;
                }
                y_vals[b] = v;
                if !y_used[b] {
                    y_used[b] = true;
                    elim.clear();
                    elim.push(b);
                    let mut next = self.etree[b];
                    while let Some(nx) = next {
                        if nx >= k || y_used[nx] {
                            break;
                        }
                        y_used[nx] = true;
                        elim.push(nx);
                        next = self.etree[nx];
                    }
                    y_idx.extend(elim.iter().rev());
                }
            }
            for &c in y_idx.iter().rev() {
                let end = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..end {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[end] = k;
                let l = yc * self.dinv[c];
                self.lx[end] = l;
                self.d[k] -= yc * l;
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            if self.d[k] == 0.0 || !self.d[k].is_finite() {
                return Err(Error::BadParameter(format!("zero pivot at column {k} of LDL factorization")));
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        Ok(())
    }

    /// Solves `S x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for (xi, di) in x.iter_mut().zip(&self.dinv) {
            *xi *= di;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                s -= self.lx[j] * x[self.li[j]];
            }
            x[i] = s;
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = x[k];
        }
    }

    /// Number of negative pivots; equals the number of constraint rows for a
    /// quasi-definite KKT matrix.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&d| d < 0.0).count()
    }
}
