//! Dense two-phase simplex for `min c^T x  s.t.  A x <= b, x >= 0`.
//!
//! Bland's rule throughout, so degenerate problems cannot cycle. Sized for
//! the trust-region subproblems of the constrained optimizer (tens of rows).

const EPS: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// `rows x (cols + 1)`, last column is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.t[r][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost` over the current basis; columns with `allowed[c] ==
    /// false` never enter. Returns `false` when unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> bool {
        let m = self.t.len();
        let scale = cost.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        loop {
            // reduced costs: c_j - c_B^T B^{-1} A_j
            let mut entering = None;
            for j in 0..self.cols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut rc = cost[j];
                for r in 0..m {
                    rc -= cost[self.basis[r]] * self.t[r][j];
                }
                if rc < -EPS * scale {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                let a = self.t[r][j];
                if a > EPS {
                    let ratio = self.rhs(r) / a;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, best)) => {
                            if ratio < best - EPS
                                || (ratio <= best + EPS && self.basis[r] < self.basis[lr])
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, j),
                None => return false,
            }
        }
    }
}

/// `a` is row-major with `b.len()` rows of `c.len()` entries.
pub(crate) fn solve(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let n = c.len();
    let m = b.len();
    // columns: originals | one slack per row | artificials for rows with b < 0
    let neg_rows: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let n_art = neg_rows.len();
    let cols = n + m + n_art;
    let mut t = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0; m];
    let mut art_of_row = vec![None; m];
    for (k, &i) in neg_rows.iter().enumerate() {
        art_of_row[i] = Some(n + m + k);
    }
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * a[i][j];
        }
        t[i][n + i] = sign;
        t[i][cols] = sign * b[i];
        match art_of_row[i] {
            Some(col) => {
                t[i][col] = 1.0;
                basis[i] = col;
            }
            None => basis[i] = n + i,
        }
    }
    let mut tab = Tableau { t, basis, cols };

    if n_art > 0 {
        let mut cost1 = vec![0.0; cols];
        for c in cost1.iter_mut().skip(n + m) {
            *c = 1.0;
        }
        let allowed = vec![true; cols];
        tab.optimize(&cost1, &allowed);
        let infeas: f64 = (0..m)
            .filter(|&r| tab.basis[r] >= n + m)
            .map(|r| tab.rhs(r))
            .sum();
        let bscale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        if infeas > 1e-9 * bscale {
            return LpOutcome::Infeasible;
        }
        // drive zero-level artificials out of the basis
        let mut r = 0;
        while r < tab.t.len() {
            if tab.basis[r] >= n + m {
                if let Some(j) = (0..n + m).find(|&j| tab.t[r][j].abs() > 1e-9) {
                    tab.pivot(r, j);
                    r += 1;
                } else {
                    tab.t.remove(r);
                    tab.basis.remove(r);
                }
            } else {
                r += 1;
            }
        }
    }

    let mut cost2 = vec![0.0; cols];
    cost2[..n].copy_from_slice(c);
    let mut allowed = vec![true; cols];
    for a in allowed.iter_mut().skip(n + m) {
        *a = false;
    }
    if !tab.optimize(&cost2, &allowed) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (r, &bv) in tab.basis.iter().enumerate() {
        if bv < n {
            x[bv] = tab.rhs(r).max(0.0);
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpOutcome::Optimal { x, value }
}
