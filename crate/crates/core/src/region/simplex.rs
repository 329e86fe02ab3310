//! Dense two-phase simplex for `max cᵀx  s.t.  Ax ≤ b, x ≥ 0`.
//!
//! Bland's rule is used for both the entering and the leaving variable, so
//! the method cannot cycle. Meant for the handful of variables and
//! constraints the region computations need.

const EPS: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }
}

struct Tableau {
    /// m constraint rows followed by the objective row; last column is the
    /// right-hand side.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn m(&self) -> usize {
        self.basis.len()
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
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

    /// Runs simplex iterations on the objective row over columns
    /// `0..allowed`. Returns false when unbounded.
    fn optimize(&mut self, allowed: usize) -> bool {
        let m = self.m();
        let rhs = self.cols;
        loop {
            let Some(c) = (0..allowed).find(|&j| self.rows[m][j] < -EPS) else {
                return true;
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.rows[i][c];
                if a > EPS {
                    let ratio = self.rows[i][rhs] / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - EPS
                                || (ratio <= br + EPS && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, c),
                None => return false,
            }
        }
    }
}

/// Maximize `c·x` subject to `a x ≤ b` and `x ≥ 0`. `b` may have any sign.
pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let n = c.len();
    let m = a.len();
    assert_eq!(b.len(), m, "one right-hand side per row");
    assert!(
        a.iter().all(|row| row.len() == n),
        "rows must have one entry per variable"
    );

    let negative: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let na = negative.len();
    let cols = n + m + na;
    let mut rows = vec![vec![0.0; cols + 1]; m + 1];
    let mut basis = vec![0; m];
    let mut art = 0;
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            rows[i][j] = sign * a[i][j];
        }
        rows[i][n + i] = sign;
        rows[i][cols] = sign * b[i];
        if b[i] < 0.0 {
            rows[i][n + m + art] = 1.0;
            basis[i] = n + m + art;
            art += 1;
        } else {
            basis[i] = n + i;
        }
    }
    let mut t = Tableau { rows, basis, cols };

    if na > 0 {
        // phase 1: maximize -Σ artificials
        for j in n + m..cols {
            t.rows[m][j] = 1.0;
        }
        for &i in &negative {
            for j in 0..=cols {
                let v = t.rows[i][j];
                t.rows[m][j] -= v;
            }
        }
        t.optimize(cols);
        if t.rows[m][cols] < -1e-9 {
            return LpOutcome::Infeasible;
        }
        // drive remaining artificials out of the basis
        let mut i = 0;
        while i < t.m() {
            if t.basis[i] >= n + m {
                match (0..n + m).find(|&j| t.rows[i][j].abs() > EPS) {
                    Some(j) => t.pivot(i, j),
                    None => {
                        t.rows.remove(i);
                        t.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let m = t.m();
    for j in 0..=cols {
        t.rows[m][j] = 0.0;
    }
    for (j, cj) in c.iter().enumerate() {
        t.rows[m][j] = -cj;
    }
    for i in 0..m {
        let bj = t.basis[i];
        let f = t.rows[m][bj];
        if f != 0.0 {
            for j in 0..=cols {
                let v = t.rows[i][j];
                t.rows[m][j] -= f * v;
            }
        }
    }
    if !t.optimize(n + m) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] = t.rows[i][cols];
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpOutcome::Optimal { value, x }
}
