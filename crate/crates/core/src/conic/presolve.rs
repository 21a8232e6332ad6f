//! Removal of pinched columns and empty rows before the iteration starts.
//!
//! Columns whose singleton bound rows pin them to a single value are
//! substituted out, and rows left without any coefficient are checked and
//! dropped. The postsolve step rebuilds full-length primal, slack, and dual
//! vectors such that residuals on the original program are consistent.

use super::cones::{margin, Cone};
use super::program::ConicProgram;
use super::sparse::CscMatrix;

#[derive(Debug, Clone)]
pub(crate) struct Reduced {
    pub c: Vec<f64>,
    pub a: CscMatrix,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
    kept_cols: Vec<usize>,
    kept_rows: Vec<usize>,
    /// (column, value) for substituted columns.
    fixed: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum PresolveOutcome {
    Infeasible,
    Unbounded,
}

fn nonzero_row_counts(a: &CscMatrix) -> (Vec<usize>, Vec<usize>) {
    let mut count = vec![0usize; a.nrows];
    let mut last_col = vec![usize::MAX; a.nrows];
    for (r, c, v) in a.triplets() {
        if v != 0.0 {
            count[r] += 1;
            last_col[r] = c;
        }
    }
    (count, last_col)
}

pub(crate) fn presolve(p: &ConicProgram) -> Result<Reduced, PresolveOutcome> {
    let (n, m) = (p.n(), p.m());
    let ranges = p.cone_ranges();
    let mut row_cone = vec![0usize; m];
    for (k, r) in ranges.iter().enumerate() {
        for i in r.clone() {
            row_cone[i] = k;
        }
    }
    let (count, last_col) = nonzero_row_counts(&p.a);

    // Tightest singleton bounds per column.
    let mut lower = vec![f64::NEG_INFINITY; n];
    let mut upper = vec![f64::INFINITY; n];
    for i in 0..m {
        if count[i] != 1 || !matches!(p.cones[row_cone[i]], Cone::Nonnegative(_)) {
            continue;
        }
        let j = last_col[i];
        let a = p.a.get(i, j);
        let bound = p.b[i] / a;
        if a > 0.0 {
            upper[j] = upper[j].min(bound);
        } else {
            lower[j] = lower[j].max(bound);
        }
    }
    let mut fixed_val = vec![None; n];
    for j in 0..n {
        let (l, u) = (lower[j], upper[j]);
        if l.is_finite() && u.is_finite() {
            let tol = 1e-12 * l.abs().max(u.abs()).max(1.0);
            if l > u + tol {
                return Err(PresolveOutcome::Infeasible);
            }
            if u - l <= tol {
                fixed_val[j] = Some(0.5 * (l + u));
            }
        }
    }
    // Columns with no coefficients at all.
    for j in 0..n {
        if fixed_val[j].is_none() && p.a.col(j).all(|(_, v)| v == 0.0) {
            if p.c[j] != 0.0 {
                return Err(PresolveOutcome::Unbounded);
            }
            fixed_val[j] = Some(0.0);
        }
    }

    let mut b = p.b.clone();
    let mut fixed = Vec::new();
    for j in 0..n {
        if let Some(v) = fixed_val[j] {
            for (r, a) in p.a.col(j) {
                b[r] -= a * v;
            }
            fixed.push((j, v));
        }
    }
    let kept_cols: Vec<usize> = (0..n).filter(|&j| fixed_val[j].is_none()).collect();

    // Remaining coefficient count per row.
    let mut live = vec![0usize; m];
    for &j in &kept_cols {
        for (r, v) in p.a.col(j) {
            if v != 0.0 {
                live[r] += 1;
            }
        }
    }
    let mut kept_rows = Vec::with_capacity(m);
    let mut cones = Vec::with_capacity(p.cones.len());
    for (k, range) in ranges.iter().enumerate() {
        match p.cones[k] {
            Cone::Zero(_) | Cone::Nonnegative(_) => {
                let is_zero = matches!(p.cones[k], Cone::Zero(_));
                let mut kept = 0;
                for i in range.clone() {
                    if live[i] > 0 {
                        kept_rows.push(i);
                        kept += 1;
                        continue;
                    }
                    let tol = 1e-9 * (1.0 + p.b[i].abs());
                    let ok = if is_zero { b[i].abs() <= tol } else { b[i] >= -tol };
                    if !ok {
                        return Err(PresolveOutcome::Infeasible);
                    }
                }
                if kept > 0 {
                    cones.push(if is_zero { Cone::Zero(kept) } else { Cone::Nonnegative(kept) });
                }
            }
            cone => {
                if range.clone().any(|i| live[i] > 0) {
                    kept_rows.extend(range.clone());
                    cones.push(cone);
                } else {
                    let scale = 1.0 + range.clone().map(|i| p.b[i].abs()).fold(0.0, f64::max);
                    if margin(&cone, &b[range.clone()]) < -1e-9 * scale {
                        return Err(PresolveOutcome::Infeasible);
                    }
                }
            }
        }
    }
    let a = p.a.select(&kept_rows, &kept_cols);
    Ok(Reduced {
        c: kept_cols.iter().map(|&j| p.c[j]).collect(),
        b: kept_rows.iter().map(|&i| b[i]).collect(),
        a,
        cones,
        kept_cols,
        kept_rows,
        fixed,
    })
}

impl Reduced {
    #[cfg(test)]
    pub fn n(&self) -> usize {
        self.kept_cols.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.kept_cols.is_empty()
    }

    /// Places reduced vectors at their original positions, zero elsewhere.
    /// Used for certificates, where substituted values have no meaning.
    pub fn expand(&self, p: &ConicProgram, xr: &[f64], yr: &[f64], sr: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; p.n()];
        for (k, &j) in self.kept_cols.iter().enumerate() {
            x[j] = xr[k];
        }
        let mut y = vec![0.0; p.m()];
        let mut s = vec![0.0; p.m()];
        for (k, &i) in self.kept_rows.iter().enumerate() {
            y[i] = yr[k];
            s[i] = sr[k];
        }
        (x, y, s)
    }

    /// Expands a solution of the reduced program to the original one.
    pub fn postsolve(&self, p: &ConicProgram, xr: &[f64], yr: &[f64], sr: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (n, m) = (p.n(), p.m());
        let mut x = vec![0.0; n];
        for (k, &j) in self.kept_cols.iter().enumerate() {
            x[j] = xr[k];
        }
        for &(j, v) in &self.fixed {
            x[j] = v;
        }
        let mut y = vec![0.0; m];
        for (k, &i) in self.kept_rows.iter().enumerate() {
            y[i] = yr[k];
        }
        // Dropped rows take s = b - Ax (zero on equality rows), kept rows
        // keep the iterate's slack.
        let mut s = p.b.clone();
        p.a.gemv(-1.0, &x, &mut s);
        for (range, cone) in p.cone_ranges().into_iter().zip(&p.cones) {
            if matches!(cone, Cone::Zero(_)) {
                s[range].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let mut kept_row = vec![false; m];
        for &i in &self.kept_rows {
            kept_row[i] = true;
        }
        let bound_slack: Vec<f64> = s.clone();
        for (k, &i) in self.kept_rows.iter().enumerate() {
            s[i] = sr[k];
        }
        // Dual multipliers on the dropped bound rows of substituted columns.
        for &(j, _) in &self.fixed {
            let mut g = p.c[j];
            let mut lower_row = None;
            let mut upper_row = None;
            for (r, a) in p.a.col(j) {
                if kept_row[r] {
                    g += a * y[r];
                } else if a != 0.0 {
                    let active = bound_slack[r].abs() <= 1e-9 * (1.0 + p.b[r].abs());
                    if a < 0.0 && lower_row.is_none() && active {
                        lower_row = Some((r, a));
                    } else if a > 0.0 && upper_row.is_none() && active {
                        upper_row = Some((r, a));
                    }
                }
            }
            // want sum a_r y_r = -g with y_r >= 0
            if g > 0.0 {
                if let Some((r, a)) = lower_row {
                    y[r] = -g / a;
                }
            } else if g < 0.0 {
                if let Some((r, a)) = upper_row {
                    y[r] = -g / a;
                }
            }
        }
        (x, y, s)
    }
}
