//! Sparse LDLᵀ factorization for quasi-definite matrices.
//!
//! Column-oriented up-looking factorization over an elimination tree, with an
//! approximate-minimum-degree fill-reducing ordering. No numerical pivoting is
//! performed: every diagonal pivot is expected to carry a known sign, and a
//! pivot that is too small or of the wrong sign is replaced by a signed
//! regularization value (dynamic regularization). Quasi-definite matrices
//! admit a stable factorization under any symmetric permutation.

use super::sparse::CscMatrix;
use thiserror::Error;

const NONE: usize = usize::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum LdlError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("entry ({row},{col}) lies below the diagonal; pass the upper triangle only")]
    NotUpperTriangular { row: usize, col: usize },
    #[error("sign vector has length {got}, expected {expected}")]
    SignLength { got: usize, expected: usize },
    #[error("zero pivot at position {0}")]
    ZeroPivot(usize),
    #[error("fill-reducing ordering failed")]
    Ordering,
    #[error("value vector has length {got}, expected {expected}")]
    ValueLength { got: usize, expected: usize },
}

/// Settings for pivot regularization.
#[derive(Debug, Clone, Copy)]
pub struct Regularization {
    /// Pivots with `sign * d < threshold` are replaced.
    pub threshold: f64,
    /// Replacement magnitude.
    pub delta: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Self {
            threshold: 1e-13,
            delta: 2e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    // permuted upper triangle
    kp: Vec<usize>,
    ki: Vec<usize>,
    kx: Vec<f64>,
    // input nz index -> permuted nz index
    map: Vec<usize>,
    signs: Vec<f64>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    reg: Regularization,
    regularized: usize,
}

impl LdlFactor {
    /// Symbolic analysis plus a first numeric factorization of the upper
    /// triangle `upper`. `signs[i]` is +1 or -1, the expected sign of the
    /// i-th pivot.
    pub fn new(upper: &CscMatrix, signs: &[f64], reg: Regularization) -> Result<Self, LdlError> {
        let n = upper.ncols;
        if upper.nrows != n {
            return Err(LdlError::NotSquare(upper.nrows, n));
        }
        if signs.len() != n {
            return Err(LdlError::SignLength {
                got: signs.len(),
                expected: n,
            });
        }
        for (r, c, _) in upper.triplets() {
            if r > c {
                return Err(LdlError::NotUpperTriangular { row: r, col: c });
            }
        }
        let perm = fill_reducing_order(upper)?;
        let mut iperm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }

        // Permute pattern, remembering where every input entry lands.
        let mut counts = vec![0usize; n + 1];
        let mut targets = Vec::with_capacity(upper.nnz());
        for (r, c, _) in upper.triplets() {
            let (pr, pc) = (iperm[r], iperm[c]);
            let (row, col) = if pr <= pc { (pr, pc) } else { (pc, pr) };
            counts[col + 1] += 1;
            targets.push((row, col));
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let kp = counts.clone();
        let mut next = counts;
        let mut ki = vec![0; targets.len()];
        let mut map = vec![0; targets.len()];
        for (idx, &(row, col)) in targets.iter().enumerate() {
            let k = next[col];
            ki[k] = row;
            map[idx] = k;
            next[col] += 1;
        }
        let kx = vec![0.0; ki.len()];

        let psigns: Vec<f64> = perm.iter().map(|&p| signs[p]).collect();
        let (etree, lnz) = elimination_tree(n, &kp, &ki);
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let mut f = Self {
            n,
            perm,
            kp,
            ki,
            kx,
            map,
            signs: psigns,
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            reg,
            regularized: 0,
        };
        f.refactor(&upper.nzval)?;
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of pivots replaced by regularization in the last factorization.
    pub fn regularized_pivots(&self) -> usize {
        self.regularized
    }

    pub fn nnz_l(&self) -> usize {
        self.li.len()
    }

    /// Numeric refactorization with new values for the same pattern, given
    /// in the order of the matrix passed to [`LdlFactor::new`].
    pub fn refactor(&mut self, values: &[f64]) -> Result<(), LdlError> {
        if values.len() != self.map.len() {
            return Err(LdlError::ValueLength {
                got: values.len(),
                expected: self.map.len(),
            });
        }
        self.kx.iter_mut().for_each(|v| *v = 0.0);
        for (idx, &v) in values.iter().enumerate() {
            self.kx[self.map[idx]] += v;
        }
        self.numeric()
    }

    fn numeric(&mut self) -> Result<(), LdlError> {
        let n = self.n;
        let mut y_vals = vec![0.0; n];
        let mut y_mark = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();
        self.regularized = 0;

        for k in 0..n {
            let mut nnz_y = 0;
            self.d[k] = 0.0;
            for p in self.kp[k]..self.kp[k + 1] {
                let b = self.ki[p];
                if b == k {
                    self.d[k] += self.kx[p];
                    continue;
                }
                y_vals[b] += self.kx[p];
                if !y_mark[b] {
                    y_mark[b] = true;
                    elim[0] = b;
                    let mut ne = 1;
                    let mut nxt = self.etree[b];
                    while nxt != NONE && nxt < k {
                        if y_mark[nxt] {
                            break;
                        }
                        y_mark[nxt] = true;
                        elim[ne] = nxt;
                        ne += 1;
                        nxt = self.etree[nxt];
                    }
                    while ne > 0 {
                        ne -= 1;
                        y_idx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let tmp = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..tmp {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[tmp] = k;
                self.lx[tmp] = yc * self.dinv[c];
                self.d[k] -= yc * self.lx[tmp];
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_mark[c] = false;
            }
            let s = self.signs[k];
            if s * self.d[k] < self.reg.threshold {
                self.d[k] = s * self.reg.delta;
                self.regularized += 1;
            }
            if self.d[k] == 0.0 {
                return Err(LdlError::ZeroPivot(self.perm[k]));
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        Ok(())
    }

    /// Solves `K x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..self.n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.lp[i]..self.lp[i + 1] {
                    x[self.li[j]] -= self.lx[j] * xi;
                }
            }
        }
        for i in 0..self.n {
            x[i] *= self.dinv[i];
        }
        for i in (0..self.n).rev() {
            let mut acc = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = x[k];
        }
    }

    /// Inertia of the computed factorization: (positive pivots, negative pivots).
    pub fn inertia(&self) -> (usize, usize) {
        let pos = self.d.iter().filter(|&&v| v > 0.0).count();
        (pos, self.n - pos)
    }
}

fn elimination_tree(n: usize, ap: &[usize], ai: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut work = vec![NONE; n];
    let mut lnz = vec![0usize; n];
    let mut etree = vec![NONE; n];
    for j in 0..n {
        work[j] = j;
        for p in ap[j]..ap[j + 1] {
            let mut i = ai[p];
            while work[i] != j {
                if etree[i] == NONE {
                    etree[i] = j;
                }
                lnz[i] += 1;
                work[i] = j;
                i = etree[i];
            }
        }
    }
    (etree, lnz)
}

fn fill_reducing_order(upper: &CscMatrix) -> Result<Vec<usize>, LdlError> {
    let n = upper.ncols;
    if n == 0 {
        return Ok(Vec::new());
    }
    let ap: Vec<i64> = upper.colptr.iter().map(|&v| v as i64).collect();
    let ai: Vec<i64> = upper.rowval.iter().map(|&v| v as i64).collect();
    let control = amd::Control::default();
    let (p, _pinv, _info) = amd::order(n as i64, &ap, &ai, &control).map_err(|_| LdlError::Ordering)?;
    Ok(p.into_iter().map(|v| v as usize).collect())
}
