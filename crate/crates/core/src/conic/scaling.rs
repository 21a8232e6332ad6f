//! Ruiz-style diagonal equilibration.
//!
//! Scaled data: `A' = D A E`, `b' = sb D b`, `c' = sc E c`. Row factors are
//! constant over every second-order block so the cone is preserved. The
//! original variables are recovered as `x = E x' / sb`, `s = D^-1 s' / sb`,
//! `y = D y' / sc`.

use super::cones::Cone;
use super::sparse::{norm_inf, CscMatrix};

const ROUNDS: usize = 10;
const MIN_SCALE: f64 = 1e-4;
const MAX_SCALE: f64 = 1e4;

#[derive(Debug, Clone)]
pub(crate) struct Equilibration {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub sb: f64,
    pub sc: f64,
}

impl Equilibration {
    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            d: vec![1.0; m],
            e: vec![1.0; n],
            sb: 1.0,
            sc: 1.0,
        }
    }

    /// Computes scaling factors and applies them to `(a, b, c)` in place.
    pub fn apply(a: &mut CscMatrix, b: &mut [f64], c: &mut [f64], cones: &[Cone], scale_vectors: bool) -> Self {
        let (m, n) = (a.nrows, a.ncols);
        let mut eq = Self::identity(n, m);
        let mut blocks = Vec::new();
        let mut start = 0;
        for cone in cones {
            if matches!(cone, Cone::SecondOrder(_) | Cone::RotatedSecondOrder(_)) {
                blocks.push(start..start + cone.dim());
            }
            start += cone.dim();
        }
        for _ in 0..ROUNDS {
            let mut rn = a.row_norms_inf();
            for r in &blocks {
                let mx = rn[r.clone()].iter().copied().fold(0.0, f64::max);
                rn[r.clone()].iter_mut().for_each(|v| *v = mx);
            }
            let cn = a.col_norms_inf();
            let dr: Vec<f64> = rn.iter().map(|&v| step(v)).collect();
            let dc: Vec<f64> = cn.iter().map(|&v| step(v)).collect();
            a.scale(&dr, &dc);
            for i in 0..m {
                eq.d[i] *= dr[i];
            }
            for j in 0..n {
                eq.e[j] *= dc[j];
            }
        }
        for i in 0..m {
            b[i] *= eq.d[i];
        }
        for j in 0..n {
            c[j] *= eq.e[j];
        }
        if scale_vectors {
            eq.sc = 1.0 / norm_inf(c).clamp(MIN_SCALE, MAX_SCALE);
            eq.sb = 1.0 / norm_inf(b).clamp(MIN_SCALE, MAX_SCALE);
            c.iter_mut().for_each(|v| *v *= eq.sc);
            b.iter_mut().for_each(|v| *v *= eq.sb);
        }
        eq
    }

    pub fn unscale_x(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().zip(&self.e).map(|(x, e)| x * e / self.sb).collect()
    }

    pub fn unscale_s(&self, ss: &[f64]) -> Vec<f64> {
        ss.iter().zip(&self.d).map(|(s, d)| s / (d * self.sb)).collect()
    }

    pub fn unscale_y(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().zip(&self.d).map(|(y, d)| y * d / self.sc).collect()
    }
}

fn step(norm: f64) -> f64 {
    if norm <= 0.0 {
        1.0
    } else {
        (1.0 / norm.sqrt()).clamp(MIN_SCALE, MAX_SCALE)
    }
}
