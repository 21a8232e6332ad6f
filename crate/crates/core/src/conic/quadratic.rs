//! Epigraph reformulation of convex quadratic objectives.
//!
//! Each connected block `S` of the quadratic part is factored as
//! `S = F'F` and replaced by a fresh column `t` with `(t, 1, F x_S)` in the
//! rotated second-order cone, i.e. `t >= (1/2) x_S' S x_S`. New columns and
//! rows are appended after the existing ones, so column and row indices of
//! the original program remain valid.

use super::cones::Cone;
use super::program::{ConicProgram, ProgramError};
use super::sparse::CscMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadraticError {
    #[error("quadratic part is not positive semidefinite (eigenvalue {eigenvalue:.3e} on block starting at column {column})")]
    NotPsd { column: usize, eigenvalue: f64 },
    #[error(transparent)]
    Program(#[from] ProgramError),
}

/// Returns an equivalent program with a linear objective.
pub fn reformulate_quadratic(program: &ConicProgram) -> Result<ConicProgram, QuadraticError> {
    program.validate()?;
    let Some(p) = program.p.as_ref().filter(|_| program.has_quadratic()) else {
        return Ok(program.clone());
    };
    let n = program.n();
    let m = program.m();

    // Symmetric adjacency over the nonzero pattern.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut active = vec![false; n];
    for (r, c, v) in p.triplets() {
        if v == 0.0 {
            continue;
        }
        active[r] = true;
        active[c] = true;
        if r != c {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if !active[start] || comp[start] != usize::MAX {
            continue;
        }
        let id = blocks.len();
        let mut stack = vec![start];
        comp[start] = id;
        let mut members = Vec::new();
        while let Some(u) = stack.pop() {
            members.push(u);
            for &v in &adj[u] {
                if comp[v] == usize::MAX {
                    comp[v] = id;
                    stack.push(v);
                }
            }
        }
        members.sort_unstable();
        blocks.push(members);
    }

    let mut trip: Vec<(usize, usize, f64)> = program.a.triplets().collect();
    let mut b = program.b.clone();
    let mut c = program.c.clone();
    let mut cones = program.cones.clone();
    let mut next_col = n;
    let mut next_row = m;

    for members in &blocks {
        let k = members.len();
        let mut local = vec![usize::MAX; n];
        for (i, &g) in members.iter().enumerate() {
            local[g] = i;
        }
        let mut s = vec![vec![0.0; k]; k];
        for &g in members {
            for (r, v) in p.col(g) {
                if local[r] != usize::MAX {
                    let (i, j) = (local[r], local[g]);
                    s[i][j] += v;
                    if i != j {
                        s[j][i] += v;
                    }
                }
            }
        }
        let factor_rows = psd_factor(&s).map_err(|eigenvalue| QuadraticError::NotPsd {
            column: members[0],
            eigenvalue,
        })?;
        if factor_rows.is_empty() {
            continue;
        }
        let t = next_col;
        next_col += 1;
        c.push(1.0);
        // u = t
        trip.push((next_row, t, -1.0));
        b.push(0.0);
        // v = 1
        b.push(1.0);
        // w = F x
        for (r, row) in factor_rows.iter().enumerate() {
            for (i, &f) in row.iter().enumerate() {
                if f != 0.0 {
                    trip.push((next_row + 2 + r, members[i], -f));
                }
            }
            b.push(0.0);
        }
        let dim = 2 + factor_rows.len();
        cones.push(Cone::RotatedSecondOrder(dim));
        next_row += dim;
    }

    let a = CscMatrix::from_triplets(next_row, next_col, &trip);
    Ok(ConicProgram::new(c, a, b, cones)?.with_offset(program.offset))
}

/// Factors a symmetric PSD matrix as `F'F`, returning the rows of `F`.
/// Returns the most negative eigenvalue on failure.
fn psd_factor(s: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, f64> {
    let k = s.len();
    if k == 1 {
        let v = s[0][0];
        let tol = 1e-12 * v.abs().max(1.0);
        return if v < -tol {
            Err(v)
        } else if v <= tol {
            Ok(Vec::new())
        } else {
            Ok(vec![vec![v.sqrt()]])
        };
    }
    let (vals, vecs) = jacobi_eigen(s);
    let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale;
    if let Some(&neg) = vals.iter().find(|&&v| v < -tol) {
        return Err(neg);
    }
    Ok(vals
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > tol)
        .map(|(j, &v)| (0..k).map(|i| v.sqrt() * vecs[i][j]).collect())
        .collect())
}

/// Cyclic Jacobi eigenvalue iteration for small dense symmetric matrices.
/// Returns eigenvalues and eigenvectors stored as columns.
fn jacobi_eigen(s: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = s.len();
    let mut a: Vec<Vec<f64>> = s.to_vec();
    let mut v = vec![vec![0.0; k]; k];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..k)
            .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..k).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for r in 0..k {
                    let (arp, arq) = (a[r][p], a[r][q]);
                    a[r][p] = c * arp - sn * arq;
                    a[r][q] = sn * arp + c * arq;
                }
                for r in 0..k {
                    let (apr, aqr) = (a[p][r], a[q][r]);
                    a[p][r] = c * apr - sn * aqr;
                    a[q][r] = sn * apr + c * aqr;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - sn * vq;
                    row[q] = sn * vp + c * vq;
                }
            }
        }
    }
    ((0..k).map(|i| a[i][i]).collect(), v)
}
