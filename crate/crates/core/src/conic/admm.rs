//! Operator splitting (ADMM) on the homogeneous self-dual embedding.
//!
//! `u = (x, y, tau)` and `v = (r, s, kappa)` iterate as
//!
//! ```text
//! u~ = (I + Q)^-1 (u + v)
//! u  = proj_C(alpha u~ + (1 - alpha) u - v)
//! v  = v - (alpha u~ + (1 - alpha) u) + u
//! ```
//!
//! with `C = R^n x K* x R+`. The linear system reduces to one quasi-definite
//! matrix `[[I, A'], [A, -I]]` that is factored once.

use super::cones::{project_dual_in_place, Cone};
use super::ipm::{Monitor, Outcome};
use super::ldl::{LdlError, LdlFactor, Regularization};
use super::solution::Status;
use super::sparse::{dot, CscMatrix};

const CHECK_EVERY: usize = 10;

fn kkt_upper(a: &CscMatrix) -> CscMatrix {
    let (m, n) = (a.nrows, a.ncols);
    let at = a.transpose();
    let mut colptr = vec![0];
    let mut rowval = Vec::with_capacity(n + m + a.nnz());
    let mut nzval = Vec::with_capacity(n + m + a.nnz());
    for j in 0..n {
        rowval.push(j);
        nzval.push(1.0);
        colptr.push(rowval.len());
    }
    for i in 0..m {
        for (j, v) in at.col(i) {
            rowval.push(j);
            nzval.push(v);
        }
        rowval.push(n + i);
        nzval.push(-1.0);
        colptr.push(rowval.len());
    }
    CscMatrix {
        nrows: n + m,
        ncols: n + m,
        colptr,
        rowval,
        nzval,
    }
}

pub(crate) fn solve(
    c: &[f64],
    a: &CscMatrix,
    b: &[f64],
    cones: &[Cone],
    max_iter: usize,
    alpha: f64,
    monitor: &dyn Monitor,
) -> Result<Outcome, LdlError> {
    let (m, n) = (a.nrows, a.ncols);
    let signs: Vec<f64> = (0..n + m).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
    let factor = LdlFactor::new(&kkt_upper(a), &signs, Regularization::default())?;

    let mut q = Vec::with_capacity(n + m);
    q.extend_from_slice(c);
    q.extend(b.iter().map(|v| -v));
    factor.solve(&mut q);
    let q_den = 1.0 + dot(c, &q[..n]) + dot(b, &q[n..]);

    let ranges: Vec<_> = {
        let mut start = 0;
        cones
            .iter()
            .map(|k| {
                let r = start..start + k.dim();
                start += k.dim();
                r
            })
            .collect()
    };

    // u = (x, y, tau), v = (r, s, kappa)
    let mut u = vec![0.0; n + m + 1];
    let mut v = vec![0.0; n + m + 1];
    u[n + m] = 1.0;
    v[n + m] = 1.0;
    let mut ut = vec![0.0; n + m + 1];
    let mut p = vec![0.0; n + m];

    for iter in 0..=max_iter {
        if iter % CHECK_EVERY == 0 || iter == max_iter {
            let tau = u[n + m];
            let kappa = v[n + m];
            if tau > 0.0 {
                let inv = 1.0 / tau;
                let xs: Vec<f64> = u[..n].iter().map(|x| x * inv).collect();
                let ys: Vec<f64> = u[n..n + m].iter().map(|x| x * inv).collect();
                let ss: Vec<f64> = v[n..n + m].iter().map(|x| x * inv).collect();
                if monitor.converged(&xs, &ys, &ss) {
                    return Ok(Outcome {
                        x: xs,
                        y: ys,
                        s: ss,
                        status: Status::Optimal,
                        iterations: iter,
                    });
                }
                if iter == max_iter {
                    return Ok(Outcome {
                        x: xs,
                        y: ys,
                        s: ss,
                        status: Status::MaxIterations,
                        iterations: iter,
                    });
                }
            }
            if kappa > tau {
                let y = &u[n..n + m];
                let by = dot(b, y);
                if by < 0.0 && monitor.primal_infeasible(y) {
                    return Ok(Outcome {
                        x: vec![0.0; n],
                        y: y.iter().map(|v| v / -by).collect(),
                        s: vec![0.0; m],
                        status: Status::InfeasibleDetected,
                        iterations: iter,
                    });
                }
                let x = &u[..n];
                let s = &v[n..n + m];
                let cx = dot(c, x);
                if cx < 0.0 && monitor.dual_infeasible(x, s) {
                    return Ok(Outcome {
                        x: x.iter().map(|v| v / -cx).collect(),
                        y: vec![0.0; m],
                        s: s.iter().map(|v| v / -cx).collect(),
                        status: Status::UnboundedDetected,
                        iterations: iter,
                    });
                }
            }
            if iter == max_iter {
                return Ok(Outcome {
                    x: vec![0.0; n],
                    y: vec![0.0; m],
                    s: vec![0.0; m],
                    status: Status::MaxIterations,
                    iterations: iter,
                });
            }
        }

        // linear step
        for j in 0..n {
            p[j] = u[j] + v[j];
        }
        for i in 0..m {
            p[n + i] = -(u[n + i] + v[n + i]);
        }
        let w_tau = u[n + m] + v[n + m];
        factor.solve(&mut p);
        let tau_t = (w_tau + dot(c, &p[..n]) + dot(b, &p[n..])) / q_den;
        for k in 0..n + m {
            ut[k] = p[k] - tau_t * q[k];
        }
        ut[n + m] = tau_t;

        // projection step with over-relaxation
        let mut relaxed = vec![0.0; n + m + 1];
        for k in 0..n + m + 1 {
            relaxed[k] = alpha * ut[k] + (1.0 - alpha) * u[k];
            u[k] = relaxed[k] - v[k];
        }
        for (cone, r) in cones.iter().zip(&ranges) {
            project_dual_in_place(cone, &mut u[n + r.start..n + r.end]);
        }
        u[n + m] = u[n + m].max(0.0);

        for k in 0..n + m + 1 {
            v[k] += u[k] - relaxed[k];
        }
    }
    unreachable!("loop returns at the iteration limit")
}
