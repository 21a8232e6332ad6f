//! Solve driver: presolve, equilibration, iteration, and recovery.
//!
//! Termination is always judged on the original program. An iterate is
//! accepted only when the unscaled reduced point and its postsolved
//! expansion both satisfy the configured residual tolerances.

use super::cones::{rotate_in_place, Cone};
use super::ldl::LdlError;
use super::presolve::{presolve, PresolveOutcome, Reduced};
use super::program::{ConicProgram, ProgramError};
use super::quadratic::{reformulate_quadratic, QuadraticError};
use super::scaling::Equilibration;
use super::solution::{residuals, ConfigError, Method, Solution, SolverConfig, Status};
use super::sparse::{dot, norm2, CscMatrix};
use super::{admm, ipm};
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error("program has a quadratic objective; reformulate it first")]
    QuadraticObjective,
    #[error(transparent)]
    Quadratic(#[from] QuadraticError),
    #[error("program has no variables")]
    Empty,
    #[error("KKT factorization failed: {0}")]
    Factorization(#[from] LdlError),
}

struct Recovery<'a> {
    original: &'a ConicProgram,
    reduced: &'a Reduced,
    reduced_program: ConicProgram,
    eq: Equilibration,
    rotated: Vec<Range<usize>>,
    config: &'a SolverConfig,
    /// Program with a quadratic objective whose epigraph form is solved.
    outer: Option<&'a ConicProgram>,
}

impl Recovery<'_> {
    fn unscale(&self, x: &[f64], y: &[f64], s: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let x = self.eq.unscale_x(x);
        let mut y = self.eq.unscale_y(y);
        let mut s = self.eq.unscale_s(s);
        for r in &self.rotated {
            rotate_in_place(&mut y[r.clone()]);
            rotate_in_place(&mut s[r.clone()]);
        }
        (x, y, s)
    }

    fn within(&self, (p, d, g): (f64, f64, f64)) -> bool {
        p <= self.config.tol_primal && d <= self.config.tol_dual && g <= self.config.tol_gap
    }
}

impl ipm::Monitor for Recovery<'_> {
    fn converged(&self, x: &[f64], y: &[f64], s: &[f64]) -> bool {
        let (xr, yr, sr) = self.unscale(x, y, s);
        if !residuals(&self.reduced_program, &xr, &yr, &sr).is_ok_and(|r| self.within(r)) {
            return false;
        }
        let (xo, yo, so) = self.reduced.postsolve(self.original, &xr, &yr, &sr);
        if !residuals(self.original, &xo, &yo, &so).is_ok_and(|r| self.within(r)) {
            return false;
        }
        match self.outer {
            None => true,
            Some(q) => {
                let (n, m) = (q.n(), q.m());
                residuals(q, &xo[..n], &yo[..m], &so[..m]).is_ok_and(|r| self.within(r))
            }
        }
    }

    fn primal_infeasible(&self, y: &[f64]) -> bool {
        let p = &self.reduced_program;
        let yr = {
            let mut v = self.eq.unscale_y(y);
            for r in &self.rotated {
                rotate_in_place(&mut v[r.clone()]);
            }
            v
        };
        let by = dot(&p.b, &yr);
        by < 0.0 && norm2(&p.a.mul_t_vec(&yr)) <= self.config.tol_infeasible * -by
    }

    fn dual_infeasible(&self, x: &[f64], s: &[f64]) -> bool {
        let p = &self.reduced_program;
        let (xr, _, sr) = self.unscale(x, &vec![0.0; s.len()], s);
        let cx = dot(&p.c, &xr);
        let mut r = sr;
        p.a.gemv(1.0, &xr, &mut r);
        cx < 0.0 && norm2(&r) <= self.config.tol_infeasible * -cx
    }
}

/// Rotated cone rows mapped onto standard second-order cone coordinates.
fn rotate_rows(a: &CscMatrix, b: &mut [f64], cones: &[Cone]) -> (CscMatrix, Vec<Cone>, Vec<Range<usize>>) {
    let mut row_pair = vec![usize::MAX; a.nrows];
    let mut rotated = Vec::new();
    let mut out_cones = Vec::with_capacity(cones.len());
    let mut start = 0;
    for cone in cones {
        if let Cone::RotatedSecondOrder(d) = *cone {
            row_pair[start] = start + 1;
            row_pair[start + 1] = start;
            rotated.push(start..start + d);
            rotate_in_place(&mut b[start..start + d]);
            out_cones.push(Cone::SecondOrder(d));
        } else {
            out_cones.push(*cone);
        }
        start += cone.dim();
    }
    if rotated.is_empty() {
        return (a.clone(), out_cones, rotated);
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut trip = Vec::with_capacity(a.nnz() * 2);
    for (r, c, v) in a.triplets() {
        let other = row_pair[r];
        if other == usize::MAX {
            trip.push((r, c, v));
        } else {
            let (lo, hi) = (r.min(other), r.max(other));
            // row lo' = (lo + hi)/sqrt2, row hi' = (lo - hi)/sqrt2
            trip.push((lo, c, h * v));
            trip.push((hi, c, if r == lo { h * v } else { -h * v }));
        }
    }
    (CscMatrix::from_triplets(a.nrows, a.ncols, &trip), out_cones, rotated)
}

fn finish(program: &ConicProgram, x: Vec<f64>, y: Vec<f64>, s: Vec<f64>, status: Status, iterations: usize) -> Solution {
    let (primal_residual, dual_residual, gap) = residuals(program, &x, &y, &s).unwrap_or((f64::NAN, f64::NAN, f64::NAN));
    let objective = match status {
        Status::Optimal | Status::MaxIterations => program.objective(&x),
        Status::InfeasibleDetected => f64::INFINITY,
        Status::UnboundedDetected => f64::NEG_INFINITY,
    };
    Solution {
        x,
        y,
        s,
        status,
        primal_residual,
        dual_residual,
        gap,
        iterations,
        objective,
    }
}

/// Solves a conic program with a linear objective.
pub fn solve(program: &ConicProgram, config: &SolverConfig) -> Result<Solution, SolveError> {
    solve_inner(program, config, None)
}

fn solve_inner(program: &ConicProgram, config: &SolverConfig, outer: Option<&ConicProgram>) -> Result<Solution, SolveError> {
    config.validate()?;
    program.validate()?;
    if program.has_quadratic() {
        return Err(SolveError::QuadraticObjective);
    }
    if program.n() == 0 {
        return Err(SolveError::Empty);
    }
    let (n, m) = (program.n(), program.m());
    let reduced = match presolve(program) {
        Ok(r) => r,
        Err(outcome) => {
            let status = match outcome {
                PresolveOutcome::Infeasible => Status::InfeasibleDetected,
                PresolveOutcome::Unbounded => Status::UnboundedDetected,
            };
            return Ok(finish(program, vec![0.0; n], vec![0.0; m], vec![0.0; m], status, 0));
        }
    };
    if reduced.is_trivial() {
        let (x, y, s) = reduced.postsolve(program, &[], &[], &[]);
        let mut sol = finish(program, x, y, s, Status::Optimal, 0);
        if !(sol.primal_residual <= config.tol_primal && sol.dual_residual <= config.tol_dual && sol.gap <= config.tol_gap)
        {
            sol.status = Status::MaxIterations;
        }
        return Ok(sol);
    }

    let reduced_program = ConicProgram::new(reduced.c.clone(), reduced.a.clone(), reduced.b.clone(), reduced.cones.clone())?;
    let mut b = reduced.b.clone();
    let mut c = reduced.c.clone();
    let (mut a, cones, rotated) = match config.method {
        Method::InteriorPoint => rotate_rows(&reduced.a, &mut b, &reduced.cones),
        Method::OperatorSplitting => (reduced.a.clone(), reduced.cones.clone(), Vec::new()),
    };
    let eq = if config.scaling {
        Equilibration::apply(&mut a, &mut b, &mut c, &cones, true)
    } else {
        Equilibration::identity(a.ncols, a.nrows)
    };
    let recovery = Recovery {
        original: program,
        reduced: &reduced,
        reduced_program,
        eq,
        rotated,
        config,
        outer,
    };
    let outcome = match config.method {
        Method::InteriorPoint => ipm::solve(&c, &a, &b, &cones, config.max_iter, &recovery)?,
        Method::OperatorSplitting => {
            admm::solve(&c, &a, &b, &cones, config.max_iter, config.over_relaxation, &recovery)?
        }
    };
    log::debug!(
        "{:?} finished after {} iterations with {}",
        config.method,
        outcome.iterations,
        outcome.status.as_str()
    );
    let (xr, yr, sr) = recovery.unscale(&outcome.x, &outcome.y, &outcome.s);
    let (x, y, s) = match outcome.status {
        Status::Optimal | Status::MaxIterations => reduced.postsolve(program, &xr, &yr, &sr),
        Status::InfeasibleDetected | Status::UnboundedDetected => reduced.expand(program, &xr, &yr, &sr),
    };
    let mut sol = finish(program, x, y, s, outcome.status, outcome.iterations);
    if sol.status == Status::Optimal
        && !(sol.primal_residual <= config.tol_primal && sol.dual_residual <= config.tol_dual && sol.gap <= config.tol_gap)
    {
        sol.status = Status::MaxIterations;
    }
    Ok(sol)
}

/// Solves a program whose objective may carry a convex quadratic part.
///
/// The epigraph reformulation is solved and its extra columns and rows are
/// dropped again; residuals and objective refer to `program` itself.
pub fn solve_quadratic(program: &ConicProgram, config: &SolverConfig) -> Result<Solution, SolveError> {
    if !program.has_quadratic() {
        return solve(program, config);
    }
    let epi = reformulate_quadratic(program)?;
    let inner = solve_inner(&epi, config, Some(program))?;
    let (n, m) = (program.n(), program.m());
    let x = inner.x[..n].to_vec();
    let y = inner.y[..m].to_vec();
    let s = inner.s[..m].to_vec();
    let mut sol = finish(program, x, y, s, inner.status, inner.iterations);
    if sol.status == Status::Optimal
        && !(sol.primal_residual <= config.tol_primal && sol.dual_residual <= config.tol_dual && sol.gap <= config.tol_gap)
    {
        sol.status = Status::MaxIterations;
    }
    Ok(sol)
}
