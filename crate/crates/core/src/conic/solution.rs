use super::program::ConicProgram;
use super::sparse::{dot, norm2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    MaxIterations,
    InfeasibleDetected,
    UnboundedDetected,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::MaxIterations => "max-iterations",
            Status::InfeasibleDetected => "infeasible-detected",
            Status::UnboundedDetected => "unbounded-detected",
        }
    }
}

/// Which iteration scheme `solve` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Homogeneous self-dual embedding, primal-dual interior point with
    /// Nesterov-Todd scaling and Mehrotra correction.
    InteriorPoint,
    /// Operator splitting (ADMM) on the homogeneous self-dual embedding.
    OperatorSplitting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub tol_gap: f64,
    pub max_iter: usize,
    /// Over-relaxation for operator splitting, in (0, 2).
    pub over_relaxation: f64,
    /// Diagonal equilibration of the problem data.
    pub scaling: bool,
    pub method: Method,
    /// Threshold of the certificate ray test.
    pub tol_infeasible: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            tol_gap: 1e-6,
            max_iter: 100_000,
            over_relaxation: 1.6,
            scaling: true,
            method: Method::InteriorPoint,
            tol_infeasible: 1e-7,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("tolerance {name} must be positive, got {value}")]
    Tolerance { name: &'static str, value: f64 },
    #[error("over-relaxation must lie in (0, 2), got {0}")]
    OverRelaxation(f64),
    #[error("iteration limit must be positive")]
    MaxIter,
}

impl SolverConfig {
    /// Same config with all three convergence tolerances set to `tol`.
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol_primal = tol;
        self.tol_dual = tol;
        self.tol_gap = tol;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("primal", self.tol_primal),
            ("dual", self.tol_dual),
            ("gap", self.tol_gap),
            ("infeasible", self.tol_infeasible),
        ] {
            if !(value > 0.0) {
                return Err(ConfigError::Tolerance { name, value });
            }
        }
        if !(self.over_relaxation > 0.0 && self.over_relaxation < 2.0) {
            return Err(ConfigError::OverRelaxation(self.over_relaxation));
        }
        if self.max_iter == 0 {
            return Err(ConfigError::MaxIter);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub status: Status,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
    /// Primal objective value including the program offset.
    pub objective: f64,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("dimension mismatch: program is {n}x{m}, got x {x}, y {y}, s {s}")]
pub struct ResidualError {
    pub n: usize,
    pub m: usize,
    pub x: usize,
    pub y: usize,
    pub s: usize,
}

/// Relative residuals of a primal-dual point:
/// `|Ax + s - b| / (1 + |b|)`, `|Px + A'y + c| / (1 + |c|)` and
/// `|x'Px + c'x + b'y| / (1 + |c'x| + |b'y|)`.
pub fn residuals(program: &ConicProgram, x: &[f64], y: &[f64], s: &[f64]) -> Result<(f64, f64, f64), ResidualError> {
    let (n, m) = (program.n(), program.m());
    if x.len() != n || y.len() != m || s.len() != m {
        return Err(ResidualError {
            n,
            m,
            x: x.len(),
            y: y.len(),
            s: s.len(),
        });
    }
    let mut rp: Vec<f64> = s.iter().zip(&program.b).map(|(si, bi)| si - bi).collect();
    program.a.gemv(1.0, x, &mut rp);
    let mut rd = program.c.clone();
    program.a.gemv_t(1.0, y, &mut rd);
    let mut xpx = 0.0;
    if let Some(p) = &program.p {
        let mut px = vec![0.0; n];
        for (r, c, v) in p.triplets() {
            px[r] += v * x[c];
            if r != c {
                px[c] += v * x[r];
            }
        }
        xpx = dot(x, &px);
        for (d, v) in rd.iter_mut().zip(px) {
            *d += v;
        }
    }
    let cx = dot(&program.c, x);
    let by = dot(&program.b, y);
    let primal = norm2(&rp) / (1.0 + norm2(&program.b));
    let dual = norm2(&rd) / (1.0 + norm2(&program.c));
    let gap = (xpx + cx + by).abs() / (1.0 + cx.abs() + by.abs());
    Ok((primal, dual, gap))
}

/// Residuals of a solution object against a program.
pub fn solution_residuals(program: &ConicProgram, sol: &Solution) -> Result<(f64, f64, f64), ResidualError> {
    residuals(program, &sol.x, &sol.y, &sol.s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::cones::Cone;
    use crate::conic::sparse::CscMatrix;

    // min x s.t. x >= 1  written as  -x + s = -1, s >= 0
    fn lp() -> ConicProgram {
        ConicProgram::new(
            vec![1.0],
            CscMatrix::from_triplets(1, 1, &[(0, 0, -1.0)]),
            vec![-1.0],
            vec![Cone::Nonnegative(1)],
        )
        .unwrap()
    }

    #[test]
    fn exact_optimum_has_zero_residuals() {
        let (p, d, g) = residuals(&lp(), &[1.0], &[1.0], &[0.0]).unwrap();
        assert!(p <= 1e-12 && d <= 1e-12 && g <= 1e-12);
    }

    #[test]
    fn perturbed_primal_grows_primal_residual() {
        let (p, _, _) = residuals(&lp(), &[1.0 + 1e-3], &[1.0], &[0.0]).unwrap();
        // |(-1.001) + 0 + 1| / (1 + 1)
        assert!((p - 5e-4).abs() < 1e-15);
    }

    #[test]
    fn mismatched_dimensions_error() {
        assert!(residuals(&lp(), &[1.0, 2.0], &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            over_relaxation: 2.0,
            ..SolverConfig::default()
        };
        assert_eq!(bad.validate(), Err(ConfigError::OverRelaxation(2.0)));
        let bad = SolverConfig::default().with_tolerance(0.0);
        assert!(bad.validate().is_err());
    }
}
