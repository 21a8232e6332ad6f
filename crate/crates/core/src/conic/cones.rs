//! Cone descriptors and Euclidean projections.
//!
//! Rotated second-order cones use the convention
//! `{(u, v, w) : 2 u v >= |w|^2, u >= 0, v >= 0}`. The map
//! `(u, v, w) -> ((u + v)/sqrt2, (u - v)/sqrt2, w)` is a symmetric orthogonal
//! involution taking it onto the standard second-order cone, so projections
//! are computed by conjugation.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cone {
    /// `{0}^n`, equality rows.
    Zero(usize),
    /// `R_+^n`
    Nonnegative(usize),
    /// `{(t, x) : |x| <= t}`, dimension counts `t`.
    SecondOrder(usize),
    /// `{(u, v, w) : 2uv >= |w|^2, u, v >= 0}`, dimension counts `u` and `v`.
    RotatedSecondOrder(usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum ConeError {
    #[error("vector of length {got} does not match cone dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{kind} cone requires dimension at least {min}, got {got}")]
    TooSmall { kind: &'static str, min: usize, got: usize },
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::Nonnegative(d) | Cone::SecondOrder(d) | Cone::RotatedSecondOrder(d) => d,
        }
    }

    pub fn validate(&self) -> Result<(), ConeError> {
        match *self {
            Cone::SecondOrder(d) if d < 1 => Err(ConeError::TooSmall {
                kind: "second-order",
                min: 1,
                got: d,
            }),
            Cone::RotatedSecondOrder(d) if d < 2 => Err(ConeError::TooSmall {
                kind: "rotated second-order",
                min: 2,
                got: d,
            }),
            _ => Ok(()),
        }
    }

    /// Barrier degree contributed to an interior-point method.
    pub fn degree(&self) -> usize {
        match *self {
            Cone::Zero(_) => 0,
            Cone::Nonnegative(d) => d,
            Cone::SecondOrder(_) | Cone::RotatedSecondOrder(_) => 1,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Cone::Zero(_) => "z",
            Cone::Nonnegative(_) => "l",
            Cone::SecondOrder(_) => "q",
            Cone::RotatedSecondOrder(_) => "r",
        }
    }

    pub fn parse(token: &str) -> Option<Cone> {
        let (tag, dim) = token.split_once(':')?;
        let dim: usize = dim.parse().ok()?;
        match tag {
            "z" => Some(Cone::Zero(dim)),
            "l" => Some(Cone::Nonnegative(dim)),
            "q" => Some(Cone::SecondOrder(dim)),
            "r" => Some(Cone::RotatedSecondOrder(dim)),
            _ => None,
        }
    }
}

impl fmt::Display for Cone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.tag(), self.dim())
    }
}

/// Applies the rotation between rotated and standard second-order cone
/// coordinates. The map is its own inverse.
pub fn rotate_in_place(v: &mut [f64]) {
    let (a, b) = (v[0], v[1]);
    v[0] = FRAC_1_SQRT_2 * (a + b);
    v[1] = FRAC_1_SQRT_2 * (a - b);
}

fn project_soc_in_place(v: &mut [f64]) {
    let t = v[0];
    let nx = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    if nx <= t {
        return;
    }
    if nx <= -t {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let a = 0.5 * (t + nx);
    v[0] = a;
    let s = a / nx;
    v[1..].iter_mut().for_each(|x| *x *= s);
}

/// Projects `v` onto `cone` in place. Dimensions are assumed to match.
pub fn project_in_place(cone: &Cone, v: &mut [f64]) {
    match cone {
        Cone::Zero(_) => v.iter_mut().for_each(|x| *x = 0.0),
        Cone::Nonnegative(_) => v.iter_mut().for_each(|x| *x = x.max(0.0)),
        Cone::SecondOrder(_) => project_soc_in_place(v),
        Cone::RotatedSecondOrder(_) => {
            rotate_in_place(v);
            project_soc_in_place(v);
            rotate_in_place(v);
        }
    }
}

/// Projection onto the dual cone. All cones here are self-dual except the
/// zero cone, whose dual is the whole space.
pub fn project_dual_in_place(cone: &Cone, v: &mut [f64]) {
    match cone {
        Cone::Zero(_) => {}
        _ => project_in_place(cone, v),
    }
}

/// Euclidean projection of `v` onto `cone`.
pub fn project_cone(cone: &Cone, v: &[f64]) -> Result<Vec<f64>, ConeError> {
    cone.validate()?;
    if v.len() != cone.dim() {
        return Err(ConeError::DimensionMismatch {
            expected: cone.dim(),
            got: v.len(),
        });
    }
    let mut out = v.to_vec();
    project_in_place(cone, &mut out);
    Ok(out)
}

/// Distance-style membership margin: nonnegative iff `v` lies in the cone.
pub fn margin(cone: &Cone, v: &[f64]) -> f64 {
    match cone {
        Cone::Zero(_) => -v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        Cone::Nonnegative(_) => v.iter().copied().fold(f64::INFINITY, f64::min),
        Cone::SecondOrder(_) => v[0] - v[1..].iter().map(|x| x * x).sum::<f64>().sqrt(),
        Cone::RotatedSecondOrder(_) => {
            let mut w = v.to_vec();
            rotate_in_place(&mut w);
            w[0] - w[1..].iter().map(|x| x * x).sum::<f64>().sqrt()
        }
    }
}
